"""
Manufactured solutions, discrete error norms and the refinement study
producing rate tables.
"""
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .ddsolver import DDSystem, Problem, solve
from .exceptions import ConvergenceError
from .mesh import GAUSS3_POINTS, GAUSS3_WEIGHTS, decompose
from .mortar import FLAT, MortarSpace
from .permeability import Permeability

logger = logging.getLogger(__name__)

RATE_COLUMNS = ('h_min', 'e_u', 'r_u', 'e_p', 'r_p', 'e_lambda', 'r_lambda', 'e_Qlambda', 'r_Qlambda', 'iters')
ERROR_KEYS = ('e_u', 'e_p', 'e_lambda', 'e_Qlambda')


@dataclass
class ManufacturedCase:
    """
    Closed-form pressure with constant permeability K; velocity u = -K grad p
    and source f = div u are coded alongside.
    """
    name: str
    pressure: object
    gradient: object
    source: object
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    extent: tuple = (0.0, 2.0, 0.0, 2.0)

    def velocity(self, x, y):
        px, py = self.gradient(x, y)
        return -(self.K[0, 0] * px + self.K[0, 1] * py), -(self.K[1, 0] * px + self.K[1, 1] * py)

    def permeability(self):
        return Permeability('tensor', tensor=self.K)

    def problem(self, neumann_sides=()):
        return Problem(self.source, self.pressure, self.velocity, frozenset(neumann_sides))


def example1_case():
    """p = y^2 (1 - y/3) + x (2 - x) y sin(2 pi x) on (0, 2)^2 with K = I."""
    two_pi = 2.0 * np.pi

    def pressure(x, y):
        return y ** 2 * (1.0 - y / 3.0) + x * (2.0 - x) * y * np.sin(two_pi * x)

    def gradient(x, y):
        s, c = np.sin(two_pi * x), np.cos(two_pi * x)
        px = y * ((2.0 - 2.0 * x) * s + two_pi * x * (2.0 - x) * c)
        py = 2.0 * y - y ** 2 + x * (2.0 - x) * s
        return px, py

    def source(x, y):
        s, c = np.sin(two_pi * x), np.cos(two_pi * x)
        pxx = y * (-2.0 * s + 2.0 * two_pi * (2.0 - 2.0 * x) * c - two_pi ** 2 * x * (2.0 - x) * s)
        pyy = 2.0 - 2.0 * y
        return -(pxx + pyy)

    return ManufacturedCase('example1', pressure, gradient, source)


def linear_case(a=1.0, b=0.0, c=0.0, K=None, extent=(0.0, 2.0, 0.0, 2.0)):
    """Affine pressure p = a x + b y + c; zero source for any constant K."""
    K = np.eye(2) if K is None else np.asarray(K, dtype=float)
    return ManufacturedCase(
        'linear',
        pressure=lambda x, y: a * x + b * y + c,
        gradient=lambda x, y: (a + 0.0 * x, b + 0.0 * y),
        source=lambda x, y: 0.0 * x,
        K=K,
        extent=tuple(extent),
    )


def _pressure_sq(mesh, p_h, case):
    """Squared L2 distance between the piecewise-constant p_h and the exact pressure."""
    p_h = np.asarray(p_h, dtype=float)
    exact_sq = mesh.cell_integrals(lambda x, y: case.pressure(x, y) ** 2)
    exact = mesh.cell_integrals(case.pressure)
    total = float(np.sum(exact_sq - 2.0 * p_h * exact + p_h ** 2 * mesh.cell_areas))
    return max(total, 0.0)


def _center_pressure_sq(mesh, p_h, case):
    x, y = mesh.cell_centers[:, 0], mesh.cell_centers[:, 1]
    return float(np.sum(mesh.cell_areas * (p_h - case.pressure(x, y)) ** 2))


def _flux_sq(mesh, fluxes, case):
    points, weights = mesh.facet_gauss_points()
    ux, uy = case.velocity(points[..., 0], points[..., 1])
    normals = mesh.facet_normals
    exact = ux * normals[:, 0:1] + uy * normals[:, 1:2]
    discrete = (fluxes / mesh.facet_lengths)[:, None]
    per_facet = np.sum(weights * (exact - discrete) ** 2, axis=1) / mesh.facet_lengths
    owners = mesh.facet_cells
    areas = mesh.cell_areas[owners[:, 0]] + np.where(owners[:, 1] >= 0, mesh.cell_areas[owners[:, 1]], 0.0)
    return float(np.sum(areas * per_facet))


def error_pressure(mesh, p_h, case):
    return np.sqrt(_pressure_sq(mesh, p_h, case))


def error_pressure_centers(mesh, p_h, case):
    """Area-weighted distance to the exact pressure sampled at cell centers."""
    return np.sqrt(_center_pressure_sq(mesh, p_h, case))


def error_flux(mesh, fluxes, case):
    return np.sqrt(_flux_sq(mesh, fluxes, case))


def error_pressure_dd(decomposition, pressures, case):
    return np.sqrt(sum(_pressure_sq(sub.mesh, p, case) for sub, p in zip(decomposition, pressures)))


def error_pressure_centers_dd(decomposition, pressures, case):
    return np.sqrt(sum(_center_pressure_sq(sub.mesh, p, case) for sub, p in zip(decomposition, pressures)))


def error_flux_dd(decomposition, fluxes, case):
    return np.sqrt(sum(_flux_sq(sub.mesh, u, case) for sub, u in zip(decomposition, fluxes)))


def exact_interface_flux(interface, case, s):
    points = interface.point(s)
    ux, uy = case.velocity(points[..., 0], points[..., 1])
    return ux * interface.normal[0] + uy * interface.normal[1]


def error_mortar(decomposition, space, mortar, case):
    """L2(Gamma) distance between the mortar and the exact normal flux."""
    total = 0.0
    for e, grid in zip(decomposition.interfaces, space.grids):
        for cell, h in enumerate(grid.cell_lengths):
            s = grid.breakpoints[cell] + GAUSS3_POINTS * h
            diff = exact_interface_flux(e, case, s) - space.evaluate(mortar, e.index, s)
            total += h * float(GAUSS3_WEIGHTS @ diff ** 2)
    return np.sqrt(total)


def error_projected_mortar(decomposition, coupling, mortar, case):
    """L2 distance on the trace facets between the exact outward flux and Q_i lambda, both sides summed."""
    total = 0.0
    for proj in coupling.interfaces:
        e = decomposition.interfaces[proj.interface]
        local = coupling.space.local(mortar, proj.interface)
        for side in proj.sides():
            values = side.Q @ local
            for (a, b), value in zip(side.trace.intervals, values):
                s = a + GAUSS3_POINTS * (b - a)
                diff = side.trace.sign * exact_interface_flux(e, case, s) - value
                total += (b - a) * float(GAUSS3_WEIGHTS @ diff ** 2)
    return np.sqrt(total)


def rate(e_coarse, e_fine, h_coarse, h_fine):
    """
    Observed order log(e_coarse / e_fine) / log(h_coarse / h_fine) between two
    levels. Under uniform refinement h halves and this is log2(e_coarse / e_fine).
    Returns 0 when h did not change.
    """
    if h_coarse == h_fine or e_coarse <= 0.0 or e_fine <= 0.0:
        return 0.0
    return float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine))


class RateTable:
    """
    Errors per refinement level. Each r_* column holds `rate` against the
    previous row, log(e_coarse / e_fine) / log(h_coarse / h_fine).
    """

    def __init__(self):
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def add(self, h_min, errors, iters, converged=True):
        row = {'h_min': float(h_min), 'iters': int(iters), 'converged': bool(converged)}
        previous = self.rows[-1] if self.rows else None
        for key in ERROR_KEYS:
            row[key] = float(errors[key])
            rate_key = 'r' + key[1:]
            if previous is None:
                row[rate_key] = None
            else:
                row[rate_key] = rate(previous[key], row[key], previous['h_min'], row['h_min'])
        self.rows.append(row)
        return row

    def column(self, key):
        return [row[key] for row in self.rows]

    def formatted_rows(self, precise=False):
        for row in self.rows:
            cells = []
            for key in RATE_COLUMNS:
                value = row[key]
                if value is None:
                    cells.append('')
                elif key == 'iters':
                    cells.append(str(value))
                else:
                    cells.append(f'{value:.17g}' if precise else f'{value:.2e}')
            yield cells

    def write_csv(self, path, precise=False):
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(RATE_COLUMNS)
            writer.writerows(self.formatted_rows(precise))
        logger.info('Wrote rate table %s', path)
        return path

    def as_dicts(self):
        return [dict(row) for row in self.rows]


@dataclass
class StudySettings:
    levels: int = 4
    element_kind: str = 'tri'
    variant: str = FLAT
    extent: tuple = (0.0, 2.0, 0.0, 2.0)
    subdomains: tuple = (3, 3)
    resolution: object = (6, 8)
    refinements: object = 0
    mortar_cells: int = 3
    mortar_degree: int = 1
    mortar_continuous: bool = True
    tol: float = 1e-10
    max_it: int = 500
    workers: int = 1
    eta: float = 0.0
    sigma_reject: float = 1e-8


def _level_refinements(base, level):
    if np.isscalar(base):
        return int(base) + level
    return [int(k) + level for k in base]


def convergence_study(settings, case=None, on_level=None):
    """
    Solve the manufactured problem on `levels` uniformly refined
    decompositions, doubling the mortar cells with every level.
    """
    case = example1_case() if case is None else case
    table = RateTable()
    reports = []
    permeability = case.permeability()
    problem = case.problem()
    for level in range(settings.levels):
        refinements = _level_refinements(settings.refinements, level)
        decomposition = decompose(settings.extent, settings.subdomains, settings.resolution,
                                  settings.element_kind, refinements=refinements)
        space = MortarSpace.build(decomposition, settings.mortar_cells * 2 ** level,
                                  settings.mortar_degree, settings.mortar_continuous)
        logger.info('Level %d: %d cells, %d mortar dofs, h_min=%.3e',
                    level, decomposition.num_cells, space.dim, decomposition.h_min)
        with DDSystem(decomposition, permeability, space, problem, settings.variant, settings.eta,
                      settings.tol, settings.max_it, workers=settings.workers,
                      sigma_reject=settings.sigma_reject) as system:
            try:
                solution = solve(system)
            except ConvergenceError as exc:
                logger.warning('Level %d did not converge: %s', level, exc.message)
                nan = {key: float('nan') for key in ERROR_KEYS}
                table.add(decomposition.h_min, nan, settings.max_it, converged=False)
                reports.append({'level': level, 'converged': False, 'error': exc.as_dict()['error']})
                continue
            errors = {
                'e_u': error_flux_dd(decomposition, solution.fluxes, case),
                'e_p': error_pressure_dd(decomposition, solution.pressures, case),
                'e_lambda': error_mortar(decomposition, space, solution.mortar, case),
                'e_Qlambda': error_projected_mortar(decomposition, system.coupling, solution.mortar, case),
            }
        row = table.add(decomposition.h_min, errors, solution.report.iterations)
        reports.append({'level': level, **solution.report.as_dict()})
        logger.info('Level %d: e_p=%.3e e_u=%.3e iterations=%d', level, row['e_p'], row['e_u'], row['iters'])
        if on_level is not None:
            on_level(level, decomposition, solution)
    return table, reports
