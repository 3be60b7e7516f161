"""
Flux-mortar domain decomposition driver.

The interface unknown is the mortar flux. A solve runs five stages: a coarse
problem making every floating subdomain's data compatible, local solves with
the source, projected conjugate gradients on the interface operator, a coarse
pressure correction, and the final local solves.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .exceptions import CompatibilityError
from .mortar import FLAT, CoarseOperator, MortarCoupling, apply_P, solve_coarse_step1, solve_coarse_step4
from .mpfa import DIRICHLET, NEUMANN, SubdomainOperator, solve_dirichlet

logger = logging.getLogger(__name__)

SIDES = ('left', 'right', 'bottom', 'top')
CONSERVATION_TOL = 1e-10


@dataclass
class Problem:
    """
    Source and outer boundary data. Sides listed in `neumann_sides` take the
    outward normal flux of `velocity`; all other sides take `pressure`.
    """
    source: object
    pressure: object = None
    velocity: object = None
    neumann_sides: frozenset = frozenset()

    def is_neumann(self, side):
        return side in self.neumann_sides


def outer_kinds(mesh, outer_sides, problem):
    """Boundary tags for a mesh whose outer facets are labelled by side."""
    kinds = np.zeros(mesh.num_facets, dtype=np.int8)
    kinds[mesh.boundary_facets] = NEUMANN
    for f, side in outer_sides.items():
        kinds[f] = NEUMANN if problem.is_neumann(side) else DIRICHLET
    return kinds


def outer_data(mesh, outer_sides, problem):
    """Facet pressures at midpoints (Dirichlet) or total outward fluxes by 3-point Gauss (Neumann)."""
    data = np.zeros(mesh.num_facets)
    dirichlet = [f for f, side in outer_sides.items() if not problem.is_neumann(side)]
    neumann = [f for f, side in outer_sides.items() if problem.is_neumann(side)]
    if dirichlet:
        centers = mesh.facet_centers[dirichlet]
        data[dirichlet] = problem.pressure(centers[:, 0], centers[:, 1])
    if neumann:
        points, weights = mesh.facet_gauss_points(neumann)
        ux, uy = problem.velocity(points[..., 0], points[..., 1])
        normals = mesh.facet_normals[neumann]
        data[neumann] = np.sum(weights * (ux * normals[:, 0:1] + uy * normals[:, 1:2]), axis=1)
    return data


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    method: str = 'cg'
    residuals: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    sigma_min: dict = field(default_factory=dict)
    compatibility_residual: float = 0.0
    conservation_residual: float = 0.0
    global_conservation_residual: float = 0.0
    weak_continuity_residual: float = 0.0

    def as_dict(self):
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'method': self.method,
            'residuals': [float(r) for r in self.residuals],
            'timings': {k: round(v, 6) for k, v in self.timings.items()},
            'sigma_min': {str(k): float(v) for k, v in self.sigma_min.items()},
            'compatibility_residual': float(self.compatibility_residual),
            'conservation_residual': float(self.conservation_residual),
            'global_conservation_residual': float(self.global_conservation_residual),
            'weak_continuity_residual': float(self.weak_continuity_residual),
        }


@dataclass
class DDSolution:
    pressures: list
    fluxes: list
    mortar: np.ndarray
    report: SolveReport
    data: list


class DDSystem:
    """
    Subdomain operators, mortar coupling and coarse operator for one
    decomposition, projection variant and problem.

    Local solves inside one operator application are independent and are
    mapped over a thread pool; results are reduced in subdomain order.
    """

    def __init__(self, decomposition, permeability, space, problem, variant=FLAT, eta=0.0,
                 tol=1e-10, max_it=500, method='cg', workers=1, sigma_reject=1e-8):
        self.decomposition = decomposition
        self.space = space
        self.problem = problem
        self.variant = variant
        self.eta = float(eta)
        self.tol = float(tol)
        self.max_it = int(max_it)
        self.method = method
        self.workers = max(int(workers), 1)
        self._executor = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

        started = time.perf_counter()
        self.outer_sides = [
            {f: key for f, (kind, key) in sub.facet_owner.items() if kind == 'outer'}
            for sub in decomposition
        ]

        def assemble(i):
            sub = decomposition.subdomains[i]
            kinds = outer_kinds(sub.mesh, self.outer_sides[i], problem)
            op = SubdomainOperator(sub.mesh, permeability.field(sub.mesh), kinds, self.eta,
                                   interface_facets=sub.interface_facets())
            # the Dirichlet variant is needed by every preconditioner application
            op.dirichlet_variant()
            return op

        self.operators = self.map(assemble, range(len(decomposition)))
        self.floating = [i for i, op in enumerate(self.operators) if op.floating]
        self.coupling = MortarCoupling(decomposition, space, variant, sigma_reject)
        self.coarse = CoarseOperator(self.coupling, self.floating)
        self.sources = self.map(lambda sub: sub.mesh.cell_integrals(problem.source), decomposition.subdomains)
        self.outer = [outer_data(sub.mesh, sides, problem) for sub, sides in zip(decomposition, self.outer_sides)]
        self.assembly_time = time.perf_counter() - started
        logger.info('Assembled %d subdomains (%d floating), %d mortar dofs, variant %s in %.2fs',
                    len(decomposition), len(self.floating), space.dim, variant, self.assembly_time)

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def map(self, fn, items):
        items = list(items)
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    @property
    def num_subdomains(self):
        return len(self.operators)

    def neumann_data(self, i, mortar, with_outer=False):
        """Facet data of subdomain i: total outward flux |F| (Q_i lambda)_F on Gamma_i."""
        lengths = self.operators[i].mesh.facet_lengths
        data = lengths * self.coupling.project(i, mortar)
        if with_outer:
            data = data + self.outer[i]
        return data

    def local_solve(self, i, mortar, with_source=False):
        op = self.operators[i]
        data = self.neumann_data(i, mortar, with_outer=with_source)
        source = self.sources[i] if with_source else None
        p, r = op.solve(source, data)
        return p, r, data

    def pressure_jump(self, solves):
        """-sum_i Q_i^T W_i p_hat_i for a list of (p, r, data) local solves."""
        out = np.zeros(self.space.dim)
        for i, (p, _, data) in enumerate(solves):
            p_hat = self.operators[i].boundary_pressure(p, data)
            out -= self.coupling.weighted_transpose(i, p_hat)
        return out

    def source_totals(self):
        """Per floating subdomain: source integral minus outward outer Neumann flux."""
        totals = []
        for i in self.floating:
            op = self.operators[i]
            neumann = op.kinds == NEUMANN
            outer = np.zeros(op.mesh.num_facets, dtype=bool)
            outer[list(self.outer_sides[i])] = True
            totals.append(self.sources[i].sum() - self.outer[i][neumann & outer].sum())
        return np.array(totals)


def apply_extension(system, mortar):
    """Neumann solves with interface flux data Q_i lambda, zero source and outer data."""
    return system.map(lambda i: system.local_solve(i, mortar), range(system.num_subdomains))


def apply_S(system, mortar):
    return system.pressure_jump(apply_extension(system, mortar))


def apply_M_inverse(system, functional):
    """
    Dirichlet-to-Neumann preconditioner: Riesz map to mortar pressures,
    Dirichlet solves with data Q_i d, and the negated flux functional.
    """
    d = system.space.solve_mass(functional)

    def dirichlet(i):
        op = system.operators[i]
        data = system.coupling.project(i, d)
        _, fluxes = solve_dirichlet(op, data)
        return fluxes

    out = np.zeros(system.space.dim)
    for i, fluxes in enumerate(system.map(dirichlet, range(system.num_subdomains))):
        out -= system.coupling.transpose(i, fluxes)
    return out


def preconditioner(system):
    def apply(residual):
        projected = apply_P(system.coarse, residual)
        return apply_P(system.coarse, system.space.solve_mass(apply_M_inverse(system, projected)))
    return apply


def pcg_interface(system, rhs, tol=None, max_it=None, callback=None):
    """Projected preconditioned Krylov solve of S lambda = rhs on ker B, from a zero guess."""
    tol = system.tol if tol is None else tol
    max_it = system.max_it if max_it is None else max_it
    operator = lambda mortar: apply_S(system, mortar)  # noqa: E731
    if system.method == 'gmres':
        mortar, krylov = linalg.gmres(operator, preconditioner(system), rhs, tol, max_it)
    else:
        mortar, krylov = linalg.cg(operator, preconditioner(system), rhs, tol, max_it, callback=callback)
    mortar = apply_P(system.coarse, mortar)
    report = SolveReport(
        iterations=krylov.iterations,
        converged=krylov.converged,
        method=krylov.method,
        residuals=krylov.residuals,
    )
    logger.info('%s converged in %d iterations (relative residual %.2e)',
                krylov.method.upper(), krylov.iterations, krylov.relative_residual)
    return mortar, report


def conservation_residuals(system, fluxes):
    """
    Largest per-cell mass balance residual and the global balance (outer
    boundary outflux minus the source integral), both relative to the larger
    of the cell source integrals and the facet fluxes.
    """
    balance = [np.abs(op.div @ u - src).max() for op, u, src in zip(system.operators, fluxes, system.sources)]
    outflux = sum(float(u[list(sides)].sum()) for u, sides in zip(fluxes, system.outer_sides))
    source = sum(float(s.sum()) for s in system.sources)
    scale = max(max(np.abs(u).max() for u in fluxes), max(np.abs(s).max() for s in system.sources), 1e-300)
    return float(max(balance)) / scale, abs(outflux - source) / scale


def check_conservation(system, fluxes, tol=CONSERVATION_TOL):
    local, total = conservation_residuals(system, fluxes)
    if local > tol:
        raise CompatibilityError(f'Per-cell mass balance violated ({local:.2e}).', {'relative_residual': local})
    if total > tol:
        raise CompatibilityError(f'Global mass balance violated ({total:.2e}).', {'relative_residual': total})
    return local, total


def solve(system, callback=None):
    timings = {}
    started = time.perf_counter()

    # step 1: coarse source problem
    totals = system.source_totals()
    mortar_f = solve_coarse_step1(system.coarse, totals)
    timings['coarse_source'] = time.perf_counter() - started

    # step 2: local solves with the source and outer data
    mark = time.perf_counter()
    particular = system.map(lambda i: system.local_solve(i, mortar_f, with_source=True),
                            range(system.num_subdomains))
    multipliers = np.array([r for _, r, _ in particular])
    scale = max(1.0, max((abs(t) / system.decomposition.subdomains[i].area
                          for t, i in zip(totals, system.floating)), default=0.0))
    compatibility = float(np.abs(multipliers).max()) if len(multipliers) else 0.0
    if compatibility > 1e-10 * scale:
        raise CompatibilityError(
            f'Local problems are incompatible after the coarse solve (|r_f|={compatibility:.2e}).',
            {'multipliers': multipliers.tolist()},
        )
    rhs = -system.pressure_jump(particular)
    timings['particular'] = time.perf_counter() - mark

    # step 3: interface iteration
    mark = time.perf_counter()
    mortar_0, report = pcg_interface(system, rhs, callback=callback)
    timings['interface'] = time.perf_counter() - mark

    # step 4: coarse pressure correction
    mark = time.perf_counter()
    mortar = mortar_0 + mortar_f
    final = system.map(lambda i: system.local_solve(i, mortar, with_source=True), range(system.num_subdomains))
    residual = system.pressure_jump(final)
    constants = solve_coarse_step4(system.coarse, residual)
    timings['coarse_pressure'] = time.perf_counter() - mark

    # step 5: assemble the global solution
    pressures, fluxes, data = [], [], []
    for i, (p, r, d) in enumerate(final):
        p = p.copy()
        if i in system.floating:
            p += constants[system.floating.index(i)]
        op = system.operators[i]
        pressures.append(p)
        fluxes.append(op.fluxes(p, d))
        data.append(d)

    report.conservation_residual, report.global_conservation_residual = check_conservation(system, fluxes)
    report.compatibility_residual = compatibility
    report.sigma_min = system.coupling.sigma_min
    report.weak_continuity_residual = max(system.coupling.weak_continuity_residual(mortar), default=0.0)
    timings['total'] = time.perf_counter() - started
    report.timings = timings
    return DDSolution(pressures, fluxes, mortar, report, data)


def monolithic_solve(mesh, permeability, problem, eta=0.0):
    """Single-domain MPFA solve on a conforming mesh of the whole box."""
    sides = mesh.boundary_side(mesh.bounding_box)
    kinds = outer_kinds(mesh, sides, problem)
    op = SubdomainOperator(mesh, permeability.field(mesh), kinds, eta)
    data = outer_data(mesh, sides, problem)
    source = mesh.cell_integrals(problem.source)
    p, r = op.solve(source, data)
    if op.floating:
        logger.warning('Monolithic problem has no Dirichlet boundary; pressure fixed to zero mean (r=%.2e).', r)
    return p, op.fluxes(p, data), op
