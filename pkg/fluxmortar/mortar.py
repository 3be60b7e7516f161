"""
Mortar flux spaces on the interfaces, their projections onto the subdomain
trace spaces, and the coarse operator handling floating subdomains.

A mortar vector is a flat numpy array of length `MortarSpace.dim`. Its
values are oriented by the interface normal, so the lower subdomain sees
lambda and the upper one -lambda as outward flux.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import CoarseOperatorError, InterfaceMismatchError, MortarConditionError
from .linalg import cholesky, cholesky_solve, dense_svd
from .mesh import build_interface_grid

logger = logging.getLogger(__name__)

# 2-point Gauss-Legendre rule on [0, 1]
GAUSS2_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS2_WEIGHTS = np.array([0.5, 0.5])

FLAT = 'flat'
SHARP = 'sharp'
VARIANTS = (FLAT, SHARP)


class MortarSpace:
    """
    Piecewise polynomials on every interface grid: P0, discontinuous P1 or
    continuous P1. Interfaces never share dofs.
    """

    def __init__(self, grids, degree=1, continuous=True):
        if degree not in (0, 1):
            raise MortarConditionError(f'Unsupported mortar degree {degree}.', {'degree': degree})
        self.grids = tuple(grids)
        self.degree = int(degree)
        self.continuous = bool(continuous) and self.degree == 1
        sizes = [self.local_dim(g) for g in self.grids]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.masses = tuple(self._assemble_mass(e) for e in range(len(self.grids)))
        self._mass_factors = tuple(cholesky(M, MortarConditionError, 'Mortar mass matrix is not SPD.')
                                   for M in self.masses)

    @classmethod
    def build(cls, decomposition, n_cells, degree=1, continuous=True):
        grids = [build_interface_grid(e, n_cells) for e in decomposition.interfaces]
        return cls(grids, degree, continuous)

    def __repr__(self):
        kind = 'P0' if self.degree == 0 else ('P1c' if self.continuous else 'P1d')
        return f'MortarSpace({kind}, interfaces={len(self.grids)}, dim={self.dim})'

    @property
    def dim(self):
        return int(self.offsets[-1])

    def local_dim(self, grid):
        n = grid.num_cells
        if self.degree == 0:
            return n
        return n + 1 if self.continuous else 2 * n

    def dofs(self, e):
        return np.arange(self.offsets[e], self.offsets[e + 1])

    def local(self, vector, e):
        return vector[self.offsets[e]:self.offsets[e + 1]]

    def cell_basis(self, e, cell, s):
        """Local dof indices of one mortar cell and basis values at parameters s (n_points x n_dofs)."""
        grid = self.grids[e]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.degree == 0:
            return np.array([cell]), np.ones((len(s), 1))
        a, b = grid.breakpoints[cell], grid.breakpoints[cell + 1]
        t = (s - a) / (b - a)
        values = np.column_stack([1.0 - t, t])
        dofs = np.array([cell, cell + 1]) if self.continuous else np.array([2 * cell, 2 * cell + 1])
        return dofs, values

    def _assemble_mass(self, e):
        grid = self.grids[e]
        M = np.zeros((self.local_dim(grid), self.local_dim(grid)))
        for cell, h in enumerate(grid.cell_lengths):
            s = grid.breakpoints[cell] + GAUSS2_POINTS * h
            dofs, values = self.cell_basis(e, cell, s)
            M[np.ix_(dofs, dofs)] += (values * (GAUSS2_WEIGHTS * h)[:, None]).T @ values
        return M

    @property
    def mass(self):
        """Block-diagonal mass matrix of the whole space."""
        return sp.block_diag(self.masses, format='csr')

    def solve_mass(self, g):
        """Riesz map: mortar dofs d with M d = g."""
        d = np.zeros(self.dim)
        for e, factor in enumerate(self._mass_factors):
            d[self.offsets[e]:self.offsets[e + 1]] = cholesky_solve(factor, self.local(g, e))
        return d

    def evaluate(self, vector, e, s):
        """Values of the mortar function on interface e at parameters s."""
        grid = self.grids[e]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        cells = np.clip(np.searchsorted(grid.breakpoints, s, side='right') - 1, 0, grid.num_cells - 1)
        local = self.local(vector, e)
        out = np.zeros(len(s))
        for cell in np.unique(cells):
            mask = cells == cell
            dofs, values = self.cell_basis(e, cell, s[mask])
            out[mask] = values @ local[dofs]
        return out

    def interpolate(self, e, func):
        """L2 projection of func(s) onto the mortar space of interface e."""
        grid = self.grids[e]
        rhs = np.zeros(self.local_dim(grid))
        for cell, h in enumerate(grid.cell_lengths):
            s = grid.breakpoints[cell] + GAUSS2_POINTS * h
            dofs, values = self.cell_basis(e, cell, s)
            rhs[dofs] += values.T @ (GAUSS2_WEIGHTS * h * func(s))
        return cholesky_solve(self._mass_factors[e], rhs)


@dataclass(frozen=True)
class TraceSpace:
    """
    Piecewise constants on the facets of one subdomain lying on one
    interface, sorted along the interface parameter.
    """
    subdomain: int
    interface: int
    facets: np.ndarray
    intervals: np.ndarray
    sign: float

    @property
    def lengths(self):
        return self.intervals[:, 1] - self.intervals[:, 0]

    @property
    def size(self):
        return len(self.facets)

    @property
    def mass(self):
        return np.diag(self.lengths)


def build_trace_space(decomposition, subdomain, interface):
    sub = decomposition.subdomains[subdomain]
    e = decomposition.interfaces[interface]
    mesh = sub.mesh
    facets = sub.interface_facets(interface)
    if facets.size == 0:
        raise InterfaceMismatchError(
            f'Subdomain {subdomain} has no facets on interface {interface}.',
            {'subdomain': subdomain, 'interface': interface},
        )
    ends = e.parameter(mesh.vertices[mesh.facets[facets]])
    intervals = np.sort(ends, axis=1)
    order = np.argsort(intervals[:, 0])
    intervals, facets = intervals[order], facets[order]
    tol = 1e-9 * e.length
    gaps = np.abs(intervals[1:, 0] - intervals[:-1, 1])
    if (abs(intervals[0, 0]) > tol or abs(intervals[-1, 1] - e.length) > tol or np.any(gaps > tol)):
        raise InterfaceMismatchError(
            f'Facets of subdomain {subdomain} do not tile interface {interface}.',
            {'subdomain': subdomain, 'interface': interface},
        )
    intervals.flags.writeable = False
    return TraceSpace(subdomain, interface, facets, intervals, e.side_sign(subdomain))


def facet_moments(space, e, trace):
    """G[F, dof] = integral over facet F of the mortar basis function."""
    grid = space.grids[e]
    G = np.zeros((trace.size, space.local_dim(grid)))
    covered = np.zeros(trace.size)
    bp = grid.breakpoints
    for k, (a, b) in enumerate(trace.intervals):
        first = max(int(np.searchsorted(bp, a, side='right')) - 1, 0)
        for cell in range(first, grid.num_cells):
            lo, hi = max(a, bp[cell]), min(b, bp[cell + 1])
            if bp[cell] >= b:
                break
            if hi <= lo:
                continue
            s = lo + GAUSS2_POINTS * (hi - lo)
            dofs, values = space.cell_basis(e, cell, s)
            G[k, dofs] += GAUSS2_WEIGHTS @ values * (hi - lo)
            covered[k] += hi - lo
    if np.any(np.abs(covered - trace.lengths) > 1e-9 * grid.interface.length):
        raise InterfaceMismatchError(
            f'Mortar grid of interface {e} does not cover the facets of subdomain {trace.subdomain}.',
            {'interface': e, 'subdomain': trace.subdomain},
        )
    return G


def assemble_Qflat(space, trace, e):
    """Signed facet averages (Q lambda)_F = sign / |F| * integral_F lambda."""
    return trace.sign * facet_moments(space, e, trace) / trace.lengths[:, None]


def assemble_Qsharp(e, trace_i, trace_j, space):
    """
    Projection onto weakly continuous trace pairs: minimize the L2 distance
    to (lambda_i, lambda_j) subject to sum_i (xi_i, mu) = 0 for every mortar mu.
    """
    G_i = facet_moments(space, e, trace_i)
    G_j = facet_moments(space, e, trace_j)
    n_i, n_j, d = trace_i.size, trace_j.size, G_i.shape[1]
    stacked = np.vstack([G_i, G_j])
    _, sigma, _ = dense_svd(stacked)
    if len(sigma) < d or sigma.min() <= 1e-12 * sigma.max():
        raise MortarConditionError(
            f'Projection saddle system of interface {e} is singular; coarsen the mortar grid.',
            {'interface': e, 'mortar_dofs': d, 'trace_facets': [n_i, n_j]},
        )
    saddle = np.zeros((n_i + n_j + d, n_i + n_j + d))
    saddle[:n_i, :n_i] = trace_i.mass
    saddle[n_i:n_i + n_j, n_i:n_i + n_j] = trace_j.mass
    saddle[:n_i + n_j, n_i + n_j:] = stacked
    saddle[n_i + n_j:, :n_i + n_j] = stacked.T
    rhs = np.zeros((n_i + n_j + d, d))
    rhs[:n_i] = trace_i.sign * G_i
    rhs[n_i:n_i + n_j] = trace_j.sign * G_j
    solution = np.linalg.solve(saddle, rhs)
    return solution[:n_i], solution[n_i:n_i + n_j]


def mortar_condition_sigma(Q_i, Q_j, mortar_mass, W_i, W_j):
    """
    Smallest singular value of mu -> (Q_i mu, Q_j mu) measured in the trace
    L2 norms against the mortar L2 norm.
    """
    d = mortar_mass.shape[0]
    A = np.vstack([np.sqrt(np.diag(W_i))[:, None] * Q_i, np.sqrt(np.diag(W_j))[:, None] * Q_j])
    L = np.linalg.cholesky(mortar_mass)
    scaled = np.linalg.solve(L, A.T).T
    _, sigma, _ = dense_svd(scaled)
    if len(sigma) < d:
        return 0.0
    return float(sigma.min())


@dataclass(frozen=True)
class SideProjection:
    """Projection of interface e's mortar onto one neighbouring subdomain."""
    trace: TraceSpace
    Q: np.ndarray

    @property
    def weights(self):
        return self.trace.lengths


@dataclass(frozen=True)
class InterfaceProjection:
    interface: int
    lower: SideProjection
    upper: SideProjection
    sigma_min: float

    def sides(self):
        return (self.lower, self.upper)


class MortarCoupling:
    """
    All interface projections of one variant, plus per-subdomain sparse
    maps from mortar vectors to facet-indexed data of the subdomain mesh.
    """

    def __init__(self, decomposition, space, variant=FLAT, sigma_reject=1e-8):
        if variant not in VARIANTS:
            raise MortarConditionError(f'Unknown projection variant {variant!r}.')
        self.decomposition = decomposition
        self.space = space
        self.variant = variant
        self.interfaces = []
        for e in decomposition.interfaces:
            trace_i = build_trace_space(decomposition, e.lower, e.index)
            trace_j = build_trace_space(decomposition, e.upper, e.index)
            if variant == FLAT:
                Q_i = assemble_Qflat(space, trace_i, e.index)
                Q_j = assemble_Qflat(space, trace_j, e.index)
            else:
                Q_i, Q_j = assemble_Qsharp(e.index, trace_i, trace_j, space)
            sigma = mortar_condition_sigma(Q_i, Q_j, space.masses[e.index], trace_i.mass, trace_j.mass)
            logger.debug('Interface %d (%d|%d): sigma_min = %.3e', e.index, e.lower, e.upper, sigma)
            if sigma < sigma_reject:
                raise MortarConditionError(
                    f'Mortar condition fails on interface {e.index} (sigma_min={sigma:.2e}); '
                    f'coarsen the mortar grid.',
                    {'interface': e.index, 'sigma_min': sigma, 'threshold': sigma_reject},
                )
            self.interfaces.append(InterfaceProjection(
                e.index, SideProjection(trace_i, Q_i), SideProjection(trace_j, Q_j), sigma
            ))
        self.maps = [self._subdomain_map(i) for i in range(len(decomposition))]

    def _subdomain_map(self, i):
        mesh = self.decomposition.subdomains[i].mesh
        rows, cols, vals = [], [], []
        for proj in self.interfaces:
            for side in proj.sides():
                if side.trace.subdomain != i:
                    continue
                dofs = self.space.dofs(proj.interface)
                r, c = (index.ravel() for index in np.indices(side.Q.shape))
                rows.append(side.trace.facets[r])
                cols.append(dofs[c])
                vals.append(side.Q[r, c])
        if not rows:
            return sp.csr_matrix((mesh.num_facets, self.space.dim))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.num_facets, self.space.dim),
        )

    @property
    def sigma_min(self):
        return {proj.interface: proj.sigma_min for proj in self.interfaces}

    def project(self, i, mortar):
        """Facet-indexed outward flux (or pressure) data of subdomain i."""
        return self.maps[i] @ mortar

    def weighted_transpose(self, i, facet_values):
        """sum over Gamma_i facets of Q_i^T |F| v_F: the mortar functional of facet values."""
        lengths = self.decomposition.subdomains[i].mesh.facet_lengths
        return self.maps[i].T @ (lengths * facet_values)

    def transpose(self, i, facet_values):
        """Q_i^T applied to facet totals (already integrated over each facet)."""
        return self.maps[i].T @ facet_values

    def weak_continuity_residual(self, mortar):
        """Largest |sum_i (Q_i lambda, mu)| over the mortar basis, per interface."""
        residual = []
        for proj in self.interfaces:
            total = np.zeros(self.space.local_dim(self.space.grids[proj.interface]))
            local = self.space.local(mortar, proj.interface)
            for side in proj.sides():
                G = facet_moments(self.space, proj.interface, side.trace)
                total += G.T @ (side.Q @ local)
            residual.append(float(np.abs(total).max()))
        return residual


class CoarseOperator:
    """
    B maps a mortar vector to the net outward projected flux of every
    floating subdomain; BB^T is factored once.
    """

    def __init__(self, coupling, floating):
        self.floating = tuple(int(i) for i in floating)
        dim = coupling.space.dim
        self.B = np.zeros((len(self.floating), dim))
        for row, i in enumerate(self.floating):
            mesh = coupling.decomposition.subdomains[i].mesh
            ones = np.zeros(mesh.num_facets)
            ones[mesh.boundary_facets] = 1.0
            self.B[row] = coupling.weighted_transpose(i, ones)
        self._factor = None
        if self.floating:
            BBt = self.B @ self.B.T
            _, sigma, _ = dense_svd(BBt)
            if sigma.min() <= 1e-12 * max(sigma.max(), 1e-300):
                raise CoarseOperatorError(
                    'The mortar space cannot express the net flux of every floating subdomain.',
                    {'floating': list(self.floating), 'singular_values': sigma.tolist()},
                )
            self._factor = cholesky(BBt, CoarseOperatorError, 'BB^T is not positive definite.')
        logger.debug('Coarse operator with %d floating subdomains', len(self.floating))

    @property
    def is_empty(self):
        return not self.floating

    def apply(self, mu):
        return self.B @ mu

    def solve_BBt(self, rhs):
        if self.is_empty:
            return np.zeros(0)
        return cholesky_solve(self._factor, rhs)


def assemble_B(coupling, floating):
    return CoarseOperator(coupling, floating)


def apply_P(coarse, mu):
    """Euclidean projection onto ker B."""
    if coarse.is_empty:
        return np.array(mu, dtype=float)
    return mu - coarse.B.T @ coarse.solve_BBt(coarse.B @ mu)


def solve_coarse_step1(coarse, source_totals):
    """Minimum-norm mortar with B lambda = source_totals."""
    if coarse.is_empty:
        return np.zeros(coarse.B.shape[1])
    return coarse.B.T @ coarse.solve_BBt(np.asarray(source_totals, dtype=float))


def solve_coarse_step4(coarse, functional):
    """Per-floating-subdomain pressure constants from BB^T c = B g."""
    if coarse.is_empty:
        return np.zeros(0)
    return coarse.solve_BBt(coarse.B @ functional)
