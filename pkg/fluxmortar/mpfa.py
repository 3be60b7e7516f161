"""
Multi-point flux approximation (O-method) on polygonal subdomain meshes.

Every vertex carries an interaction region. Inside it each cell owns a
constant gradient fixed by the pressures at the continuity points of its two
sub-facets; requiring sub-facet flux continuity (or the boundary condition)
eliminates those sub-facet pressures and leaves flux stencils in cell
pressures and boundary data.

Boundary data vectors are indexed by mesh facet. On Dirichlet facets the
entry is the facet pressure, on Neumann facets the total outward flux
through the facet (split equally between its two sub-facets).
"""
import logging
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import AssemblyError, UnsupportedMeshError
from .linalg import factorize

logger = logging.getLogger(__name__)

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2


def boundary_kinds(mesh, dirichlet=()):
    """Facet tags: the listed facets are Dirichlet, every other boundary facet Neumann."""
    kinds = np.full(mesh.num_facets, INTERIOR, dtype=np.int8)
    kinds[mesh.boundary_facets] = NEUMANN
    kinds[np.asarray(dirichlet, dtype=int)] = DIRICHLET
    return kinds


@dataclass(frozen=True)
class InteractionRegion:
    """
    Dual cell around one mesh vertex.

    `cell_facets[a]` holds the local positions (in `facets`) of the two
    sub-facets of cell `cells[a]` meeting at the vertex.
    """
    vertex: int
    point: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    cell_facets: np.ndarray
    boundary: np.ndarray

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_subfacets(self):
        return len(self.facets)


def build_interaction_regions(mesh):
    regions = []
    for v in range(mesh.num_vertices):
        cells = mesh.vertex_cells[v]
        facets = mesh.vertex_facets[v]
        if cells.size == 0:
            raise UnsupportedMeshError(f'Vertex {v} belongs to no cell.', {'vertex': v})
        position = {int(f): k for k, f in enumerate(facets)}
        cell_facets = np.array([[position[f] for f in mesh.facets_at_vertex(int(c), v)] for c in cells])
        boundary = mesh.facet_cells[facets, 1] < 0
        nb = int(boundary.sum())
        # an interior vertex is surrounded by a closed ring; a boundary vertex by an open fan
        if nb not in (0, 2) or len(facets) != len(cells) + nb // 2:
            raise UnsupportedMeshError(
                f'Vertex {v} violates the two-sub-facets-per-cell incidence.',
                {'vertex': v, 'cells': len(cells), 'facets': len(facets), 'boundary_facets': nb},
            )
        counts = np.bincount(cell_facets.ravel(), minlength=len(facets))
        expected = np.where(boundary, 1, 2)
        if np.any(counts != expected):
            raise UnsupportedMeshError(f'Sub-facets at vertex {v} are not shared consistently.', {'vertex': v})
        regions.append(InteractionRegion(v, mesh.vertices[v], cells, facets, cell_facets, boundary))
    return regions


@dataclass
class LocalStencil:
    """
    Eliminated interaction-region system.

    Sub-facet fluxes (along the global facet normal) and sub-facet pressures
    are affine in the region's cell pressures and in the data of its
    boundary sub-facets (`boundary_facets`, positions in `region.facets`).
    """
    region: InteractionRegion
    boundary_facets: np.ndarray
    flux_cell: np.ndarray
    flux_bound: np.ndarray
    pressure_cell: np.ndarray
    pressure_bound: np.ndarray
    gradient_cell: np.ndarray
    gradient_bound: np.ndarray
    continuity_points: np.ndarray

    def fluxes(self, p, b=None):
        b = np.zeros(len(self.boundary_facets)) if b is None else b
        return self.flux_cell @ p + self.flux_bound @ b

    def gradients(self, p, b=None):
        b = np.zeros(len(self.boundary_facets)) if b is None else b
        return np.einsum('aij,j->ai', self.gradient_cell, p) + np.einsum('aij,j->ai', self.gradient_bound, b)


def local_gradient_system(region, mesh, perm, kinds, eta=0.0):
    """
    Eliminate the sub-facet pressures of one interaction region.

    Continuity points sit at x_F + eta (r - x_F) on every facet F at vertex r.
    """
    cells, facets = region.cells, region.facets
    m, s = len(cells), len(facets)
    local_cell = {int(c): a for a, c in enumerate(cells)}
    boundary = np.flatnonzero(region.boundary)
    boundary_pos = {int(k): j for j, k in enumerate(boundary)}
    nb = len(boundary)

    half = 0.5 * mesh.facet_lengths[facets]
    normals = mesh.facet_normals[facets]
    xf = mesh.facet_centers[facets]
    xq = xf + eta * (region.point - xf)
    scale = mesh.facet_lengths[facets].max()

    grad_pi = np.zeros((m, 2, s))
    grad_p = np.zeros((m, 2, m))
    for a, c in enumerate(cells):
        ka, kb = region.cell_facets[a]
        distances = np.array([xq[ka], xq[kb]]) - mesh.cell_centers[c]
        if abs(np.linalg.det(distances)) <= 1e-12 * scale ** 2:
            raise AssemblyError(
                f'Degenerate gradient system in cell {int(c)} at vertex {region.vertex}.',
                {'vertex': int(region.vertex), 'cell': int(c)},
            )
        G = np.linalg.inv(distances)
        grad_pi[a, :, ka] = G[:, 0]
        grad_pi[a, :, kb] = G[:, 1]
        grad_p[a, :, a] = -(G[:, 0] + G[:, 1])

    def subflux(a, k):
        w = -half[k] * normals[k] @ perm[cells[a]]
        return w @ grad_pi[a], w @ grad_p[a]

    lhs = np.zeros((s, s))
    rhs_p = np.zeros((s, m))
    rhs_b = np.zeros((s, nb))
    owner_rows = []
    for k, f in enumerate(facets):
        c0, c1 = mesh.facet_cells[f]
        row_pi, row_p = subflux(local_cell[int(c0)], k)
        owner_rows.append((row_pi, row_p))
        if c1 >= 0:
            other_pi, other_p = subflux(local_cell[int(c1)], k)
            lhs[k] = row_pi - other_pi
            rhs_p[k] = other_p - row_p
        elif kinds[f] == DIRICHLET:
            lhs[k, k] = 1.0
            rhs_b[k, boundary_pos[k]] = 1.0
        elif kinds[f] == NEUMANN:
            lhs[k] = row_pi
            rhs_p[k] = -row_p
            rhs_b[k, boundary_pos[k]] = 0.5
        else:
            raise AssemblyError(f'Boundary facet {int(f)} has no boundary condition.', {'facet': int(f)})

    try:
        if np.linalg.cond(lhs) > 1e13:
            raise np.linalg.LinAlgError('ill-conditioned')
        solved = np.linalg.solve(lhs, np.hstack([rhs_p, rhs_b]))
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(
            f'Singular interaction-region system at vertex {region.vertex}.',
            {'vertex': int(region.vertex), 'point': region.point.tolist()},
        ) from exc
    pi_cell, pi_bound = solved[:, :m], solved[:, m:]
    for k in boundary:
        if kinds[facets[k]] == DIRICHLET:
            pi_cell[k] = 0.0
            pi_bound[k] = 0.0
            pi_bound[k, boundary_pos[k]] = 1.0

    flux_cell = np.zeros((s, m))
    flux_bound = np.zeros((s, nb))
    for k, f in enumerate(facets):
        row_pi, row_p = owner_rows[k]
        if region.boundary[k] and kinds[f] == NEUMANN:
            # the prescribed half of the facet flux, exactly
            flux_bound[k, boundary_pos[k]] = 0.5
        else:
            flux_cell[k] = row_pi @ pi_cell + row_p
            flux_bound[k] = row_pi @ pi_bound

    return LocalStencil(
        region=region,
        boundary_facets=boundary,
        flux_cell=flux_cell,
        flux_bound=flux_bound,
        pressure_cell=pi_cell,
        pressure_bound=pi_bound,
        gradient_cell=np.einsum('ais,sj->aij', grad_pi, pi_cell) + grad_p,
        gradient_bound=np.einsum('ais,sj->aij', grad_pi, pi_bound),
        continuity_points=xq,
    )


class SubdomainOperator:
    """
    Assembled MPFA system of one mesh under one boundary tagging.

    flux        (facets x cells)  facet fluxes along the facet normal
    bound_flux  (facets x facets) contribution of boundary data
    bp_cell, bp_bound             boundary facet pressures (mean of the two sub-facet pressures)
    div         (cells x facets)  outward-signed cell/facet incidence
    A = div @ flux                cell pressure matrix

    Operators without a Dirichlet facet are floating: their Neumann solves
    use the bordered system with the scalar multiplier r and zero-mean
    pressure. The factorization is computed once at construction.
    """

    def __init__(self, mesh, perm, kinds, eta=0.0, interface_facets=None, regions=None):
        self.mesh = mesh
        self.perm = perm
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.eta = float(eta)
        self.regions = build_interaction_regions(mesh) if regions is None else regions
        if interface_facets is None:
            interface_facets = np.flatnonzero(self.kinds == NEUMANN)
        self.interface_facets = np.asarray(interface_facets, dtype=int)
        self.floating = not np.any(self.kinds == DIRICHLET)
        self._variants = {}
        self._lock = threading.Lock()
        self._assemble()
        self._factorize()

    def __repr__(self):
        return (f'SubdomainOperator(cells={self.mesh.num_cells}, '
                f'dirichlet={int(np.sum(self.kinds == DIRICHLET))}, floating={self.floating})')

    def _assemble(self):
        mesh = self.mesh
        nf, nc = mesh.num_facets, mesh.num_cells
        fr, fc, fv = [], [], []
        br, bc, bv = [], [], []
        pr, pc, pv = [], [], []
        qr, qc, qv = [], [], []
        for region in self.regions:
            stencil = local_gradient_system(region, mesh, self.perm, self.kinds, self.eta)
            cells = region.cells
            bfacets = region.facets[stencil.boundary_facets]
            for k, f in enumerate(region.facets):
                fr.extend([f] * len(cells))
                fc.extend(cells)
                fv.extend(stencil.flux_cell[k])
                if len(bfacets):
                    br.extend([f] * len(bfacets))
                    bc.extend(bfacets)
                    bv.extend(stencil.flux_bound[k])
                if region.boundary[k]:
                    pr.extend([f] * len(cells))
                    pc.extend(cells)
                    pv.extend(0.5 * stencil.pressure_cell[k])
                    qr.extend([f] * len(bfacets))
                    qc.extend(bfacets)
                    qv.extend(0.5 * stencil.pressure_bound[k])

        self.flux = sp.csr_matrix((fv, (fr, fc)), shape=(nf, nc))
        self.bound_flux = sp.csr_matrix((bv, (br, bc)), shape=(nf, nf))
        self.bp_cell = sp.csr_matrix((pv, (pr, pc)), shape=(nf, nc))
        self.bp_bound = sp.csr_matrix((qv, (qr, qc)), shape=(nf, nf))
        for M in (self.flux, self.bound_flux, self.bp_cell, self.bp_bound):
            M.sum_duplicates()

        owners = mesh.facet_cells
        interior = owners[:, 1] >= 0
        rows = np.concatenate([owners[:, 0], owners[interior, 1]])
        cols = np.concatenate([np.arange(nf), np.flatnonzero(interior)])
        vals = np.concatenate([np.ones(nf), -np.ones(int(interior.sum()))])
        self.div = sp.csr_matrix((vals, (rows, cols)), shape=(nc, nf))
        self.A = (self.div @ self.flux).tocsr()
        logger.debug('Assembled MPFA operator: %d cells, %d facets, nnz(A)=%d',
                     nc, nf, self.A.nnz)

    def _factorize(self):
        if self.floating:
            areas = self.mesh.cell_areas[:, None]
            bordered = sp.bmat([[self.A, sp.csr_matrix(areas)],
                                [sp.csr_matrix(areas.T), None]], format='csc')
            self.factorization = factorize(bordered, 'augmented')
        else:
            self.factorization = factorize(self.A, 'general')

    @property
    def num_cells(self):
        return self.mesh.num_cells

    def rhs(self, source, data):
        source = np.zeros(self.num_cells) if source is None else np.asarray(source, dtype=float)
        if data is None:
            return source.copy()
        return source - self.div @ (self.bound_flux @ data)

    def solve(self, source=None, data=None):
        """Cell pressures and the nullspace multiplier r (0 unless floating)."""
        b = self.rhs(source, data)
        if self.floating:
            x = self.factorization.solve(np.append(b, 0.0))
            return x[:-1], float(x[-1])
        return self.factorization.solve(b), 0.0

    def fluxes(self, p, data=None):
        out = self.flux @ p
        if data is not None:
            out = out + self.bound_flux @ data
        return out

    def boundary_pressure(self, p, data=None):
        out = self.bp_cell @ p
        if data is not None:
            out = out + self.bp_bound @ data
        return out

    def dirichlet_variant(self):
        """Same mesh with the interface facets re-tagged Dirichlet; assembled on first use."""
        return self.variant(self.interface_facets)

    def variant(self, dirichlet_facets):
        key = tuple(int(f) for f in dirichlet_facets)
        with self._lock:
            op = self._variants.get(key)
            if op is None:
                kinds = self.kinds.copy()
                kinds[list(key)] = DIRICHLET
                op = SubdomainOperator(self.mesh, self.perm, kinds, self.eta,
                                       interface_facets=self.interface_facets, regions=self.regions)
                self._variants[key] = op
        return op

    def conservation_residual(self, p, source=None, data=None, r=0.0):
        """Per-cell outflux minus source integral (the multiplier term included)."""
        source = np.zeros(self.num_cells) if source is None else source
        balance = self.div @ self.fluxes(p, data) - source
        return balance + r * self.mesh.cell_areas


def assemble_subdomain(mesh, perm, kinds, eta=0.0, interface_facets=None):
    return SubdomainOperator(mesh, perm, kinds, eta=eta, interface_facets=interface_facets)


def solve_neumann(op, data, source=None):
    """
    Solve with interface flux data. Floating operators return the multiplier
    r = (source integral - net outward flux) / area and zero-mean pressures.
    """
    return op.solve(source, data)


def solve_dirichlet(op, data, source=None):
    """
    Solve with the interface facets pinned to the pressures in `data` and
    return (cell pressures, facet fluxes).
    """
    variant = op.dirichlet_variant()
    p, _ = variant.solve(source, data)
    return p, variant.fluxes(p, data)


def reconstruct_fluxes(op, p, data=None):
    return op.fluxes(p, data)


def recover_boundary_pressure(op, p, data=None):
    return op.boundary_pressure(p, data)


def facet_transmissibility(op, facet):
    """Two-point view of an interior facet: -d(flux)/d(p_c1) when the stencil is two-point."""
    c0, c1 = op.mesh.facet_cells[facet]
    row = op.flux.getrow(facet)
    return -row[0, c1]
