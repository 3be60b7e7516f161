"""
Lowest-order BDM velocity space on triangles with the vertex quadrature rule.

Used as an independent check of the MPFA-O stencils: eliminating the
velocity around a vertex gives sub-facet fluxes in terms of cell pressures,
which coincide with the O-method when its continuity points sit one third
of the facet away from the vertex.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import AssemblyError, InvalidGeometryError, UnsupportedMeshError
from .mpfa import DIRICHLET, NEUMANN

logger = logging.getLogger(__name__)

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# facet k is opposite vertex k
REFERENCE_FACETS = ((1, 2), (2, 0), (0, 1))
REFERENCE_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]) / np.array([[np.sqrt(2.0)], [1.0], [1.0]])
REFERENCE_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])
REFERENCE_AREA = 0.5


class ReferenceBDM1:
    """
    P1 x P1 vector fields on the reference triangle. Degree of freedom
    `2 k + i` is the normal component on facet k at its i-th vertex.
    """

    def __init__(self):
        self.dofs = tuple((k, v) for k, facet in enumerate(REFERENCE_FACETS) for v in facet)
        vandermonde = np.zeros((6, 6))
        for i, (k, v) in enumerate(self.dofs):
            x, y = REFERENCE_VERTICES[v]
            mono = np.array([1.0, x, y])
            vandermonde[i, :3] = REFERENCE_NORMALS[k, 0] * mono
            vandermonde[i, 3:] = REFERENCE_NORMALS[k, 1] * mono
        self.coefficients = np.linalg.inv(vandermonde)
        self.quadrature_weight = REFERENCE_AREA / 3.0

    def values(self, points):
        """Basis values, shape (6, n_points, 2)."""
        points = np.atleast_2d(points)
        mono = np.column_stack([np.ones(len(points)), points[:, 0], points[:, 1]])
        vx = mono @ self.coefficients[:3]
        vy = mono @ self.coefficients[3:]
        return np.stack([vx.T, vy.T], axis=-1)

    def divergence(self):
        return self.coefficients[1] + self.coefficients[5]

    def vertex_dofs(self, vertex):
        """The two dofs living at a reference vertex."""
        return [i for i, (_, v) in enumerate(self.dofs) if v == vertex]


REFERENCE_ELEMENT = ReferenceBDM1()


@dataclass(frozen=True)
class PiolaMap:
    """Affine map x = x0 + DF x_hat with the contravariant Piola scaling."""
    vertices: np.ndarray
    DF: np.ndarray
    det: float
    # physical facet length / reference facet length, signed by the orientation
    facet_scaling: np.ndarray

    @property
    def J(self):
        return abs(self.det)

    def transform(self, reference_vectors):
        return reference_vectors @ self.DF.T / self.det

    def divergence(self, reference_divergence):
        return reference_divergence / self.det


def piola_map(vertices):
    vertices = np.asarray(vertices, dtype=float)
    DF = np.column_stack([vertices[1] - vertices[0], vertices[2] - vertices[0]])
    det = float(np.linalg.det(DF))
    scale = max(np.abs(DF).max(), 1e-300)
    if abs(det) <= 1e-14 * scale ** 2:
        raise InvalidGeometryError('Triangle has zero area.', {'vertices': vertices.tolist()})
    lengths = np.array([np.linalg.norm(vertices[b] - vertices[a]) for a, b in REFERENCE_FACETS])
    return PiolaMap(vertices, DF, det, np.sign(det) * lengths / REFERENCE_LENGTHS)


@dataclass(frozen=True)
class QuadratureMassMatrix:
    """
    Element matrix of (K^-1 phi, psi) under the vertex rule, in the physical
    basis whose outward normal components are the Kronecker dof pattern.
    Only the three 2x2 vertex blocks are filled.
    """
    matrix: np.ndarray
    piola: PiolaMap

    def vertex_block(self, vertex):
        dofs = REFERENCE_ELEMENT.vertex_dofs(vertex)
        return self.matrix[np.ix_(dofs, dofs)]


def physical_vertex_values(piola):
    """Physical basis values at the three element vertices, shape (6, 3, 2)."""
    reference = REFERENCE_ELEMENT.values(REFERENCE_VERTICES)
    return piola.transform(reference) * piola.facet_scaling[[k for k, _ in REFERENCE_ELEMENT.dofs]][:, None, None]


def quadrature_inner(vertices, K, phi_at_vertices, psi_at_vertices):
    """(K^-1 phi, psi) under the vertex rule for fields sampled at the element vertices."""
    piola = piola_map(vertices)
    Kinv = np.linalg.inv(K)
    area = 0.5 * piola.J
    return area / 3.0 * float(np.einsum('vi,ij,vj->', phi_at_vertices, Kinv, psi_at_vertices))


def assemble_vertex_quadrature_mass(vertices, K):
    piola = piola_map(vertices)
    Kinv = np.linalg.inv(np.asarray(K, dtype=float))
    values = physical_vertex_values(piola)
    weight = 0.5 * piola.J / 3.0
    M = np.zeros((6, 6))
    for vertex in range(3):
        dofs = REFERENCE_ELEMENT.vertex_dofs(vertex)
        phi = values[dofs, vertex]
        M[np.ix_(dofs, dofs)] = weight * phi @ Kinv @ phi.T
    return QuadratureMassMatrix(M, piola)


@dataclass
class VertexStencil:
    vertex: int
    facets: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    flux_cell: np.ndarray
    flux_bound: np.ndarray


def eliminate_velocity(mesh, vertex, perm, kinds=None):
    """
    Sub-facet flux stencils around one vertex of a triangle mesh.

    Facet and cell ordering follows `mesh.vertex_facets[vertex]` and
    `mesh.vertex_cells[vertex]`, matching the interaction regions of the
    O-method. Boundary data are facet pressures (Dirichlet) or total outward
    facet fluxes (Neumann).
    """
    facets = mesh.vertex_facets[vertex]
    cells = mesh.vertex_cells[vertex]
    s, m = len(facets), len(cells)
    position = {int(f): k for k, f in enumerate(facets)}
    boundary = np.flatnonzero(mesh.facet_cells[facets, 1] < 0)
    boundary_pos = {int(k): j for j, k in enumerate(boundary)}
    half = 0.5 * mesh.facet_lengths[facets]

    A = np.zeros((s, s))
    B = np.zeros((m, s))
    for a, c in enumerate(cells):
        cell = mesh.cells[c]
        if len(cell) != 3:
            raise UnsupportedMeshError('Velocity elimination needs a triangle mesh.', {'cell': int(c)})
        mass = assemble_vertex_quadrature_mass(mesh.vertices[list(cell)], perm[c])
        local_vertex = cell.index(vertex)
        dofs = REFERENCE_ELEMENT.vertex_dofs(local_vertex)
        rows = []
        signs = []
        for dof in dofs:
            k, _ = REFERENCE_ELEMENT.dofs[dof]
            f = mesh.cell_facets[c][(k + 1) % 3]
            rows.append(position[f])
            signs.append(1.0 if mesh.facet_cells[f, 0] == c else -1.0)
        signs = np.array(signs)
        A[np.ix_(rows, rows)] += signs[:, None] * signs[None, :] * mass.vertex_block(local_vertex)
        B[a, rows] += signs * half[rows]

    kinds = np.full(mesh.num_facets, DIRICHLET, dtype=np.int8) if kinds is None else kinds
    known = np.array([k in boundary_pos and kinds[facets[k]] == NEUMANN for k in range(s)])
    free = ~known
    # A u - B^T p = -(|e|/2) g on Dirichlet facets; u = b / |e| on Neumann facets
    rhs_p = B.T.copy()
    rhs_b = np.zeros((s, len(boundary)))
    fixed = np.zeros((s, len(boundary)))
    for k in boundary:
        j = boundary_pos[int(k)]
        if known[k]:
            fixed[k, j] = 1.0 / mesh.facet_lengths[facets[k]]
        else:
            rhs_b[k, j] = -half[k]
    rhs_b -= A @ fixed

    try:
        solved = np.linalg.solve(A[np.ix_(free, free)], np.hstack([rhs_p[free], rhs_b[free]]))
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(f'Singular velocity block at vertex {vertex}.', {'vertex': int(vertex)}) from exc

    u_cell = np.zeros((s, m))
    u_bound = fixed.copy()
    u_cell[free] = solved[:, :m]
    u_bound[free] = solved[:, m:]
    return VertexStencil(
        vertex=int(vertex),
        facets=facets,
        cells=cells,
        boundary_facets=boundary,
        flux_cell=half[:, None] * u_cell,
        flux_bound=half[:, None] * u_bound,
    )
