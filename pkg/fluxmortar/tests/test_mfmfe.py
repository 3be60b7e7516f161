"""
Tests for the BDM1 vertex-quadrature stencils and their agreement with MPFA-O.
"""
import numpy as np
from django.test import SimpleTestCase

from fluxmortar.exceptions import InvalidGeometryError, UnsupportedMeshError
from fluxmortar.mesh import generate_structured
from fluxmortar.mfmfe import (
    REFERENCE_ELEMENT,
    REFERENCE_FACETS,
    REFERENCE_LENGTHS,
    REFERENCE_NORMALS,
    REFERENCE_VERTICES,
    assemble_vertex_quadrature_mass,
    eliminate_velocity,
    physical_vertex_values,
    piola_map,
)
from fluxmortar.mpfa import boundary_kinds, build_interaction_regions, local_gradient_system
from fluxmortar.permeability import PermField

TRIANGLE = np.array([[0.2, 0.1], [1.3, 0.4], [0.5, 1.2]])


def random_spd_field(rng, num_cells):
    tensors = []
    for _ in range(num_cells):
        L = rng.uniform(-1.0, 1.0, size=(2, 2))
        tensors.append(L @ L.T + 0.1 * np.eye(2))
    return PermField(tensors)


def outward_normals(vertices):
    normals = []
    for a, b in REFERENCE_FACETS:
        t = vertices[b] - vertices[a]
        normals.append(np.array([t[1], -t[0]]) / np.linalg.norm(t))
    return np.array(normals)


class ReferenceElementTest(SimpleTestCase):
    """Test cases for the reference BDM1 element."""

    def test_kronecker_dofs(self):
        """Test basis normal components at the vertices form the identity."""
        values = REFERENCE_ELEMENT.values(REFERENCE_VERTICES)
        table = np.array([[values[i, v] @ REFERENCE_NORMALS[k] for (k, v) in REFERENCE_ELEMENT.dofs]
                          for i in range(6)])
        np.testing.assert_allclose(table, np.eye(6), atol=1e-14)

    def test_divergence(self):
        """Test the constant divergence integrates to half the facet length."""
        for i, (k, _) in enumerate(REFERENCE_ELEMENT.dofs):
            self.assertAlmostEqual(0.5 * REFERENCE_ELEMENT.divergence()[i], 0.5 * REFERENCE_LENGTHS[k])

    def test_vertex_dofs(self):
        self.assertEqual(REFERENCE_ELEMENT.vertex_dofs(0), [3, 4])


class PiolaTest(SimpleTestCase):
    """Test cases for the contravariant Piola map."""

    def test_reference_is_identity(self):
        piola = piola_map(REFERENCE_VERTICES)
        np.testing.assert_array_equal(piola.DF, np.eye(2))
        self.assertEqual(piola.J, 1.0)
        np.testing.assert_allclose(piola.facet_scaling, 1.0)

    def test_degenerate(self):
        with self.assertRaises(InvalidGeometryError):
            piola_map([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])

    def test_physical_normal_components(self):
        """Test the physical basis keeps unit normal components at its vertex."""
        values = physical_vertex_values(piola_map(TRIANGLE))
        normals = outward_normals(TRIANGLE)
        for i, (k, v) in enumerate(REFERENCE_ELEMENT.dofs):
            self.assertAlmostEqual(values[i, v] @ normals[k], 1.0, places=12)


class QuadratureMassTest(SimpleTestCase):
    """Test cases for the vertex quadrature mass matrix."""

    def test_block_structure(self):
        """Test only the three vertex blocks are filled, each symmetric positive definite."""
        K = np.array([[2.0, 0.3], [0.3, 0.5]])
        mass = assemble_vertex_quadrature_mass(TRIANGLE, K)
        M = mass.matrix
        np.testing.assert_allclose(M, M.T, atol=1e-14)
        mask = np.zeros((6, 6), dtype=bool)
        for v in range(3):
            dofs = REFERENCE_ELEMENT.vertex_dofs(v)
            mask[np.ix_(dofs, dofs)] = True
            self.assertTrue(np.all(np.linalg.eigvalsh(mass.vertex_block(v)) > 0.0))
        np.testing.assert_array_equal(M[~mask], 0.0)


class StencilEquivalenceTest(SimpleTestCase):
    """Test cases comparing eliminated velocity stencils with MPFA-O."""

    def test_interior_vertices_match_mpfa(self):
        """Test stencils agree with eta = 1/3 for random cellwise SPD permeability."""
        mesh = generate_structured((0.0, 1.0, 0.0, 1.0), 3, 3, 'tri')
        regions = build_interaction_regions(mesh)
        kinds = boundary_kinds(mesh, dirichlet=mesh.boundary_facets)
        interior = [v for v in range(mesh.num_vertices) if not regions[v].boundary.any()]
        self.assertEqual(len(interior), 4)
        rng = np.random.default_rng(2024)
        for _ in range(20):
            perm = random_spd_field(rng, mesh.num_cells)
            for v in interior:
                mixed = eliminate_velocity(mesh, v, perm)
                mpfa = local_gradient_system(regions[v], mesh, perm, kinds, eta=1.0 / 3.0)
                scale = np.abs(mpfa.flux_cell).max()
                np.testing.assert_allclose(mixed.flux_cell, mpfa.flux_cell, atol=1e-10 * scale)

    def test_constant_pressure_has_no_flux(self):
        mesh = generate_structured((0.0, 1.0, 0.0, 1.0), 2, 2, 'tri')
        perm = random_spd_field(np.random.default_rng(3), mesh.num_cells)
        stencil = eliminate_velocity(mesh, 4, perm)
        np.testing.assert_allclose(stencil.flux_cell @ np.ones(len(stencil.cells)), 0.0, atol=1e-12)

    def test_quadrilaterals_rejected(self):
        mesh = generate_structured((0.0, 1.0, 0.0, 1.0), 2, 2, 'quad')
        with self.assertRaises(UnsupportedMeshError):
            eliminate_velocity(mesh, 4, PermField.constant(mesh.num_cells, np.eye(2)))
