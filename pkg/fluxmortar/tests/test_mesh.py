"""
Tests for meshes, refinement and the box decomposition.
"""
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from fluxmortar.exceptions import InvalidDecompositionError, InvalidGeometryError, UnsupportedMeshError
from fluxmortar.mesh import (
    Decomposition,
    Mesh2D,
    build_interface_grid,
    decompose,
    generate_structured,
    read_ascii,
    refine_uniform,
    write_ascii,
)

UNIT = (0.0, 1.0, 0.0, 1.0)


class StructuredMeshTest(SimpleTestCase):
    """Test cases for structured mesh generation."""

    def test_single_quad(self):
        """Test a 1x1 quad mesh has one unit cell and four facets."""
        mesh = generate_structured(UNIT, 1, 1, 'quad')
        self.assertEqual(mesh.num_cells, 1)
        self.assertEqual(mesh.num_facets, 4)
        self.assertAlmostEqual(mesh.cell_areas[0], 1.0)

    def test_counts(self):
        """Test cell and facet counts of small quad and triangle meshes."""
        quads = generate_structured(UNIT, 2, 2, 'quad')
        self.assertEqual((quads.num_cells, quads.num_facets), (4, 12))
        triangles = generate_structured(UNIT, 1, 1, 'tri')
        self.assertEqual((triangles.num_cells, triangles.num_facets), (2, 5))
        crisscross = generate_structured(UNIT, 1, 1, 'tri-crisscross')
        self.assertEqual(crisscross.num_cells, 2)

    def test_alternating_diagonals(self):
        """Test every other vertex of a triangle mesh is shared by eight triangles."""
        mesh = generate_structured(UNIT, 4, 4, 'tri')
        counts = sorted({len(mesh.vertex_cells[v]) for v in range(mesh.num_vertices)
                         if 0.0 < mesh.vertices[v, 0] < 1.0 and 0.0 < mesh.vertices[v, 1] < 1.0})
        self.assertEqual(counts, [4, 8])

    def test_invalid_extent(self):
        """Test a zero-width box is rejected."""
        with self.assertRaises(InvalidGeometryError):
            generate_structured((0.0, 0.0, 0.0, 1.0), 2, 2, 'quad')

    def test_unknown_element(self):
        with self.assertRaises(UnsupportedMeshError):
            generate_structured(UNIT, 2, 2, 'hex')

    def test_normals_point_to_higher_cell(self):
        """Test interior normals point from the lower to the higher cell index."""
        mesh = generate_structured(UNIT, 3, 2, 'tri')
        interior = np.flatnonzero(mesh.facet_cells[:, 1] >= 0)
        c0, c1 = mesh.facet_cells[interior].T
        self.assertTrue(np.all(c0 < c1))
        towards = mesh.cell_centers[c1] - mesh.cell_centers[c0]
        self.assertTrue(np.all(np.sum(towards * mesh.facet_normals[interior], axis=1) > 0.0))

    def test_boundary_normals_outward(self):
        mesh = generate_structured(UNIT, 2, 3, 'quad')
        boundary = mesh.boundary_facets
        arm = mesh.facet_centers[boundary] - mesh.cell_centers[mesh.facet_cells[boundary, 0]]
        self.assertTrue(np.all(np.sum(arm * mesh.facet_normals[boundary], axis=1) > 0.0))

    def test_two_facets_per_cell_vertex(self):
        """Test every cell-vertex pair has exactly two incident facets of that cell."""
        mesh = generate_structured(UNIT, 2, 2, 'tri')
        for c, cell in enumerate(mesh.cells):
            for v in cell:
                first, second = mesh.facets_at_vertex(c, v)
                self.assertNotEqual(first, second)
                self.assertIn(v, mesh.facets[first])
                self.assertIn(v, mesh.facets[second])

    def test_cell_integrals(self):
        """Test cell integrals of a quadratic are exact."""
        mesh = generate_structured(UNIT, 2, 2, 'tri')
        total = mesh.cell_integrals(lambda x, y: x * y + x ** 2).sum()
        self.assertAlmostEqual(total, 0.25 + 1.0 / 3.0, places=12)


class MeshValidationTest(SimpleTestCase):
    """Test cases for mesh validity checks."""

    def test_duplicate_vertices(self):
        vertices = [(0, 0), (1, 0), (1, 1), (1, 1 + 1e-15)]
        with self.assertRaises(InvalidGeometryError):
            Mesh2D(vertices, [(0, 1, 2)])

    def test_clockwise_cell(self):
        """Test a clockwise cell is reported with non-positive area."""
        with self.assertRaises(InvalidGeometryError):
            Mesh2D([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])

    def test_repeated_vertex(self):
        with self.assertRaises(UnsupportedMeshError):
            Mesh2D([(0, 0), (1, 0), (0, 1)], [(0, 1, 1, 2)])

    def test_ascii_round_trip(self):
        """Test the ASCII mesh format preserves vertices and cells."""
        mesh = generate_structured((0.0, 2.0, 0.0, 1.0), 3, 2, 'tri')
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'mesh.txt')
            write_ascii(mesh, path)
            loaded = read_ascii(path)
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        self.assertEqual(loaded.cells, mesh.cells)

    def test_malformed_ascii(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'mesh.txt')
            with open(path, 'w') as handle:
                handle.write('vertices 3\n0 0\n1 0\n')
            with self.assertRaises(InvalidGeometryError):
                read_ascii(path)


class RefinementTest(SimpleTestCase):
    """Test cases for uniform refinement."""

    def test_triangles(self):
        """Test refining triangles quadruples the cells and halves h."""
        mesh = generate_structured(UNIT, 2, 2, 'tri')
        fine = refine_uniform(mesh)
        self.assertEqual(fine.num_cells, 4 * mesh.num_cells)
        self.assertAlmostEqual(fine.h_max, 0.5 * mesh.h_max)
        self.assertAlmostEqual(fine.cell_areas.sum(), 1.0)

    def test_quads_keep_parent_map(self):
        """Test child cells cover their parent exactly."""
        mesh = generate_structured((0.0, 2.0, 0.0, 1.0), 2, 3, 'quad')
        fine = refine_uniform(mesh)
        self.assertEqual(len(fine.parent), fine.num_cells)
        areas = np.bincount(fine.parent, weights=fine.cell_areas)
        np.testing.assert_allclose(areas, mesh.cell_areas, rtol=1e-12)

    def test_refined_mesh_is_conforming(self):
        fine = refine_uniform(refine_uniform(generate_structured(UNIT, 1, 1, 'tri')))
        self.assertEqual(len(fine.boundary_facets), 16)


class DecompositionTest(SimpleTestCase):
    """Test cases for the box decomposition and interfaces."""

    def setUp(self):
        self.decomposition = decompose((0.0, 2.0, 0.0, 2.0), (3, 3), (6, 8), 'quad')

    def test_layout(self):
        """Test a 3x3 layout has twelve interfaces and one interior subdomain."""
        self.assertEqual(len(self.decomposition), 9)
        self.assertEqual(len(self.decomposition.interfaces), 12)
        self.assertEqual(self.decomposition.interior, (4,))

    def test_checkerboard_resolution(self):
        """Test two resolutions alternate between neighbouring subdomains."""
        cells = [sub.mesh.num_cells for sub in self.decomposition]
        self.assertEqual(cells[0], 36)
        self.assertEqual(cells[1], 64)
        self.assertEqual(cells[4], 36)

    def test_interface_orientation(self):
        """Test each interface normal points from the lower to the upper subdomain."""
        for e in self.decomposition.interfaces:
            self.assertLess(e.lower, e.upper)
            lower = np.array(self.decomposition.subdomains[e.lower].box)
            upper = np.array(self.decomposition.subdomains[e.upper].box)
            shift = np.array([upper[0] + upper[1] - lower[0] - lower[1],
                              upper[2] + upper[3] - lower[2] - lower[3]])
            self.assertGreater(shift @ np.array(e.normal), 0.0)
            self.assertEqual(e.side_sign(e.lower), 1.0)
            self.assertEqual(e.side_sign(e.upper), -1.0)

    def test_facets_classified(self):
        """Test every boundary facet is on an interface or the outer boundary."""
        for sub in self.decomposition:
            self.assertEqual(set(sub.facet_owner), set(int(f) for f in sub.mesh.boundary_facets))
        center = self.decomposition.subdomains[4]
        self.assertEqual(len(center.outer_facets()), 0)
        self.assertEqual(len(center.interface_facets()), 4 * 6)

    def test_interface_grid(self):
        """Test interface grids tile the interface with positive cells."""
        e = self.decomposition.interfaces[0]
        grid = build_interface_grid(e, 3)
        self.assertEqual(grid.num_cells, 3)
        self.assertTrue(np.all(grid.cell_lengths > 0.0))
        self.assertAlmostEqual(grid.cell_lengths.sum(), e.length)
        np.testing.assert_allclose(grid.coordinates[[0, -1]], [e.start, e.end])

    def test_local_refinements(self):
        """Test per-subdomain refinement counts."""
        decomposition = decompose((0.0, 2.0, 0.0, 1.0), (2, 1), 2, 'tri', refinements=[0, 2])
        self.assertEqual(decomposition.subdomains[0].mesh.num_cells, 8)
        self.assertEqual(decomposition.subdomains[1].mesh.num_cells, 128)

    def test_refined_copy(self):
        refined = self.decomposition.refined()
        self.assertEqual(refined.num_cells, 4 * self.decomposition.num_cells)
        self.assertAlmostEqual(refined.h_min, 0.5 * self.decomposition.h_min)

    def test_overlap_rejected(self):
        meshes = [generate_structured((0.0, 0.6, 0.0, 1.0), 1, 1), generate_structured((0.4, 1.0, 0.0, 1.0), 1, 1)]
        with self.assertRaises(InvalidDecompositionError):
            Decomposition(UNIT, [(0.0, 0.6, 0.0, 1.0), (0.4, 1.0, 0.0, 1.0)], meshes)

    def test_gap_rejected(self):
        meshes = [generate_structured((0.0, 0.4, 0.0, 1.0), 1, 1), generate_structured((0.6, 1.0, 0.0, 1.0), 1, 1)]
        with self.assertRaises(InvalidDecompositionError):
            Decomposition(UNIT, [(0.0, 0.4, 0.0, 1.0), (0.6, 1.0, 0.0, 1.0)], meshes)

    def test_wrong_resolution_count(self):
        with self.assertRaises(InvalidDecompositionError):
            decompose(UNIT, (2, 2), [2, 3, 4], 'quad')
