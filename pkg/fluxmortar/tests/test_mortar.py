"""
Tests for mortar spaces, projections and the coarse operator.
"""
import numpy as np
from django.test import SimpleTestCase

from fluxmortar.exceptions import MortarConditionError
from fluxmortar.mesh import decompose
from fluxmortar.mortar import (
    FLAT,
    SHARP,
    MortarCoupling,
    MortarSpace,
    apply_P,
    assemble_B,
    assemble_Qflat,
    assemble_Qsharp,
    build_trace_space,
    facet_moments,
    mortar_condition_sigma,
    solve_coarse_step1,
    solve_coarse_step4,
)

STRIP = (0.0, 2.0, 0.0, 1.0)


def two_subdomains(resolution):
    return decompose(STRIP, (2, 1), resolution, 'quad')


class MortarSpaceTest(SimpleTestCase):
    """Test cases for mortar spaces on interface grids."""

    def test_dimensions(self):
        decomposition = decompose((0.0, 2.0, 0.0, 2.0), (3, 3), (6, 8), 'quad')
        self.assertEqual(MortarSpace.build(decomposition, 3, 0).dim, 36)
        self.assertEqual(MortarSpace.build(decomposition, 3, 1, continuous=True).dim, 48)
        self.assertEqual(MortarSpace.build(decomposition, 3, 1, continuous=False).dim, 72)

    def test_mass(self):
        """Test the continuous P1 mass matrix of one unit cell."""
        space = MortarSpace.build(two_subdomains(2), 1, 1)
        np.testing.assert_allclose(space.masses[0], [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
        g = np.array([1.0, -2.0])
        np.testing.assert_allclose(space.mass @ space.solve_mass(g), g)

    def test_interpolate_linear(self):
        """Test P1 interpolation reproduces a linear function."""
        space = MortarSpace.build(two_subdomains(2), 3, 1, continuous=False)
        dofs = space.interpolate(0, lambda s: 2.0 * s - 1.0)
        s = np.linspace(0.0, 1.0, 7)
        np.testing.assert_allclose(space.evaluate(dofs, 0, s), 2.0 * s - 1.0, atol=1e-12)

    def test_unsupported_degree(self):
        with self.assertRaises(MortarConditionError):
            MortarSpace.build(two_subdomains(2), 1, 2)


class ProjectionTest(SimpleTestCase):
    """Test cases for the flat and sharp projections."""

    def test_flat_averages(self):
        """Test facet averages of the P1 hat functions on two half facets."""
        decomposition = two_subdomains(2)
        space = MortarSpace.build(decomposition, 1, 1)
        lower = build_trace_space(decomposition, 0, 0)
        upper = build_trace_space(decomposition, 1, 0)
        expected = np.array([[0.75, 0.25], [0.25, 0.75]])
        np.testing.assert_allclose(assemble_Qflat(space, lower, 0), expected)
        np.testing.assert_allclose(assemble_Qflat(space, upper, 0), -expected)

    def test_trace_space(self):
        decomposition = two_subdomains([2, 3])
        trace = build_trace_space(decomposition, 1, 0)
        self.assertEqual(trace.size, 3)
        self.assertEqual(trace.sign, -1.0)
        self.assertAlmostEqual(trace.lengths.sum(), 1.0)
        np.testing.assert_allclose(trace.mass, np.diag(trace.lengths))

    def test_sharp_weak_continuity(self):
        """Test sharp projections are weakly continuous for random mortars."""
        decomposition = two_subdomains([4, 6])
        space = MortarSpace.build(decomposition, 2, 1)
        trace_i = build_trace_space(decomposition, 0, 0)
        trace_j = build_trace_space(decomposition, 1, 0)
        Q_i, Q_j = assemble_Qsharp(0, trace_i, trace_j, space)
        G_i = facet_moments(space, 0, trace_i)
        G_j = facet_moments(space, 0, trace_j)
        rng = np.random.default_rng(11)
        for _ in range(50):
            mu = rng.standard_normal(space.dim)
            residual = G_i.T @ (Q_i @ mu) + G_j.T @ (Q_j @ mu)
            self.assertLess(np.abs(residual).max(), 1e-12)

    def test_sharp_matching_equals_flat(self):
        """Test both variants coincide when the traces match and the mortar equals them."""
        decomposition = two_subdomains(3)
        space = MortarSpace.build(decomposition, 3, 0)
        trace_i = build_trace_space(decomposition, 0, 0)
        trace_j = build_trace_space(decomposition, 1, 0)
        Q_i, Q_j = assemble_Qsharp(0, trace_i, trace_j, space)
        np.testing.assert_allclose(Q_i, assemble_Qflat(space, trace_i, 0), atol=1e-12)
        np.testing.assert_allclose(Q_j, assemble_Qflat(space, trace_j, 0), atol=1e-12)

    def test_sigma_matching_traces(self):
        """Test sigma_min is sqrt(2) when both traces equal the mortar grid."""
        decomposition = two_subdomains(2)
        space = MortarSpace.build(decomposition, 2, 0)
        trace_i = build_trace_space(decomposition, 0, 0)
        trace_j = build_trace_space(decomposition, 1, 0)
        Q_i = assemble_Qflat(space, trace_i, 0)
        Q_j = assemble_Qflat(space, trace_j, 0)
        sigma = mortar_condition_sigma(Q_i, Q_j, space.masses[0], trace_i.mass, trace_j.mass)
        self.assertAlmostEqual(sigma, np.sqrt(2.0), places=12)

    def test_sigma_decreases_under_mortar_refinement(self):
        """Test flat sigma_min does not grow over nested mortar grids on fixed traces."""
        decomposition = two_subdomains([4, 6])
        for degree, cells in ((0, (1, 2, 4)), (1, (1, 2))):
            sigmas = [MortarCoupling(decomposition, MortarSpace.build(decomposition, n, degree), FLAT).sigma_min[0]
                      for n in cells]
            for coarse, fine in zip(sigmas, sigmas[1:]):
                self.assertGreaterEqual(coarse, fine - 1e-12, (degree, sigmas))
        p0 = MortarCoupling(decomposition, MortarSpace.build(decomposition, 1, 0), FLAT).sigma_min[0]
        p1 = MortarCoupling(decomposition, MortarSpace.build(decomposition, 1, 1), FLAT).sigma_min[0]
        self.assertGreaterEqual(p0, p1 - 1e-12)

    def test_too_fine_mortar_rejected(self):
        """Test a mortar richer than both traces is rejected for either variant."""
        decomposition = two_subdomains(1)
        space = MortarSpace.build(decomposition, 4, 1)
        for variant in (FLAT, SHARP):
            with self.assertRaises(MortarConditionError):
                MortarCoupling(decomposition, space, variant)

    def test_coupling_maps(self):
        """Test the subdomain map scatters projections onto interface facets."""
        decomposition = two_subdomains([2, 3])
        space = MortarSpace.build(decomposition, 1, 0)
        coupling = MortarCoupling(decomposition, space, FLAT)
        lower = coupling.project(0, np.array([2.0]))
        upper = coupling.project(1, np.array([2.0]))
        self.assertAlmostEqual(float(decomposition.subdomains[0].mesh.facet_lengths @ lower), 2.0)
        self.assertAlmostEqual(float(decomposition.subdomains[1].mesh.facet_lengths @ upper), -2.0)
        self.assertEqual(set(coupling.sigma_min), {0})
        self.assertLess(max(coupling.weak_continuity_residual(np.array([2.0]))), 1e-12)


class CoarseOperatorTest(SimpleTestCase):
    """Test cases for B, the projector P and the coarse solves."""

    def setUp(self):
        self.decomposition = decompose((0.0, 2.0, 0.0, 2.0), (3, 3), (3, 4), 'quad')

    def coarse(self, degree=1, n_cells=2):
        space = MortarSpace.build(self.decomposition, n_cells, degree)
        coupling = MortarCoupling(self.decomposition, space, FLAT)
        return space, assemble_B(coupling, [4])

    def test_perimeter(self):
        """Test the B row of the centre subdomain integrates the mortar over its boundary."""
        _, coarse = self.coarse(degree=0, n_cells=1)
        row = coarse.B[0]
        self.assertAlmostEqual(np.abs(row).sum(), 8.0 / 3.0)
        self.assertEqual(np.count_nonzero(row), 4)

    def test_projector(self):
        """Test P is symmetric, idempotent and maps into ker B."""
        space, coarse = self.coarse()
        P = np.column_stack([apply_P(coarse, e) for e in np.eye(space.dim)])
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        self.assertLess(np.abs(coarse.B @ P).max(), 1e-12)

    def test_step1(self):
        _, coarse = self.coarse()
        mortar = solve_coarse_step1(coarse, [0.7])
        np.testing.assert_allclose(coarse.apply(mortar), [0.7])

    def test_step4(self):
        """Test the pressure constant recovered from B^T c."""
        _, coarse = self.coarse()
        c = solve_coarse_step4(coarse, coarse.B.T @ np.array([1.5]))
        np.testing.assert_allclose(c, [1.5])

    def test_no_floating(self):
        space = MortarSpace.build(self.decomposition, 2, 1)
        coupling = MortarCoupling(self.decomposition, space, FLAT)
        coarse = assemble_B(coupling, [])
        self.assertTrue(coarse.is_empty)
        mu = np.arange(space.dim, dtype=float)
        np.testing.assert_array_equal(apply_P(coarse, mu), mu)
        self.assertEqual(solve_coarse_step4(coarse, mu).size, 0)
