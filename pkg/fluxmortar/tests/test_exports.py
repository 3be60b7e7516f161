"""
Tests for field exports and manifest rendering.
"""
import json
import os
import tempfile

import meshio
import numpy as np
from django.test import SimpleTestCase

from fluxmortar.exceptions import MortarConditionError
from fluxmortar.exports import cell_velocities, export_fields, render_manifest, to_meshio, write_manifest
from fluxmortar.mesh import generate_structured

UNIT = (0.0, 1.0, 0.0, 1.0)


class CellVelocityTest(SimpleTestCase):

    def test_constant_velocity_is_reconstructed(self):
        """Test facet fluxes of a constant field average back to that field."""
        mesh = generate_structured(UNIT, 3, 3, 'tri')
        u = np.array([1.0, -2.0])
        fluxes = mesh.facet_normals @ u * mesh.facet_lengths
        np.testing.assert_allclose(cell_velocities(mesh, fluxes), np.tile(u, (mesh.num_cells, 1)), atol=1e-12)

    def test_zero_flux(self):
        mesh = generate_structured(UNIT, 2, 1, 'quad')
        np.testing.assert_array_equal(cell_velocities(mesh, np.zeros(mesh.num_facets)), 0.0)


class FieldExportTest(SimpleTestCase):
    """Test cases for VTK output."""

    def test_single_cell(self):
        mesh = generate_structured(UNIT, 1, 1, 'quad')
        out = to_meshio([mesh], [np.array([3.0])])
        self.assertEqual(len(out.cells), 1)
        self.assertEqual(out.cells[0].type, 'quad')
        self.assertEqual(out.cell_data['pressure'][0].tolist(), [3.0])

    def test_subdomains_are_stacked(self):
        """Test subdomain meshes keep their own vertices and carry their index."""
        meshes = [generate_structured((0.0, 1.0, 0.0, 1.0), 2, 2, 'quad'),
                  generate_structured((1.0, 2.0, 0.0, 1.0), 3, 3, 'quad')]
        pressures = [np.zeros(4), np.ones(9)]
        out = to_meshio(meshes, pressures)
        self.assertEqual(len(out.points), 9 + 16)
        self.assertEqual(out.cell_data['subdomain'][0].tolist(), [0] * 4 + [1] * 9)

    def test_write_and_read_back(self):
        mesh = generate_structured(UNIT, 2, 2, 'tri')
        pressure = np.arange(mesh.num_cells, dtype=float)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_fields(mesh, pressure, np.zeros(mesh.num_facets), os.path.join(tmp, 'out', 'fields.vtk'))
            with open(path) as handle:
                self.assertTrue(handle.readline().startswith('# vtk DataFile'))
            back = meshio.read(str(path))
        self.assertEqual(sum(len(block.data) for block in back.cells), mesh.num_cells)
        np.testing.assert_allclose(np.concatenate(back.cell_data['pressure']).ravel(), pressure)


class ManifestTest(SimpleTestCase):
    """Test cases for the manifest envelope."""

    def test_success_envelope(self):
        body = json.loads(render_manifest({'mode': 'solve', 'iterations': 4}))
        self.assertEqual(body, {'success': True, 'data': {'mode': 'solve', 'iterations': 4}})

    def test_error_envelope(self):
        exc = MortarConditionError('Mortar condition fails on interface 2.', {'interface': 2})
        body = json.loads(render_manifest(exc.as_dict(), success=False))
        self.assertFalse(body['success'])
        self.assertEqual(body['error']['code'], 'MORTAR_CONDITION')
        self.assertEqual(body['error']['details'], {'interface': 2})

    def test_write(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_manifest(os.path.join(tmp, 'nested', 'manifest.json'), {'mode': 'convergence'})
            with open(path) as handle:
                self.assertEqual(json.load(handle)['data']['mode'], 'convergence')
