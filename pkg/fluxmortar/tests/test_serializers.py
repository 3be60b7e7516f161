"""
Tests for configuration parsing and validation.
"""
import os
import tempfile

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from fluxmortar.exceptions import ConfigError
from fluxmortar.serializers import RunConfigSerializer, known_keys, parse_config, parse_text


def error_items(text):
    try:
        parse_text(text)
    except ConfigError as exc:
        return exc.details['errors']
    raise AssertionError('configuration was accepted')


class DefaultsTest(SimpleTestCase):
    """Test cases for defaults applied to an empty configuration."""

    def test_empty_config(self):
        config = parse_text('')
        self.assertEqual(config.mode, 'solve')
        self.assertEqual(config['projection'], 'flat')
        self.assertEqual(config['solver.tol'], 1e-10)
        self.assertEqual(config['solver.method'], 'cg')
        self.assertEqual(config['domain.subdomains'], [3, 3])
        self.assertEqual(config['mesh.resolution'], [6, 8])
        self.assertEqual(config['mortar.degree'], 1)
        self.assertTrue(config['mortar.continuous'])
        self.assertEqual(config['mpfa.eta'], 0.0)

    @override_settings(FLUXMORTAR={'WORKERS': 3, 'OUTPUT_DIR': '/tmp/runs', 'CG_TOL': 1e-8, 'MAX_IT': 50,
                                   'SIGMA_MIN_REJECT': 1e-8})
    def test_defaults_follow_settings(self):
        config = parse_text('')
        self.assertEqual(config['solver.workers'], 3)
        self.assertEqual(config['solver.tol'], 1e-8)
        self.assertEqual(config['output.dir'], '/tmp/runs')

    def test_values_and_comments(self):
        config = parse_text(
            '# refinement study\n'
            'mode = convergence\n'
            'mesh.element = tri-crisscross   # alternating diagonals\n'
            'mesh.resolution = 2, 3\n'
            'mortar.degree = 0\n'
            'mortar.continuous = false\n'
            'projection = sharp\n'
        )
        self.assertEqual(config.mode, 'convergence')
        self.assertEqual(config['mesh.element'], 'tri')
        self.assertEqual(config['mesh.resolution'], [2, 3])
        self.assertEqual(config['mortar.degree'], 0)
        self.assertFalse(config['mortar.continuous'])
        self.assertEqual(config.lines['mesh.resolution'], 4)

    def test_known_keys(self):
        keys = known_keys()
        self.assertIn('mortar.cells', keys)
        self.assertIn('permeability.raster_shape', keys)
        self.assertIn('mode', keys)


class LineErrorTest(SimpleTestCase):
    """Test cases for errors reported with their line numbers."""

    def test_unknown_key(self):
        items = error_items('mode = solve\nmortar.cell = 3\n')
        self.assertEqual(items, [{'line': 2, 'key': 'mortar.cell', 'message': "Unknown key 'mortar.cell'."}])

    def test_missing_equals(self):
        items = error_items('\nmortar.cells 3\n')
        self.assertEqual(items[0]['line'], 2)
        self.assertIsNone(items[0]['key'])

    def test_duplicate_key(self):
        items = error_items('mortar.cells = 3\nmortar.cells = 4\n')
        self.assertEqual(items[0]['line'], 2)
        self.assertIn('line 1', items[0]['message'])

    def test_type_mismatch(self):
        items = error_items('mode = solve\n\nmortar.cells = many\n')
        self.assertEqual(items[0]['line'], 3)
        self.assertEqual(items[0]['key'], 'mortar.cells')

    def test_message_names_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_text('solver.tol = -1\n', path='run.cfg')
        self.assertEqual(ctx.exception.exit_code, 2)
        self.assertIn('run.cfg', ctx.exception.message)
        self.assertIn('line 1: solver.tol', ctx.exception.message)

    def test_bad_choice(self):
        items = error_items('projection = round\n')
        self.assertEqual((items[0]['line'], items[0]['key']), (1, 'projection'))

    def test_indefinite_tensor(self):
        items = error_items('permeability.kind = tensor\npermeability.tensor = 1, 2, 1\n')
        self.assertEqual((items[0]['line'], items[0]['key']), (2, 'permeability.tensor'))


class CrossFieldTest(SimpleTestCase):
    """Test cases for validation across groups."""

    def test_resolution_count(self):
        items = error_items('domain.subdomains = 2, 2\nmesh.resolution = 2, 3, 4\n')
        self.assertEqual(items[0]['key'], 'mesh.resolution')
        self.assertEqual(items[0]['line'], 2)
        self.assertIn('Expected 1, 2 or 4', items[0]['message'])

    def test_local_refinement_count(self):
        items = error_items('domain.subdomains = 2, 1\nmesh.local_refinements = 0, 1, 2\n')
        self.assertEqual(items[0]['key'], 'mesh.local_refinements')

    def test_oracle_needs_matching_grids(self):
        """Test oracle-compare rejects non-matching resolutions with a hint."""
        items = error_items('mode = oracle-compare\nmesh.resolution = 2, 3\n')
        self.assertEqual(items[0]['line'], 2)
        self.assertIn('matching subdomain grids', items[0]['message'])

    def test_oracle_needs_quads(self):
        items = error_items('mode = oracle-compare\nmesh.resolution = 2\nmesh.element = tri\n')
        self.assertEqual(items[0]['key'], 'mesh.element')

    def test_oracle_needs_aligned_permeability(self):
        items = error_items('mode = oracle-compare\nmesh.resolution = 2\n'
                            'permeability.anisotropy = 0.1\npermeability.angle = 30\n')
        self.assertEqual(items[0]['key'], 'permeability.kind')
        self.assertEqual(items[0]['line'], 3)

    def test_oracle_accepts_quarter_turn(self):
        config = parse_text('mode = oracle-compare\nmesh.resolution = 2\n'
                            'permeability.anisotropy = 0.1\npermeability.angle = 90\n')
        self.assertEqual(config.mode, 'oracle-compare')

    def test_demo_raster_needs_raster(self):
        items = error_items('mode = demo-raster\n')
        self.assertEqual(items[0]['key'], 'permeability.kind')

    def test_raster_needs_shape(self):
        items = error_items('permeability.kind = raster\npermeability.raster = perm.txt\n')
        self.assertEqual(items[0]['key'], 'permeability.raster')


class RasterFileTest(SimpleTestCase):
    """Test cases for raster files referenced by a configuration."""

    def write(self, tmp, name, text):
        path = os.path.join(tmp, name)
        with open(path, 'w') as handle:
            handle.write(text)
        return path

    def test_relative_raster_path(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.write(tmp, 'perm.txt', '1 2\n3 4\n')
            path = self.write(tmp, 'run.cfg', 'mode = demo-raster\npermeability.kind = raster\n'
                                              'permeability.raster = perm.txt\npermeability.raster_shape = 2, 2\n')
            config = parse_config(path)
        self.assertEqual(config['permeability.values'].tolist(), [1.0, 2.0, 3.0, 4.0])

    def test_wrong_value_count(self):
        """Test a raster with too few values reports the expected and found counts."""
        with tempfile.TemporaryDirectory() as tmp:
            self.write(tmp, 'perm.txt', '1 2 3\n')
            path = self.write(tmp, 'run.cfg', 'permeability.kind = raster\n'
                                              'permeability.raster = perm.txt\npermeability.raster_shape = 2, 2\n')
            with self.assertRaises(ConfigError) as ctx:
                parse_config(path)
        item = ctx.exception.details['errors'][0]
        self.assertEqual(item['line'], 2)
        self.assertIn('has 3 values, expected 4', item['message'])

    def test_missing_config(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config('/nonexistent/run.cfg')
        self.assertEqual(ctx.exception.details, {'path': '/nonexistent/run.cfg'})


class SerializerTest(SimpleTestCase):

    def test_nested_groups(self):
        serializer = RunConfigSerializer(data={'mortar': {'cells': '5'}, 'domain': {}, 'mesh': {},
                                               'permeability': {}, 'problem': {}, 'study': {}, 'solver': {},
                                               'mpfa': {}, 'output': {}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['mortar']['cells'], 5)


class SampleConfigTest(SimpleTestCase):
    """Test cases for the configurations shipped in configs/."""

    def test_samples_parse(self):
        directory = settings.BASE_DIR / 'configs'
        samples = sorted(directory.glob('*.cfg'))
        self.assertEqual(len(samples), 4)
        modes = {parse_config(path).mode for path in samples}
        self.assertEqual(modes, {'convergence', 'solve', 'oracle-compare', 'demo-raster'})
