"""
Serializers for run configuration files.

A configuration file holds one `key = value` per line with flat dotted keys
(`mesh.resolution = 6,8`); `#` starts a comment. Keys are grouped by their
prefix into nested serializers and validation errors are reported with the
line they came from.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from .exceptions import ConfigError
from .permeability import load_raster

logger = logging.getLogger(__name__)

MODES = ('convergence', 'solve', 'oracle-compare', 'demo-raster')


class CommaSeparatedListField(serializers.ListField):
    """
    List field accepting "a,b,c" strings as well as lists.
    """

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(',') if item.strip()]
        return super().to_internal_value(data)


def float_list(length=None, **kwargs):
    return CommaSeparatedListField(child=serializers.FloatField(), min_length=length, max_length=length, **kwargs)


def int_list(length=None, min_value=None, **kwargs):
    return CommaSeparatedListField(
        child=serializers.IntegerField(min_value=min_value), min_length=length, max_length=length, **kwargs
    )


class DomainSerializer(serializers.Serializer):
    """
    Serializer for the domain box and its subdomain layout.
    """
    extent = float_list(4, default=[0.0, 2.0, 0.0, 2.0], help_text='x0,x1,y0,y1')
    subdomains = int_list(2, min_value=1, default=[3, 3], help_text='Subdomains along x and y')

    def validate_extent(self, value):
        x0, x1, y0, y1 = value
        if x1 <= x0 or y1 <= y0:
            raise serializers.ValidationError('Extent must satisfy x0 < x1 and y0 < y1.')
        return value


class MeshSerializer(serializers.Serializer):
    """
    Serializer for subdomain meshes.
    """
    element = serializers.ChoiceField(choices=['quad', 'tri', 'tri-crisscross'], default='quad')
    resolution = int_list(min_value=1, default=[6, 8], help_text='Checkerboard pair or one value per subdomain')
    refinements = serializers.IntegerField(min_value=0, default=0)
    local_refinements = int_list(min_value=0, default=list, allow_empty=True)

    def validate_element(self, value):
        return 'tri' if value == 'tri-crisscross' else value


class MortarSerializer(serializers.Serializer):
    """
    Serializer for the mortar space.
    """
    cells = serializers.IntegerField(min_value=1, default=3, help_text='Mortar cells per interface')
    degree = serializers.ChoiceField(choices=[0, 1], default=1)
    continuous = serializers.BooleanField(default=True)


class PermeabilitySerializer(serializers.Serializer):
    """
    Serializer for the permeability description.
    """
    kind = serializers.ChoiceField(choices=['scalar', 'tensor', 'raster'], default='scalar')
    value = serializers.FloatField(min_value=0.0, default=1.0)
    tensor = float_list(3, default=[1.0, 0.0, 1.0], help_text='kxx,kxy,kyy')
    raster = serializers.CharField(required=False)
    raster_shape = int_list(2, min_value=1, required=False)
    anisotropy = serializers.FloatField(default=1.0)
    angle = serializers.FloatField(default=0.0, help_text='Clockwise rotation in degrees')

    def validate_value(self, value):
        if value <= 0.0:
            raise serializers.ValidationError('Permeability must be positive.')
        return value

    def validate_anisotropy(self, value):
        if value <= 0.0:
            raise serializers.ValidationError('Anisotropy ratio must be positive.')
        return value

    def validate_tensor(self, value):
        kxx, kxy, kyy = value
        if kxx <= 0.0 or kxx * kyy - kxy ** 2 <= 0.0:
            raise serializers.ValidationError('Tensor kxx,kxy,kyy is not positive definite.')
        return value

    def validate(self, attrs):
        if attrs['kind'] == 'raster':
            if not attrs.get('raster') or not attrs.get('raster_shape'):
                raise serializers.ValidationError(
                    {'raster': 'A raster permeability needs permeability.raster and permeability.raster_shape.'}
                )
        return attrs


class ProblemSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['example1', 'linear', 'pressure-drop'], default='example1')
    gradient = float_list(3, default=[1.0, 0.0, 0.0], help_text='a,b,c of p = a x + b y + c')
    drop = serializers.FloatField(default=1.0)


class StudySerializer(serializers.Serializer):
    levels = serializers.IntegerField(min_value=2, default=4)


class SolverSerializer(serializers.Serializer):
    """
    Serializer for interface solver settings.
    """
    tol = serializers.FloatField(default=lambda: settings.FLUXMORTAR['CG_TOL'])
    max_it = serializers.IntegerField(min_value=1, default=lambda: settings.FLUXMORTAR['MAX_IT'])
    method = serializers.ChoiceField(choices=['cg', 'gmres'], default='cg')
    workers = serializers.IntegerField(min_value=1, default=lambda: settings.FLUXMORTAR['WORKERS'])

    def validate_tol(self, value):
        if value <= 0.0:
            raise serializers.ValidationError('Tolerance must be positive.')
        return value


class MpfaSerializer(serializers.Serializer):
    eta = serializers.FloatField(min_value=0.0, default=0.0)

    def validate_eta(self, value):
        if value >= 1.0:
            raise serializers.ValidationError('eta must lie in [0, 1).')
        return value


class OutputSerializer(serializers.Serializer):
    dir = serializers.CharField(default=lambda: settings.FLUXMORTAR['OUTPUT_DIR'])


GROUPS = {
    'domain': DomainSerializer,
    'mesh': MeshSerializer,
    'mortar': MortarSerializer,
    'permeability': PermeabilitySerializer,
    'problem': ProblemSerializer,
    'study': StudySerializer,
    'solver': SolverSerializer,
    'mpfa': MpfaSerializer,
    'output': OutputSerializer,
}


class RunConfigSerializer(serializers.Serializer):
    """
    Serializer for a complete run configuration.
    """
    mode = serializers.ChoiceField(choices=MODES, default='solve')
    projection = serializers.ChoiceField(choices=['flat', 'sharp'], default='flat')
    domain = DomainSerializer()
    mesh = MeshSerializer()
    mortar = MortarSerializer()
    permeability = PermeabilitySerializer()
    problem = ProblemSerializer()
    study = StudySerializer()
    solver = SolverSerializer()
    mpfa = MpfaSerializer()
    output = OutputSerializer()

    def validate(self, attrs):
        nx, ny = attrs['domain']['subdomains']
        count = nx * ny
        resolution = attrs['mesh']['resolution']
        if len(resolution) not in (1, 2, count):
            raise serializers.ValidationError({'mesh': {'resolution': [
                f'Expected 1, 2 or {count} resolutions, found {len(resolution)}.'
            ]}})
        local = attrs['mesh']['local_refinements']
        if local and len(local) != count:
            raise serializers.ValidationError({'mesh': {'local_refinements': [
                f'Expected {count} refinement counts, found {len(local)}.'
            ]}})

        mode = attrs['mode']
        if mode == 'demo-raster' and attrs['permeability']['kind'] != 'raster':
            raise serializers.ValidationError({'permeability': {'kind': [
                'demo-raster needs permeability.kind = raster.'
            ]}})
        if mode == 'oracle-compare':
            self._validate_oracle(attrs, resolution, local)
        return attrs

    def _validate_oracle(self, attrs, resolution, local):
        if len(set(resolution)) != 1 or any(local):
            raise serializers.ValidationError({'mesh': {'resolution': [
                'oracle-compare needs matching subdomain grids: use one mesh.resolution '
                'value and no local refinements.'
            ]}})
        if attrs['mesh']['element'] != 'quad':
            raise serializers.ValidationError({'mesh': {'element': [
                'oracle-compare is exact on K-orthogonal grids only; use quad elements.'
            ]}})
        perm = attrs['permeability']
        rotated = perm['angle'] % 90.0 != 0.0 and perm['anisotropy'] != 1.0
        if rotated or (perm['kind'] == 'tensor' and perm['tensor'][1] != 0.0):
            raise serializers.ValidationError({'permeability': {'kind': [
                'oracle-compare is exact for grid-aligned permeability only.'
            ]}})


@dataclass
class RunConfig:
    """Validated configuration plus the source line of every key."""
    data: dict
    path: str = ''
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        node = self.data
        for part in key.split('.'):
            node = node[part]
        return node

    @property
    def mode(self):
        return self.data['mode']

    def as_dict(self):
        return {key: (dict(value) if isinstance(value, dict) else value) for key, value in self.data.items()}


def known_keys():
    keys = {'mode', 'projection'}
    for prefix, serializer in GROUPS.items():
        keys.update(f'{prefix}.{name}' for name in serializer().fields)
    return keys


def read_key_values(text):
    """Parse `key = value` lines; returns ({key: value}, {key: line})."""
    values, lines, errors = {}, {}, []
    allowed = known_keys()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            errors.append({'line': number, 'key': None, 'message': f'Expected "key = value", found {line!r}.'})
            continue
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in allowed:
            errors.append({'line': number, 'key': key, 'message': f'Unknown key {key!r}.'})
        elif key in values:
            errors.append({'line': number, 'key': key, 'message': f'Duplicate key (first set on line {lines[key]}).'})
        else:
            values[key] = value
            lines[key] = number
    return values, lines, errors


def nest(values):
    data = {prefix: {} for prefix in GROUPS}
    for key, value in values.items():
        if '.' in key:
            prefix, name = key.split('.', 1)
            data[prefix][name] = value
        else:
            data[key] = value
    return data


def flatten_errors(errors, prefix=''):
    for key, value in errors.items():
        dotted = f'{prefix}.{key}' if prefix else key
        if isinstance(value, dict):
            yield from flatten_errors(value, '' if key == 'non_field_errors' else dotted)
        else:
            for message in value:
                yield dotted, str(message)


def _config_error(path, items):
    text = '; '.join(
        (f'line {item["line"]}: ' if item['line'] else '') + (f'{item["key"]}: ' if item['key'] else '')
        + item['message'] for item in items
    )
    return ConfigError(f'Invalid configuration {path}: {text}', {'errors': items})


def parse_text(text, path='<string>'):
    values, lines, errors = read_key_values(text)
    if errors:
        raise _config_error(path, errors)
    serializer = RunConfigSerializer(data=nest(values))
    if not serializer.is_valid():
        items = []
        for key, message in flatten_errors(serializer.errors):
            line = lines.get(key)
            if line is None:
                # group-level errors point at the first key set in that group
                group = [n for k, n in lines.items() if k.startswith(key.split('.')[0] + '.')]
                line = min(group) if group else None
            items.append({'line': line, 'key': key, 'message': message})
        raise _config_error(path, items)

    config = RunConfig(serializer.validated_data, str(path), lines)
    perm = config['permeability']
    if perm['kind'] == 'raster':
        raster_path = Path(perm['raster'])
        if not raster_path.is_absolute() and path != '<string>':
            raster_path = Path(path).parent / raster_path
        try:
            perm['values'] = load_raster(raster_path, perm['raster_shape'])
        except ConfigError as exc:
            raise _config_error(path, [{
                'line': lines.get('permeability.raster'), 'key': 'permeability.raster', 'message': exc.message,
            }]) from exc
    logger.debug('Parsed configuration %s (mode %s)', path, config.mode)
    return config


def parse_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f'Cannot read configuration {path}: {exc}', {'path': str(path)}) from exc
    return parse_text(text, path)
