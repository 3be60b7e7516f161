"""
Cellwise permeability tensors and the scalar raster loader.
"""
import logging

import numpy as np

from .exceptions import AssemblyError, ConfigError

logger = logging.getLogger(__name__)


def rotation_clockwise(angle_degrees):
    theta = np.deg2rad(angle_degrees)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def anisotropic_tensor(k, anisotropy=1.0, angle=0.0):
    """K = R^T diag(k, anisotropy * k) R for scalar or array-valued k."""
    k = np.asarray(k, dtype=float)
    R = rotation_clockwise(angle)
    D = np.zeros(k.shape + (2, 2))
    D[..., 0, 0] = k
    D[..., 1, 1] = anisotropy * k
    return R.T @ D @ R


class PermField:
    """Per-cell symmetric positive-definite 2x2 tensors."""

    def __init__(self, tensors):
        tensors = np.array(tensors, dtype=float).reshape(-1, 2, 2)
        scale = np.abs(tensors).max(axis=(1, 2))
        asym = np.abs(tensors[:, 0, 1] - tensors[:, 1, 0])
        bad = np.flatnonzero(asym > 1e-14 * np.maximum(scale, 1.0))
        if bad.size:
            raise AssemblyError('Permeability tensor is not symmetric.', {'cells': bad[:10].tolist()})
        tensors = 0.5 * (tensors + tensors.transpose(0, 2, 1))
        eigenvalues = np.linalg.eigvalsh(tensors)
        bad = np.flatnonzero(eigenvalues[:, 0] <= 0.0)
        if bad.size:
            raise AssemblyError('Permeability tensor is not positive definite.', {'cells': bad[:10].tolist()})
        tensors.flags.writeable = False
        self.tensors = tensors
        self.k_min = float(eigenvalues[:, 0].min())
        self.k_max = float(eigenvalues[:, 1].max())

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, cell):
        return self.tensors[cell]

    @classmethod
    def constant(cls, num_cells, tensor):
        tensor = np.asarray(tensor, dtype=float)
        if tensor.ndim == 0:
            tensor = tensor * np.eye(2)
        return cls(np.broadcast_to(tensor, (num_cells, 2, 2)))


class Permeability:
    """
    Permeability description that can be sampled on any mesh of the domain.

    `kind` is 'scalar', 'tensor', 'raster' or 'function'. Rasters cover the
    domain extent with `shape = (nx, ny)` cells; each mesh cell takes the
    raster value at its barycenter.
    """

    def __init__(self, kind='scalar', value=1.0, tensor=None, raster=None, shape=None,
                 extent=None, anisotropy=1.0, angle=0.0, function=None):
        self.kind = kind
        self.value = float(value)
        self.tensor = None if tensor is None else np.asarray(tensor, dtype=float)
        self.raster = None if raster is None else np.asarray(raster, dtype=float).ravel()
        self.shape = None if shape is None else (int(shape[0]), int(shape[1]))
        self.extent = extent
        self.anisotropy = float(anisotropy)
        self.angle = float(angle)
        self.function = function
        if kind == 'raster':
            if self.raster is None or self.shape is None or self.extent is None:
                raise ConfigError('A raster permeability needs values, a shape and the domain extent.')
            expected = self.shape[0] * self.shape[1]
            if self.raster.size != expected:
                raise ConfigError(
                    f'Raster has {self.raster.size} values, expected {expected} '
                    f'for a {self.shape[0]}x{self.shape[1]} grid.',
                    {'expected': expected, 'found': int(self.raster.size)},
                )
        elif kind not in ('scalar', 'tensor', 'function'):
            raise ConfigError(f'Unknown permeability kind {kind!r}.')

    @property
    def is_diagonal(self):
        """True when every sampled tensor is diagonal in the grid axes."""
        if self.kind == 'function':
            return False
        if self.kind == 'tensor':
            return self.tensor is not None and self.tensor[0, 1] == 0.0
        return self.anisotropy == 1.0 or self.angle % 90.0 == 0.0

    def field(self, mesh):
        if self.kind == 'scalar':
            return PermField.constant(mesh.num_cells, anisotropic_tensor(self.value, self.anisotropy, self.angle))
        if self.kind == 'tensor':
            return PermField.constant(mesh.num_cells, self.tensor)
        if self.kind == 'function':
            centers = mesh.cell_centers
            return PermField(self.function(centers[:, 0], centers[:, 1]))
        return PermField(anisotropic_tensor(self.sample_raster(mesh.cell_centers), self.anisotropy, self.angle))

    def sample_raster(self, points):
        x0, x1, y0, y1 = self.extent
        nx, ny = self.shape
        i = np.clip(((points[:, 0] - x0) / (x1 - x0) * nx).astype(int), 0, nx - 1)
        j = np.clip(((points[:, 1] - y0) / (y1 - y0) * ny).astype(int), 0, ny - 1)
        return self.raster[j * nx + i]


def load_raster(path, shape):
    """
    Whitespace-separated scalar values, row-major over an nx x ny grid
    (x varies fastest).
    """
    try:
        values = np.loadtxt(path, dtype=float).ravel()
    except (OSError, ValueError) as exc:
        raise ConfigError(f'Cannot read permeability raster {path}: {exc}', {'path': str(path)}) from exc
    nx, ny = shape
    if values.size != nx * ny:
        raise ConfigError(
            f'Raster {path} has {values.size} values, expected {nx * ny} for a {nx}x{ny} grid.',
            {'expected': nx * ny, 'found': int(values.size)},
        )
    if np.any(values <= 0.0):
        raise ConfigError(f'Raster {path} has non-positive permeability values.')
    logger.info('Loaded %dx%d permeability raster from %s (range %.3e to %.3e)',
                nx, ny, path, values.min(), values.max())
    return values
