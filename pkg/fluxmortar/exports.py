"""
Field exports (VTK legacy ASCII through meshio) and the run manifest.
"""
import logging
from pathlib import Path

import meshio
import numpy as np
from rest_framework.renderers import JSONRenderer

logger = logging.getLogger(__name__)

CELL_TYPES = {3: 'triangle', 4: 'quad'}


def cell_velocities(mesh, fluxes):
    """
    Cell-averaged velocity from facet fluxes: |w|^-1 sum_F outward flux_F (x_F - x_c),
    exact for constant velocity fields.
    """
    owners = mesh.facet_cells
    moments = np.zeros((mesh.num_cells, 2))
    for side, sign in ((0, 1.0), (1, -1.0)):
        mask = owners[:, side] >= 0
        cells = owners[mask, side]
        arm = mesh.facet_centers[mask] - mesh.cell_centers[cells]
        np.add.at(moments, cells, sign * fluxes[mask, None] * arm)
    return moments / mesh.cell_areas[:, None]


def to_meshio(meshes, pressures, fluxes=None):
    """Stack subdomain meshes (vertices not merged) into one meshio mesh with cell data."""
    points, blocks, data = [], {}, {'pressure': {}, 'subdomain': {}, 'velocity': {}}
    offset = 0
    for index, mesh in enumerate(meshes):
        velocity = (np.zeros((mesh.num_cells, 2)) if fluxes is None
                    else cell_velocities(mesh, np.asarray(fluxes[index], dtype=float)))
        for c, cell in enumerate(mesh.cells):
            kind = CELL_TYPES.get(len(cell), 'polygon')
            key = (kind, len(cell)) if kind == 'polygon' else (kind, 0)
            blocks.setdefault(key, []).append([v + offset for v in cell])
            data['pressure'].setdefault(key, []).append(pressures[index][c])
            data['subdomain'].setdefault(key, []).append(index)
            data['velocity'].setdefault(key, []).append([velocity[c, 0], velocity[c, 1], 0.0])
        points.append(np.column_stack([mesh.vertices, np.zeros(mesh.num_vertices)]))
        offset += mesh.num_vertices
    keys = list(blocks)
    cells = [(key[0], np.array(blocks[key], dtype=int)) for key in keys]
    cell_data = {
        'pressure': [np.array(data['pressure'][key], dtype=float) for key in keys],
        'subdomain': [np.array(data['subdomain'][key], dtype=int) for key in keys],
        'velocity': [np.array(data['velocity'][key], dtype=float) for key in keys],
    }
    return meshio.Mesh(np.vstack(points), cells, cell_data=cell_data)


def export_fields(meshes, pressures, fluxes, path):
    """Write pressures and cell-averaged velocities as an ASCII legacy VTK unstructured grid."""
    if not isinstance(meshes, (list, tuple)):
        meshes, pressures = [meshes], [pressures]
        fluxes = None if fluxes is None else [fluxes]
    mesh = to_meshio(meshes, pressures, fluxes)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(str(path), mesh, file_format='vtk', binary=False)
    logger.info('Wrote %s (%d cells)', path, sum(len(block.data) for block in mesh.cells))
    return path


def render_manifest(payload, success=True):
    """Render the run manifest in the {'success', 'data'} envelope."""
    envelope = {'success': success, 'data': payload} if success else payload
    return JSONRenderer().render(envelope, renderer_context={'indent': 2})


def write_manifest(path, payload, success=True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_manifest(payload, success))
    logger.info('Wrote manifest %s', path)
    return path
