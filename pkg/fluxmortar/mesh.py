"""
Polygonal subdomain meshes, uniform refinement and the box domain decomposition.

Meshes are immutable after construction: geometry arrays are computed once and
flagged read-only so worker threads can share them.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import (
    InvalidDecompositionError,
    InvalidGeometryError,
    UnsupportedMeshError,
)

logger = logging.getLogger(__name__)

ELEMENT_KINDS = ('quad', 'tri')

# 3-point Gauss-Legendre rule on [0, 1]
GAUSS3_POINTS = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def _frozen(array):
    array.flags.writeable = False
    return array


class Mesh2D:
    """
    Conforming polygonal tessellation with facet adjacency.

    Facets are stored once. `facet_cells[f] = (c0, c1)` with c0 < c1 for
    interior facets and c1 = -1 on the boundary; `facet_normals[f]` points
    from c0 towards c1 (outward on the boundary).
    """

    def __init__(self, vertices, cells, parent=None):
        self.vertices = _frozen(np.asarray(vertices, dtype=float).reshape(-1, 2))
        self.cells = tuple(tuple(int(v) for v in cell) for cell in cells)
        self.parent = None if parent is None else _frozen(np.asarray(parent, dtype=int))
        if not self.cells:
            raise InvalidGeometryError('Mesh has no cells.')
        self._validate_vertices()
        self._build_cells()
        self._build_facets()

    def __repr__(self):
        return f'Mesh2D(cells={self.num_cells}, facets={self.num_facets}, vertices={self.num_vertices})'

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_facets(self):
        return len(self.facets)

    @cached_property
    def diameter(self):
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.hypot(*span))

    @cached_property
    def bounding_box(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

    def _validate_vertices(self):
        tol = 1e-12 * max(self.diameter, 1e-300)
        keys = np.round(self.vertices / tol).astype(np.int64)
        _, counts = np.unique(keys, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise InvalidGeometryError('Mesh has duplicate vertices.', {'tolerance': tol})
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise InvalidGeometryError(f'Cell {c} has fewer than three vertices.')
            if len(set(cell)) != len(cell):
                raise UnsupportedMeshError(
                    f'Cell {c} repeats a vertex; every cell-vertex pair needs exactly two facets.',
                    {'cell': c},
                )

    def _build_cells(self):
        nv = np.array([len(c) for c in self.cells])
        width = nv.max()
        padded = -np.ones((self.num_cells, width), dtype=int)
        for c, cell in enumerate(self.cells):
            padded[c, :len(cell)] = cell
        self.cell_sizes = _frozen(nv)
        self.cell_vertices = _frozen(padded)

        areas = np.zeros(self.num_cells)
        moments = np.zeros((self.num_cells, 2))
        for k in range(width):
            active = nv > k
            a = self.vertices[padded[active, k]]
            nxt = padded[active, (k + 1) % width]
            # wrap around for cells with fewer vertices than the padding width
            wrap = (k + 1 >= nv[active])
            nxt = np.where(wrap, padded[active, 0], nxt)
            b = self.vertices[nxt]
            cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
            areas[active] += 0.5 * cross
            moments[active] += cross[:, None] * (a + b) / 6.0
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise InvalidGeometryError(
                f'Cell {int(bad[0])} has non-positive area; cells must be counter-clockwise.',
                {'cells': bad[:10].tolist()},
            )
        self.cell_areas = _frozen(areas)
        self.cell_centers = _frozen(moments / areas[:, None])

    def _build_facets(self):
        index = {}
        facets = []
        owners = []
        cell_facets = []
        for c, cell in enumerate(self.cells):
            local = []
            for k, a in enumerate(cell):
                b = cell[(k + 1) % len(cell)]
                key = (a, b) if a < b else (b, a)
                f = index.get(key)
                if f is None:
                    f = len(facets)
                    index[key] = f
                    facets.append((a, b))
                    owners.append([c, -1])
                elif owners[f][1] == -1 and owners[f][0] != c:
                    owners[f][1] = c
                else:
                    raise UnsupportedMeshError(
                        f'Facet {key} is shared by more than two cells.', {'facet': list(key)}
                    )
                local.append(f)
            cell_facets.append(tuple(local))

        self.facets = _frozen(np.array(facets, dtype=int))
        self.facet_cells = _frozen(np.array(owners, dtype=int))
        self.cell_facets = tuple(cell_facets)

        a = self.vertices[self.facets[:, 0]]
        b = self.vertices[self.facets[:, 1]]
        tangent = b - a
        lengths = np.hypot(tangent[:, 0], tangent[:, 1])
        if np.any(lengths <= 0.0):
            raise InvalidGeometryError('Mesh has zero-length facets.')
        # (a, b) runs counter-clockwise around the first cell, so the right-hand normal is outward.
        self.facet_lengths = _frozen(lengths)
        self.facet_centers = _frozen(0.5 * (a + b))
        self.facet_normals = _frozen(np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None])
        self.boundary_facets = _frozen(np.flatnonzero(self.facet_cells[:, 1] < 0))

    @cached_property
    def cell_diameters(self):
        diam = np.zeros(self.num_cells)
        for c, cell in enumerate(self.cells):
            pts = self.vertices[list(cell)]
            d = pts[:, None, :] - pts[None, :, :]
            diam[c] = np.sqrt((d ** 2).sum(axis=2)).max()
        return _frozen(diam)

    @property
    def h_min(self):
        return float(self.cell_diameters.min())

    @property
    def h_max(self):
        return float(self.cell_diameters.max())

    @cached_property
    def vertex_cells(self):
        """Cells incident to every vertex, as a tuple of index arrays."""
        incidence = [[] for _ in range(self.num_vertices)]
        for c, cell in enumerate(self.cells):
            for v in cell:
                incidence[v].append(c)
        return tuple(np.array(cs, dtype=int) for cs in incidence)

    @cached_property
    def vertex_facets(self):
        incidence = [[] for _ in range(self.num_vertices)]
        for f, (a, b) in enumerate(self.facets):
            incidence[a].append(f)
            incidence[b].append(f)
        return tuple(np.array(fs, dtype=int) for fs in incidence)

    def facets_at_vertex(self, cell, vertex):
        """The two facets of `cell` that meet at `vertex`, in (incoming, outgoing) order."""
        verts = self.cells[cell]
        k = verts.index(vertex)
        local = self.cell_facets[cell]
        return local[k - 1], local[k]

    def cell_integrals(self, func):
        """Integrate func(x, y) over every cell.

        Each cell is fanned into triangles around its barycenter and the
        edge-midpoint rule (exact for quadratics) is applied per triangle.
        """
        total = np.zeros(self.num_cells)
        width = self.cell_vertices.shape[1]
        nv = self.cell_sizes
        for k in range(width):
            active = np.flatnonzero(nv > k)
            nxt = np.where(k + 1 >= nv[active], 0, k + 1)
            a = self.vertices[self.cell_vertices[active, k]]
            b = self.vertices[self.cell_vertices[active, nxt]]
            c = self.cell_centers[active]
            area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                                - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
            mids = (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a))
            values = sum(np.asarray(func(m[:, 0], m[:, 1]), dtype=float) for m in mids)
            total[active] += area * values / 3.0
        return total

    def facet_gauss_points(self, facets=None):
        """3-point Gauss points (n_facets, 3, 2) and weights (n_facets, 3) scaled by facet length."""
        facets = np.arange(self.num_facets) if facets is None else np.asarray(facets, dtype=int)
        a = self.vertices[self.facets[facets, 0]]
        b = self.vertices[self.facets[facets, 1]]
        points = a[:, None, :] + GAUSS3_POINTS[None, :, None] * (b - a)[:, None, :]
        weights = self.facet_lengths[facets][:, None] * GAUSS3_WEIGHTS[None, :]
        return points, weights

    def boundary_side(self, box, tol=None):
        """Label every boundary facet with the box side it lies on (left/right/bottom/top)."""
        x0, x1, y0, y1 = box
        tol = 1e-9 * self.diameter if tol is None else tol
        sides = {}
        for f in self.boundary_facets:
            cx, cy = self.facet_centers[f]
            nx, ny = self.facet_normals[f]
            if abs(cx - x0) < tol and nx < 0:
                sides[int(f)] = 'left'
            elif abs(cx - x1) < tol and nx > 0:
                sides[int(f)] = 'right'
            elif abs(cy - y0) < tol and ny < 0:
                sides[int(f)] = 'bottom'
            elif abs(cy - y1) < tol and ny > 0:
                sides[int(f)] = 'top'
            else:
                raise InvalidGeometryError(
                    f'Boundary facet {int(f)} does not lie on the subdomain box.', {'box': list(box)}
                )
        return sides


def generate_structured(extent, nx, ny, element_kind='quad'):
    """
    Conforming structured mesh of the box (x0, x1, y0, y1).

    Triangles split each box cell along alternating diagonals, so every other
    vertex is shared by eight triangles and the rest by four.
    """
    x0, x1, y0, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise InvalidGeometryError('Box extent must be positive.', {'extent': [x0, x1, y0, y1]})
    if nx < 1 or ny < 1:
        raise InvalidGeometryError('Cell counts must be at least 1.', {'nx': nx, 'ny': ny})
    if element_kind == 'tri-crisscross':
        element_kind = 'tri'
    if element_kind not in ELEMENT_KINDS:
        raise UnsupportedMeshError(f'Unknown element kind {element_kind!r}.')

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if element_kind == 'quad':
                cells.append((v00, v10, v11, v01))
            elif (i + j) % 2 == 0:
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
            else:
                cells.append((v00, v10, v01))
                cells.append((v10, v11, v01))
    return Mesh2D(vertices, cells)


def refine_uniform(mesh):
    """
    Split every triangle into four similar triangles and every quadrilateral
    into four through its edge midpoints and vertex mean.

    The child mesh keeps `parent[child] = parent cell`.
    """
    if np.any((mesh.cell_sizes != 3) & (mesh.cell_sizes != 4)):
        raise UnsupportedMeshError('Uniform refinement supports triangles and quadrilaterals only.')
    n = mesh.num_vertices
    quads = np.flatnonzero(mesh.cell_sizes == 4)
    center_id = {int(c): n + mesh.num_facets + k for k, c in enumerate(quads)}
    centers = np.array([mesh.vertices[list(mesh.cells[c])].mean(axis=0) for c in quads]).reshape(-1, 2)
    vertices = np.vstack([mesh.vertices, mesh.facet_centers, centers])

    cells = []
    parent = []
    for c, cell in enumerate(mesh.cells):
        mid = [n + f for f in mesh.cell_facets[c]]
        if len(cell) == 3:
            v0, v1, v2 = cell
            m0, m1, m2 = mid
            children = [(v0, m0, m2), (m0, v1, m1), (m2, m1, v2), (m0, m1, m2)]
        else:
            v0, v1, v2, v3 = cell
            m0, m1, m2, m3 = mid
            ctr = center_id[c]
            children = [(v0, m0, ctr, m3), (m0, v1, m1, ctr), (ctr, m1, v2, m2), (m3, ctr, m2, v3)]
        cells.extend(children)
        parent.extend([c] * 4)
    return Mesh2D(vertices, cells, parent=parent)


def refine_times(mesh, times):
    for _ in range(int(times)):
        mesh = refine_uniform(mesh)
    return mesh


def write_ascii(mesh, path):
    """Write the minimal ASCII mesh format ("vertices N" / "cells M" blocks)."""
    with open(path, 'w') as handle:
        handle.write(f'vertices {mesh.num_vertices}\n')
        for x, y in mesh.vertices:
            handle.write(f'{x:.17g} {y:.17g}\n')
        handle.write(f'cells {mesh.num_cells}\n')
        for cell in mesh.cells:
            handle.write(' '.join(str(v) for v in (len(cell),) + cell) + '\n')


def read_ascii(path):
    with open(path) as handle:
        lines = [line.split() for line in handle if line.strip()]
    try:
        if lines[0][0] != 'vertices':
            raise ValueError('missing "vertices" header')
        nv = int(lines[0][1])
        vertices = [(float(x), float(y)) for x, y in lines[1:1 + nv]]
        header = lines[1 + nv]
        if header[0] != 'cells':
            raise ValueError('missing "cells" header')
        nc = int(header[1])
        cells = []
        for row in lines[2 + nv:2 + nv + nc]:
            k = int(row[0])
            if len(row) != k + 1:
                raise ValueError(f'cell row declares {k} vertices but lists {len(row) - 1}')
            cells.append(tuple(int(v) for v in row[1:]))
        if len(cells) != nc:
            raise ValueError(f'expected {nc} cells, found {len(cells)}')
    except (IndexError, ValueError) as exc:
        raise InvalidGeometryError(f'Malformed mesh file {path}: {exc}') from exc
    return Mesh2D(vertices, cells)


# ---------------------------------------------------------------------------
# Domain decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interface:
    """
    Straight axis-aligned segment Γ_ij shared by subdomains lower < upper.

    `normal` is the outward unit normal of the lower subdomain. The interface
    parameter s runs from `start` (s = 0) to `end` (s = length).
    """
    index: int
    lower: int
    upper: int
    start: tuple
    end: tuple
    normal: tuple

    @property
    def length(self):
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def axis(self):
        """Coordinate that varies along the interface (0 for horizontal, 1 for vertical)."""
        return 0 if abs(self.end[0] - self.start[0]) > 0 else 1

    def parameter(self, points):
        points = np.asarray(points, dtype=float)
        return points[..., self.axis] - self.start[self.axis]

    def point(self, s):
        s = np.asarray(s, dtype=float)
        direction = (np.asarray(self.end) - np.asarray(self.start)) / self.length
        return np.asarray(self.start) + s[..., None] * direction

    def contains(self, points, tol):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        across = 1 - self.axis
        s = self.parameter(points)
        on_line = np.abs(points[:, across] - self.start[across]) < tol
        return on_line & (s > -tol) & (s < self.length + tol)

    def side_sign(self, subdomain):
        """+1 for the lower subdomain, -1 for the upper one (λ_i = λ, λ_j = -λ)."""
        if subdomain == self.lower:
            return 1.0
        if subdomain == self.upper:
            return -1.0
        raise InvalidDecompositionError(f'Subdomain {subdomain} is not adjacent to interface {self.index}.')


@dataclass(frozen=True)
class InterfaceGrid:
    """1D partition of an interface by breakpoints 0 = s_0 < ... < s_n = length."""
    interface: Interface
    breakpoints: np.ndarray

    @property
    def num_cells(self):
        return len(self.breakpoints) - 1

    @property
    def cell_lengths(self):
        return np.diff(self.breakpoints)

    @property
    def h(self):
        return float(self.cell_lengths.max())

    @property
    def coordinates(self):
        return self.interface.point(self.breakpoints)


def build_interface_grid(interface, n_cells):
    if n_cells < 1:
        raise InvalidDecompositionError('An interface grid needs at least one cell.', {'n_cells': n_cells})
    breakpoints = np.linspace(0.0, interface.length, int(n_cells) + 1)
    breakpoints.flags.writeable = False
    return InterfaceGrid(interface, breakpoints)


@dataclass
class Subdomain:
    index: int
    box: tuple
    mesh: Mesh2D
    # boundary facet -> ('interface', interface index) or ('outer', side)
    facet_owner: dict = field(default_factory=dict)

    @property
    def area(self):
        x0, x1, y0, y1 = self.box
        return (x1 - x0) * (y1 - y0)

    def interface_facets(self, interface_index=None):
        return np.array(sorted(
            f for f, (kind, key) in self.facet_owner.items()
            if kind == 'interface' and (interface_index is None or key == interface_index)
        ), dtype=int)

    def outer_facets(self):
        return np.array(sorted(f for f, (kind, _) in self.facet_owner.items() if kind == 'outer'), dtype=int)

    @property
    def touches_outer_boundary(self):
        return any(kind == 'outer' for kind, _ in self.facet_owner.values())


class Decomposition:
    """
    Disjoint box subdomains covering the domain, with oriented interfaces.

    `interior` is I_int: the subdomains whose whole boundary lies on interfaces.
    """

    def __init__(self, extent, boxes, meshes):
        self.extent = tuple(float(v) for v in extent)
        boxes = [tuple(float(v) for v in box) for box in boxes]
        if len(boxes) != len(meshes):
            raise InvalidDecompositionError('Every subdomain box needs a mesh.')
        self._validate_cover(boxes)
        self.interfaces = self._find_interfaces(boxes)
        self.subdomains = []
        for i, (box, mesh) in enumerate(zip(boxes, meshes)):
            sub = Subdomain(i, box, mesh)
            self._classify_facets(sub)
            self.subdomains.append(sub)
        self.interior = tuple(s.index for s in self.subdomains if not s.touches_outer_boundary)
        logger.debug('Decomposition with %d subdomains, %d interfaces, interior %s',
                     len(self.subdomains), len(self.interfaces), self.interior)

    def __len__(self):
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    @property
    def area(self):
        x0, x1, y0, y1 = self.extent
        return (x1 - x0) * (y1 - y0)

    @property
    def tolerance(self):
        x0, x1, y0, y1 = self.extent
        return 1e-9 * max(x1 - x0, y1 - y0)

    def _validate_cover(self, boxes):
        x0, x1, y0, y1 = self.extent
        tol = self.tolerance
        for k, (a0, a1, b0, b1) in enumerate(boxes):
            if not (a1 > a0 and b1 > b0):
                raise InvalidDecompositionError(f'Subdomain box {k} has non-positive extent.')
            if a0 < x0 - tol or a1 > x1 + tol or b0 < y0 - tol or b1 > y1 + tol:
                raise InvalidDecompositionError(f'Subdomain box {k} leaves the domain.')
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                ox = min(boxes[i][1], boxes[j][1]) - max(boxes[i][0], boxes[j][0])
                oy = min(boxes[i][3], boxes[j][3]) - max(boxes[i][2], boxes[j][2])
                if ox > tol and oy > tol:
                    raise InvalidDecompositionError(
                        f'Subdomain boxes {i} and {j} overlap.', {'boxes': [i, j]}
                    )
        covered = sum((b[1] - b[0]) * (b[3] - b[2]) for b in boxes)
        if abs(covered - self.area) > 1e-12 * self.area + tol:
            raise InvalidDecompositionError(
                'Subdomain boxes leave gaps in the domain.', {'covered': covered, 'area': self.area}
            )

    def _find_interfaces(self, boxes):
        tol = self.tolerance
        interfaces = []
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                segment = None
                # vertical shared side
                for xa, xb, normal in ((a[1], b[0], (1.0, 0.0)), (a[0], b[1], (-1.0, 0.0))):
                    if abs(xa - xb) < tol:
                        lo, hi = max(a[2], b[2]), min(a[3], b[3])
                        if hi - lo > tol:
                            segment = ((xa, lo), (xa, hi), normal)
                for ya, yb, normal in ((a[3], b[2], (0.0, 1.0)), (a[2], b[3], (0.0, -1.0))):
                    if abs(ya - yb) < tol:
                        lo, hi = max(a[0], b[0]), min(a[1], b[1])
                        if hi - lo > tol:
                            segment = ((lo, ya), (hi, ya), normal)
                if segment is not None:
                    start, end, normal = segment
                    interfaces.append(Interface(len(interfaces), i, j, start, end, normal))
        return tuple(interfaces)

    def _classify_facets(self, sub):
        mesh = sub.mesh
        tol = 1e-9 * mesh.diameter
        sides = mesh.boundary_side(sub.box)
        adjacent = [e for e in self.interfaces if sub.index in (e.lower, e.upper)]
        for f in mesh.boundary_facets:
            f = int(f)
            a, b = mesh.vertices[mesh.facets[f]]
            owner = None
            for e in adjacent:
                if e.contains(np.array([a, b]), tol).all():
                    owner = ('interface', e.index)
                    break
            if owner is None:
                x0, x1, y0, y1 = self.extent
                c = mesh.facet_centers[f]
                on_outer = (abs(c[0] - x0) < tol or abs(c[0] - x1) < tol
                            or abs(c[1] - y0) < tol or abs(c[1] - y1) < tol)
                if not on_outer:
                    raise InvalidDecompositionError(
                        f'Facet {f} of subdomain {sub.index} straddles an interface end point.',
                        {'subdomain': sub.index, 'facet': f},
                    )
                owner = ('outer', sides[f])
            sub.facet_owner[f] = owner

    def refined(self, times=1):
        """A copy with every subdomain mesh uniformly refined `times` times."""
        times = [times] * len(self) if np.isscalar(times) else list(times)
        meshes = [refine_times(s.mesh, t) for s, t in zip(self.subdomains, times)]
        return Decomposition(self.extent, [s.box for s in self.subdomains], meshes)

    @property
    def h_min(self):
        return min(s.mesh.h_min for s in self.subdomains)

    @property
    def num_cells(self):
        return sum(s.mesh.num_cells for s in self.subdomains)


def subdomain_boxes(domain_extent, subdomain_counts):
    x0, x1, y0, y1 = (float(v) for v in domain_extent)
    nx, ny = (int(v) for v in subdomain_counts)
    if nx < 1 or ny < 1:
        raise InvalidDecompositionError('Subdomain counts must be at least 1.')
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    return [(xs[a], xs[a + 1], ys[b], ys[b + 1]) for b in range(ny) for a in range(nx)]


def resolution_for(per_subdomain_resolution, index, position):
    """
    Cells per subdomain side. A scalar applies everywhere; two values alternate
    in a checkerboard; otherwise one entry per subdomain. Entries may be (nx, ny).
    """
    res = per_subdomain_resolution
    if np.isscalar(res):
        value = res
    elif _is_checkerboard(res):
        value = res[sum(position) % 2]
    else:
        value = res[index]
    if np.isscalar(value):
        return int(value), int(value)
    return int(value[0]), int(value[1])


def _is_checkerboard(res):
    return len(res) == 2 and all(np.isscalar(v) for v in res)


def decompose(domain_extent, subdomain_counts, per_subdomain_resolution, element_kind='quad',
              refinements=0):
    """
    Box decomposition of the domain into nx x ny subdomains with independent
    (possibly non-matching) structured meshes.

    `refinements` is a global count or one count per subdomain.
    """
    boxes = subdomain_boxes(domain_extent, subdomain_counts)
    nx = int(subdomain_counts[0])
    res = per_subdomain_resolution
    if not np.isscalar(res) and not _is_checkerboard(res) and len(res) != len(boxes):
        raise InvalidDecompositionError(
            f'Expected {len(boxes)} subdomain resolutions, found {len(res)}.'
        )
    if np.isscalar(refinements):
        refinements = [int(refinements)] * len(boxes)
    elif len(refinements) != len(boxes):
        raise InvalidDecompositionError(
            f'Expected {len(boxes)} refinement counts, found {len(refinements)}.'
        )
    meshes = []
    for k, box in enumerate(boxes):
        position = (k % nx, k // nx)
        cx, cy = resolution_for(res, k, position)
        mesh = generate_structured(box, cx, cy, element_kind)
        meshes.append(refine_times(mesh, refinements[k]))
    return Decomposition(domain_extent, boxes, meshes)
