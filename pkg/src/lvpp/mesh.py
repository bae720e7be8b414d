# -*- coding: utf-8 -*-
"""
Conforming triangular meshes with boundary tags and uniform refinement.

Provides the structured rectangle meshes used by the experiments (the
square (-1,1)^2, the unit square, a 3x1 cantilever strip), a polygonal
approximation of the unit disk whose boundary vertices are snapped to the
circle on refinement, and a legacy-ASCII VTK writer.
"""
import numpy as np


class MeshError(ValueError):
    pass


class Mesh:
    """Triangulation with CCW cells and tagged boundary edges.

    Attributes
    ----------
    vertices : (n, 2) float array
    cells : (m, 3) int array, positively oriented
    boundary_edges : (b, 2) int array of vertex pairs
    boundary_tags : list of b strings
    """

    def __init__(self, vertices, cells, boundary_edges=None, boundary_tags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshError("cells must be an (m, 3) array")
        self._orient()
        if boundary_edges is None:
            boundary_edges, boundary_tags = self._find_boundary()
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = list(
            boundary_tags if boundary_tags is not None else ["boundary"] * len(self.boundary_edges)
        )
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")

    def _orient(self):
        a = self.signed_areas()
        flip = a < 0
        if np.any(flip):
            self.cells[flip] = self.cells[flip][:, [0, 2, 1]]
        if np.any(self.signed_areas() <= 0):
            raise MeshError("mesh contains degenerate cells")

    def _find_boundary(self):
        edges = np.vstack(
            [self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]]
        )
        key = np.sort(edges, axis=1)
        _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        bnd = edges[idx[counts == 1]]
        return bnd, ["boundary"] * len(bnd)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    def signed_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def cell_areas(self):
        return self.signed_areas()

    @property
    def h(self):
        p = self.vertices[self.cells]
        lengths = [
            np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))
        ]
        return float(np.max(lengths))

    def diameter(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def boundary_vertices(self, tags=None):
        """Vertex indices on boundary edges, optionally restricted to tags."""
        if tags is None:
            sel = np.ones(len(self.boundary_edges), dtype=bool)
        else:
            wanted = {tags} if isinstance(tags, str) else set(tags)
            sel = np.array([t in wanted for t in self.boundary_tags], dtype=bool)
        return np.unique(self.boundary_edges[sel])

    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)


def rect_mesh(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    """Structured triangulation of a rectangle, one diagonal per quad.

    Boundary edges carry the tags "left", "right", "bottom", "top".
    """
    if nx < 1 or ny < 1:
        raise MeshError("rect_mesh needs nx, ny >= 1")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    edges, tags = [], []
    for j in range(ny):
        edges.append([vid(0, j), vid(0, j + 1)])
        tags.append("left")
        edges.append([vid(nx, j), vid(nx, j + 1)])
        tags.append("right")
    for i in range(nx):
        edges.append([vid(i, 0), vid(i + 1, 0)])
        tags.append("bottom")
        edges.append([vid(i, ny), vid(i + 1, ny)])
        tags.append("top")
    return Mesh(vertices, np.array(cells), np.array(edges), tags)


def unit_square_mesh(n):
    """The square (-1, 1)^2 with n cells per side (2 n^2 triangles)."""
    if n < 1:
        raise MeshError("unit_square_mesh needs n >= 1")
    return rect_mesh(n, n, -1.0, 1.0, -1.0, 1.0)


def cantilever_mesh(nx, ny, load_span=(0.45, 0.55)):
    """Rectangle (0,3)x(0,1); left edge tagged "fixed", load edges "load".

    Edges on the right side overlapping the load span keep the tag "load";
    the remaining right-side edges become "free".
    """
    m = rect_mesh(nx, ny, 0.0, 3.0, 0.0, 1.0)
    lo, hi = load_span
    tags = []
    for (a, b), t in zip(m.boundary_edges, m.boundary_tags):
        if t == "left":
            tags.append("fixed")
        elif t == "right":
            ya, yb = sorted((m.vertices[a, 1], m.vertices[b, 1]))
            tags.append("load" if (min(yb, hi) - max(ya, lo)) > 1e-12 else "free")
        else:
            tags.append(t)
    m.boundary_tags = tags
    return m


def _snap_unit_circle(points):
    r = np.linalg.norm(points, axis=1, keepdims=True)
    return points / r


def disk_mesh(level):
    """Polygonal unit disk: an 8-triangle fan refined ``level`` times.

    New boundary vertices created by refinement are projected radially onto
    the unit circle, so the boundary polygon has 8 * 2^level vertices.
    """
    if level < 0:
        raise MeshError("disk_mesh needs level >= 0")
    angles = np.arange(8) * (np.pi / 4.0)
    ring = np.column_stack([np.cos(angles), np.sin(angles)])
    vertices = np.vstack([[0.0, 0.0], ring])
    cells = np.array([[0, 1 + i, 1 + (i + 1) % 8] for i in range(8)])
    edges = np.array([[1 + i, 1 + (i + 1) % 8] for i in range(8)])
    m = Mesh(vertices, cells, edges, ["boundary"] * 8)
    for _ in range(level):
        m = refine_uniform(m, snap_boundary=_snap_unit_circle)
    return m


def refine_uniform(mesh, snap_boundary=None):
    """Split every triangle into four congruent children (red refinement).

    Parent vertices keep their indices and coordinates.  ``snap_boundary``
    optionally remaps the newly created boundary-edge midpoints (used for
    the disk's circle projection).
    """
    nv = mesh.num_vertices
    edges = np.vstack(
        [mesh.cells[:, [0, 1]], mesh.cells[:, [1, 2]], mesh.cells[:, [2, 0]]]
    )
    key = np.sort(edges, axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    midpoints = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    stride = nv + 1
    view = uniq[:, 0] * stride + uniq[:, 1]  # sorted because uniq rows are

    def edge_id(a, b):
        lo, hi = (a, b) if a < b else (b, a)
        return int(np.searchsorted(view, lo * stride + hi))

    if snap_boundary is not None:
        bnd_ids = sorted({edge_id(a, b) for a, b in mesh.boundary_edges})
        midpoints[bnd_ids] = snap_boundary(midpoints[bnd_ids])

    vertices = np.vstack([mesh.vertices, midpoints])
    m01 = nv + inverse[: mesh.num_cells]
    m12 = nv + inverse[mesh.num_cells: 2 * mesh.num_cells]
    m20 = nv + inverse[2 * mesh.num_cells:]
    c = mesh.cells
    cells = np.vstack(
        [
            np.column_stack([c[:, 0], m01, m20]),
            np.column_stack([c[:, 1], m12, m01]),
            np.column_stack([c[:, 2], m20, m12]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    b_edges, b_tags = [], []
    for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        mid = nv + edge_id(a, b)
        b_edges.extend([[a, mid], [mid, b]])
        b_tags.extend([t, t])
    return Mesh(vertices, cells, np.array(b_edges), b_tags)


def write_vtk(path, mesh, point_data=None, cell_data=None):
    """Write the mesh and fields as a legacy-ASCII VTK unstructured grid."""
    lines = [
        "# vtk DataFile Version 3.0",
        "lvpp export",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.16g} {y:.16g} 0")
    lines.append(f"CELLS {mesh.num_cells} {4 * mesh.num_cells}")
    for c in mesh.cells:
        lines.append(f"3 {c[0]} {c[1]} {c[2]}")
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    lines.extend(["5"] * mesh.num_cells)

    def emit(block, n, data):
        lines.append(f"{block} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 2 and arr.shape[1] == 2:
                lines.append(f"VECTORS {name} double")
                for vx, vy in arr:
                    lines.append(f"{vx:.16g} {vy:.16g} 0")
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.16g}" for v in arr)

    if point_data:
        emit("POINT_DATA", mesh.num_vertices, point_data)
    if cell_data:
        emit("CELL_DATA", mesh.num_cells, cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
