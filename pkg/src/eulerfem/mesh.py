"""P1 simplex meshes in 1D/2D: builders, ASCII file I/O, validation, refinement.

Boundary markers are per-vertex integer tags:

    0         interior
    1         dirichlet inflow
    2         outflow (do nothing)
    3         slip wall
    100 + k   periodic identification group k (all vertices sharing the id
              collapse to one logical node at graph assembly)

The ASCII file format is: a header line ``dim n_vertices n_cells``, then
``n_vertices`` coordinate lines, then ``n_cells`` lines of vertex indices,
then an optional ``markers`` block of ``vertex_index tag`` lines.  ``#``
starts a comment; blank lines are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshFormatError

MARKER_INTERIOR = 0
MARKER_INFLOW = 1
MARKER_OUTFLOW = 2
MARKER_SLIP_WALL = 3
PERIODIC_BASE = 100


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray  # (nv, dim)
    cells: np.ndarray  # (nc, dim+1) vertex indices
    markers: np.ndarray  # (nv,) int
    # optional explicit outward normal for tricky slip-wall corners
    slip_normal_override: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def cell_measures(self) -> np.ndarray:
        """Signed length (1D) or signed area (2D) per cell."""
        v = self.vertices
        c = self.cells
        if self.dim == 1:
            return v[c[:, 1], 0] - v[c[:, 0], 0]
        e1 = v[c[:, 1]] - v[c[:, 0]]
        e2 = v[c[:, 2]] - v[c[:, 0]]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def validate(self) -> None:
        nv = self.n_vertices
        if self.cells.min(initial=0) < 0 or self.cells.max(initial=-1) >= nv:
            raise MeshFormatError("cell vertex index out of range")
        for ic, cell in enumerate(self.cells):
            if len(set(int(x) for x in cell)) != self.dim + 1:
                raise MeshFormatError(f"cell {ic} has repeated vertices")
        meas = self.cell_measures()
        if np.any(meas <= 0.0):
            ic = int(np.argmax(meas <= 0.0))
            raise MeshFormatError(f"negative cell measure in cell {ic}")
        if self.markers.shape != (nv,):
            raise MeshFormatError("markers must be one tag per vertex")
        self._validate_periodic()

    def _validate_periodic(self) -> None:
        tags = self.markers
        for gid in np.unique(tags[tags >= PERIODIC_BASE]):
            members = np.nonzero(tags == gid)[0]
            if len(members) < 2:
                raise MeshFormatError(f"periodic group {gid} has a single vertex")
            coords = self.vertices[members]
            for ax in range(self.dim):
                if len(np.unique(np.round(coords[:, ax], 12))) > 2:
                    raise MeshFormatError(
                        f"periodic group {gid} not coordinate-consistent on axis {ax}"
                    )

    def periodic_groups(self) -> dict:
        """Map group id -> sorted vertex indices."""
        tags = self.markers
        return {
            int(gid): np.nonzero(tags == gid)[0]
            for gid in np.unique(tags[tags >= PERIODIC_BASE])
        }


def build_interval_mesh(n_cells: int, x0: float, x1: float, bc: str = "dirichlet") -> Mesh:
    """Uniform 1D mesh; bc is 'dirichlet', 'periodic', 'wall', or 'outflow'."""
    if n_cells < 2:
        raise ValueError(f"n_cells must be >= 2, got {n_cells}")
    if not x1 > x0:
        raise ValueError(f"need x0 < x1, got [{x0}, {x1}]")
    x = np.linspace(x0, x1, n_cells + 1)
    cells = np.stack([np.arange(n_cells), np.arange(1, n_cells + 1)], axis=1)
    markers = np.zeros(n_cells + 1, dtype=np.int64)
    if bc == "periodic":
        markers[0] = markers[-1] = PERIODIC_BASE
    elif bc == "dirichlet":
        markers[0] = markers[-1] = MARKER_INFLOW
    elif bc == "wall":
        markers[0] = markers[-1] = MARKER_SLIP_WALL
    elif bc == "outflow":
        markers[0] = markers[-1] = MARKER_OUTFLOW
    else:
        raise ValueError(f"unknown bc {bc!r}")
    mesh = Mesh(dim=1, vertices=x[:, None].copy(), cells=cells.astype(np.int64), markers=markers)
    mesh.validate()
    return mesh


def build_crisscross_mesh(nx: int, ny: int, bbox, bc: str = "dirichlet") -> Mesh:
    """nx-by-ny squares, each split into four triangles by its centroid.

    bbox = (x0, x1, y0, y1).  bc: 'dirichlet' marks the whole boundary 1,
    'periodic' builds the doubly periodic torus, 'none' leaves everything
    interior (markers 0).
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx, ny must be >= 1")
    x0, x1, y0, y1 = bbox
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bbox {bbox}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    # grid vertices first, then one centroid per square
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    ccx, ccy = np.meshgrid(cx, cy, indexing="ij")
    centers = np.stack([ccx.ravel(), ccy.ravel()], axis=1)
    vertices = np.concatenate([grid, centers], axis=0)

    def gid(i, j):  # grid vertex (i, j)
        return i * (ny + 1) + j

    ngrid = (nx + 1) * (ny + 1)

    cells = []
    for i in range(nx):
        for j in range(ny):
            sw, se = gid(i, j), gid(i + 1, j)
            ne, nw = gid(i + 1, j + 1), gid(i, j + 1)
            c = ngrid + i * ny + j
            cells.append((sw, se, c))
            cells.append((se, ne, c))
            cells.append((ne, nw, c))
            cells.append((nw, sw, c))
    cells = np.array(cells, dtype=np.int64)

    markers = np.zeros(len(vertices), dtype=np.int64)
    if bc == "dirichlet":
        on_bdry = (
            np.isclose(vertices[:, 0], x0)
            | np.isclose(vertices[:, 0], x1)
            | np.isclose(vertices[:, 1], y0)
            | np.isclose(vertices[:, 1], y1)
        )
        markers[on_bdry] = MARKER_INFLOW
    elif bc == "periodic":
        if nx < 2 or ny < 2:
            raise ValueError("periodic criss-cross mesh needs nx, ny >= 2")
        group = PERIODIC_BASE
        # corners: one 4-way group
        corners = [gid(0, 0), gid(nx, 0), gid(0, ny), gid(nx, ny)]
        markers[corners] = group
        group += 1
        for j in range(1, ny):  # left-right pairs
            markers[[gid(0, j), gid(nx, j)]] = group
            group += 1
        for i in range(1, nx):  # bottom-top pairs
            markers[[gid(i, 0), gid(i, ny)]] = group
            group += 1
    elif bc != "none":
        raise ValueError(f"unknown bc {bc!r}")

    mesh = Mesh(dim=2, vertices=vertices, cells=cells, markers=markers)
    mesh.validate()
    return mesh


def build_mach3_step_mesh(square_size: float = 0.1) -> Mesh:
    """Criss-cross mesh of the wind tunnel (0,3)x(0,1) minus the step x>0.6, y<0.2.

    square_size must divide 0.6, 0.2, 3 and 1 evenly.  Inflow at x=0,
    outflow at x=3, slip walls elsewhere (step corner included).
    """
    a = square_size
    nx, ny = round(3.0 / a), round(1.0 / a)
    isx, isy = round(0.6 / a), round(0.2 / a)
    for name, val, n in (("3/a", 3.0, nx), ("1/a", 1.0, ny), ("0.6/a", 0.6, isx), ("0.2/a", 0.2, isy)):
        if abs(val / a - n) > 1e-9:
            raise ValueError(f"square_size must divide the step geometry: {name} not integral")
    full = build_crisscross_mesh(nx, ny, (0.0, 3.0, 0.0, 1.0), bc="none")
    xs = np.linspace(0.0, 3.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)

    # drop cells inside the step: squares with i >= isx and j < isy
    keep = []
    for icell, cell in enumerate(full.cells):
        isq = icell // (4 * ny)
        jsq = (icell // 4) % ny
        keep.append(not (isq >= isx and jsq < isy))
    cells = full.cells[np.array(keep)]
    used = np.unique(cells)
    remap = -np.ones(full.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = full.vertices[used]
    cells = remap[cells]

    markers = np.zeros(len(vertices), dtype=np.int64)
    X, Y = vertices[:, 0], vertices[:, 1]
    tol = 1e-9
    wall = (
        np.isclose(Y, 1.0, atol=tol)
        | (np.isclose(Y, 0.0, atol=tol) & (X <= 0.6 + tol))
        | (np.isclose(Y, 0.2, atol=tol) & (X >= 0.6 - tol))
        | (np.isclose(X, 0.6, atol=tol) & (Y <= 0.2 + tol))
    )
    markers[wall] = MARKER_SLIP_WALL
    markers[np.isclose(X, 0.0, atol=tol)] = MARKER_INFLOW
    outflow = np.isclose(X, 3.0, atol=tol) & ~np.isclose(Y, 1.0, atol=tol) & ~np.isclose(Y, 0.2, atol=tol)
    markers[outflow] = MARKER_OUTFLOW

    mesh = Mesh(dim=2, vertices=vertices, cells=cells, markers=markers)
    mesh.validate()
    return mesh


def refine_mesh(mesh: Mesh) -> Mesh:
    """Uniform red refinement (2D): every triangle splits into four.

    Midpoints of boundary edges inherit max(marker_a, marker_b); periodic
    meshes are not supported (marker groups cannot be split safely).
    """
    if mesh.dim != 2:
        raise ValueError("refine_mesh supports 2D meshes (1D: rebuild with 2x cells)")
    if np.any(mesh.markers >= PERIODIC_BASE):
        raise ValueError("refine_mesh does not support periodic meshes")
    nv = mesh.n_vertices
    edges = {}
    new_coords = []

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        idx = edges.get(key)
        if idx is None:
            idx = nv + len(new_coords)
            edges[key] = idx
            new_coords.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
        return idx

    cells = []
    for v0, v1, v2 in mesh.cells:
        m01 = midpoint(v0, v1)
        m12 = midpoint(v1, v2)
        m20 = midpoint(v2, v0)
        cells.extend([(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m01, m12, m20)])

    vertices = np.concatenate([mesh.vertices, np.array(new_coords)], axis=0)
    markers = np.concatenate([mesh.markers, np.zeros(len(new_coords), dtype=np.int64)])
    # boundary edges appear in exactly one cell
    count = {}
    for v0, v1, v2 in mesh.cells:
        for a, b in ((v0, v1), (v1, v2), (v2, v0)):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    for (a, b), c in count.items():
        if c == 1:
            markers[edges[(a, b)]] = max(mesh.markers[a], mesh.markers[b])
    out = Mesh(dim=2, vertices=vertices, cells=np.array(cells, dtype=np.int64), markers=markers)
    out.validate()
    return out


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as f:
        f.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
        for v in mesh.vertices:
            f.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        for c in mesh.cells:
            f.write(" ".join(str(int(i)) for i in c) + "\n")
        nz = np.nonzero(mesh.markers)[0]
        if len(nz):
            f.write("markers\n")
            for i in nz:
                f.write(f"{int(i)} {int(mesh.markers[i])}\n")


def load_mesh(path) -> Mesh:
    """Parse and validate a mesh file; errors carry the offending line number."""
    lines = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                lines.append((lineno, text))
    if not lines:
        raise MeshFormatError("empty mesh file")
    it = iter(lines)

    def next_line(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshFormatError(f"unexpected end of file while reading {what}") from None

    lineno, header = next_line("header")
    parts = header.split()
    if len(parts) != 3:
        raise MeshFormatError("header must be 'dim n_vertices n_cells'", line=lineno)
    try:
        dim, nv, nc = (int(p) for p in parts)
    except ValueError:
        raise MeshFormatError("non-integer header field", line=lineno) from None
    if dim not in (1, 2):
        raise MeshFormatError(f"dim must be 1 or 2, got {dim}", line=lineno)

    vertices = np.empty((nv, dim))
    for k in range(nv):
        lineno, text = next_line(f"vertex {k}")
        parts = text.split()
        if len(parts) != dim:
            raise MeshFormatError(f"expected {dim} coordinates", line=lineno)
        try:
            vertices[k] = [float(p) for p in parts]
        except ValueError:
            raise MeshFormatError("bad coordinate", line=lineno) from None

    cells = np.empty((nc, dim + 1), dtype=np.int64)
    for k in range(nc):
        lineno, text = next_line(f"cell {k}")
        parts = text.split()
        if len(parts) != dim + 1:
            raise MeshFormatError(f"expected {dim + 1} vertex indices", line=lineno)
        try:
            cells[k] = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError("bad vertex index", line=lineno) from None

    markers = np.zeros(nv, dtype=np.int64)
    rest = list(it)
    if rest:
        lineno, text = rest[0]
        if text != "markers":
            raise MeshFormatError(f"expected 'markers', got {text!r}", line=lineno)
        for lineno, text in rest[1:]:
            parts = text.split()
            if len(parts) != 2:
                raise MeshFormatError("marker line must be 'vertex tag'", line=lineno)
            try:
                idx, tag = int(parts[0]), int(parts[1])
            except ValueError:
                raise MeshFormatError("bad marker entry", line=lineno) from None
            if not 0 <= idx < nv:
                raise MeshFormatError(f"marker vertex {idx} out of range", line=lineno)
            markers[idx] = tag

    mesh = Mesh(dim=dim, vertices=vertices, cells=cells, markers=markers)
    mesh.validate()
    return mesh
