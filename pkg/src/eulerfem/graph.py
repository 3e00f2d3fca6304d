"""Sparse discrete graph of the P1 discretization.

For continuous P1 elements on simplices everything the scheme needs is a
row-compressed graph over mesh nodes carrying, per stored edge (i, j):

    c_ij = int phi_i grad(phi_j) dx        (a d-vector),
    n_ij = c_ij / |c_ij|,
    m_ij = int phi_i phi_j dx,

plus the lumped mass m_i = int phi_i dx per node.  All integrals are exact
closed forms, no quadrature.

c_ij is assembled from its antisymmetric part per cell (so c_ij == -c_ji
holds bitwise for pairs away from the boundary) plus the exact boundary-face
correction c_ij += 1/2 * oint phi_i phi_j n ds, which reproduces the plain
definition through the identity c_ij + c_ji = oint phi_i phi_j n ds.

Periodic identification groups are merged here: the graph lives on logical
nodes, one per group, and every downstream operation is topology-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshFormatError
from .mesh import MARKER_SLIP_WALL, PERIODIC_BASE, Mesh


@dataclass
class DiscreteGraph:
    dim: int
    n: int
    row_ptr: np.ndarray  # (n+1,) int64
    col: np.ndarray  # (nnz,) int32
    rowidx: np.ndarray  # (nnz,) int32, row of each entry
    diag_pos: np.ndarray  # (n,) int64
    tperm: np.ndarray  # (nnz,) int64, position of the transposed entry
    cij: np.ndarray  # (nnz, dim)
    cnorm: np.ndarray  # (nnz,)
    nij: np.ndarray  # (nnz, dim), zero rows where cnorm == 0
    mij: np.ndarray  # (nnz,)
    mi: np.ndarray  # (n,)
    x: np.ndarray  # (n, dim) logical node coordinates
    node_of_vertex: np.ndarray  # (n_vertices,) int64
    markers: np.ndarray  # (n,) logical-node marker (periodic groups -> 0)
    boundary_node: np.ndarray  # (n,) bool, on a true boundary face
    wall_nodes: np.ndarray  # indices with slip-wall marker
    wall_normals: np.ndarray  # (len(wall_nodes), dim) outward unit normals
    # unordered pair view (col > row): positions of both directed slots
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_pos_ij: np.ndarray
    pair_pos_ji: np.ndarray
    pair_sym: np.ndarray  # c_ji == -c_ij bitwise
    wall_modified: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nnz(self) -> int:
        return self.col.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.pair_i.shape[0]

    def degrees(self) -> np.ndarray:
        """Stencil cardinalities card(I(Omega_i)), self included."""
        return np.diff(self.row_ptr)

    def row_slice(self, i: int) -> slice:
        return slice(int(self.row_ptr[i]), int(self.row_ptr[i + 1]))

    def entry(self, i: int, j: int) -> int:
        """Position of stored entry (i, j); raises KeyError if absent."""
        sl = self.row_slice(i)
        cols = self.col[sl]
        k = np.searchsorted(cols, j)
        if k == len(cols) or cols[k] != j:
            raise KeyError(f"no stored entry ({i}, {j})")
        return sl.start + int(k)

    def mass_matrix(self):
        """Consistent mass as a scipy CSR matrix (cached)."""
        if "mass" not in self._cache:
            from scipy.sparse import csr_matrix

            self._cache["mass"] = csr_matrix(
                (self.mij, self.col.astype(np.int64), self.row_ptr), shape=(self.n, self.n)
            )
        return self._cache["mass"]

    def row_sums_c(self) -> np.ndarray:
        return np.add.reduceat(self.cij, self.row_ptr[:-1], axis=0)

    def validate(self) -> None:
        if np.any(self.mi <= 0.0):
            raise MeshFormatError("nonpositive lumped mass")
        mass_rows = np.add.reduceat(self.mij, self.row_ptr[:-1])
        if np.any(np.abs(mass_rows - self.mi) > 1e-13 * self.mi):
            raise MeshFormatError("consistent mass row sums do not match lumped mass")
        crows = self.row_sums_c()
        cmax = np.zeros(self.n)
        np.maximum.at(cmax, self.rowidx, self.cnorm)
        bad = np.linalg.norm(crows, axis=1) > 1e-13 * np.maximum(cmax, 1e-300)
        if np.any(bad):
            raise MeshFormatError(f"c row sum violation at node {int(np.argmax(bad))}")
        # exact antisymmetry away from the boundary
        interior_pair = ~(self.boundary_node[self.pair_i] & self.boundary_node[self.pair_j])
        a = self.cij[self.pair_pos_ij[interior_pair]]
        b = self.cij[self.pair_pos_ji[interior_pair]]
        if not np.array_equal(a, -b):
            raise MeshFormatError("c_ij = -c_ji violated for an interior pair")
        nz = self.cnorm > 0.0
        nn = np.linalg.norm(self.nij[nz], axis=1)
        if np.any(np.abs(nn - 1.0) > 1e-12):
            raise MeshFormatError("n_ij not unit length")


def _merge_periodic(mesh: Mesh):
    """Vertex -> logical node map (contiguous ids, group master = lowest vertex)."""
    nv = mesh.n_vertices
    rep = np.arange(nv)
    for members in mesh.periodic_groups().values():
        rep[members] = members.min()
    order = np.unique(rep)
    node_of = np.searchsorted(order, rep)
    return node_of, order


def _cell_geometry(mesh: Mesh):
    """Measures (nc,) and P1 gradients (nc, d+1, d) from vertex coordinates."""
    v = mesh.vertices
    c = mesh.cells
    meas = mesh.cell_measures()
    if np.any(meas <= 0.0):
        raise MeshFormatError("negative cell measure")
    nc = mesh.n_cells
    if mesh.dim == 1:
        grads = np.empty((nc, 2, 1))
        grads[:, 0, 0] = -1.0 / meas
        grads[:, 1, 0] = 1.0 / meas
        return meas, grads
    grads = np.empty((nc, 3, 2))
    for l in range(3):
        e = v[c[:, (l + 1) % 3]] - v[c[:, (l + 2) % 3]]
        # rotate by -90 degrees: (x, y) -> (y, -x)
        grads[:, l, 0] = e[:, 1]
        grads[:, l, 1] = -e[:, 0]
    grads /= 2.0 * meas[:, None, None]
    return meas, grads


def _boundary_faces(cl: np.ndarray, dim: int):
    """Faces (as sorted logical-node tuples) appearing in exactly one cell.

    Returns (faces, cell_index, local_opposite) arrays.
    """
    nc = cl.shape[0]
    if dim == 1:
        faces = np.concatenate([cl[:, [0]], cl[:, [1]]], axis=0)
        cells = np.concatenate([np.arange(nc), np.arange(nc)])
        opp = np.concatenate([np.ones(nc, dtype=np.int64), np.zeros(nc, dtype=np.int64)])
    else:
        fl = []
        for l in range(3):
            pair = cl[:, [(l + 1) % 3, (l + 2) % 3]]
            fl.append(np.sort(pair, axis=1))
        faces = np.concatenate(fl, axis=0)
        cells = np.tile(np.arange(nc), 3)
        opp = np.repeat(np.arange(3), nc)
    keys = faces[:, 0] if dim == 1 else faces[:, 0] * (cl.max() + 1) + faces[:, 1]
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    once = counts[inv] == 1
    return faces[once], cells[once], opp[once]


def assemble_graph(mesh: Mesh) -> DiscreteGraph:
    """Exact P1 graph assembly; deterministic (fixed cell order throughout)."""
    mesh.validate()
    dim = mesh.dim
    node_of, masters = _merge_periodic(mesh)
    n = len(masters)
    cl = node_of[mesh.cells]
    for ic in range(cl.shape[0]):
        if len(set(int(x) for x in cl[ic])) != dim + 1:
            raise MeshFormatError(f"cell {ic} degenerates under periodic identification")

    meas, grads = _cell_geometry(mesh)
    nloc = dim + 1
    w = meas / nloc  # int_K phi_l dx

    # sparsity: all ordered pairs within each cell
    ii = np.repeat(cl, nloc, axis=1).reshape(-1)
    jj = np.tile(cl, (1, nloc)).reshape(-1)
    keys = np.unique(ii.astype(np.int64) * n + jj.astype(np.int64))
    nnz = len(keys)
    rowidx = (keys // n).astype(np.int32)
    col = (keys % n).astype(np.int32)
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_ptr, rowidx + 1, 1)
    row_ptr = np.cumsum(row_ptr)

    def pos(a, b):
        return np.searchsorted(keys, a.astype(np.int64) * n + b.astype(np.int64))

    cij = np.zeros((nnz, dim))
    mij = np.zeros(nnz)
    mi = np.zeros(n)
    for l in range(nloc):
        np.add.at(mi, cl[:, l], w)

    diag_mass = meas * (1.0 / 3.0 if dim == 1 else 1.0 / 6.0)
    off_mass = meas * (1.0 / 6.0 if dim == 1 else 1.0 / 12.0)
    for a in range(nloc):
        np.add.at(mij, pos(cl[:, a], cl[:, a]), diag_mass)
        for b in range(a + 1, nloc):
            np.add.at(mij, pos(cl[:, a], cl[:, b]), off_mass)
            np.add.at(mij, pos(cl[:, b], cl[:, a]), off_mass)

    # antisymmetric part of c: s_ab = (w_a grad_b - w_b grad_a)/2, exact +/- pair
    for a in range(nloc):
        for b in range(a + 1, nloc):
            s = 0.5 * (w[:, None] * grads[:, b] - w[:, None] * grads[:, a])
            np.add.at(cij, pos(cl[:, a], cl[:, b]), s)
            np.add.at(cij, pos(cl[:, b], cl[:, a]), -s)

    # boundary-face corrections: c_pq += 1/2 * int_F phi_p phi_q n ds
    faces, fcells, fopp = _boundary_faces(cl, dim)
    boundary_node = np.zeros(n, dtype=bool)
    if dim == 1:
        # face is a single node; outward normal -1 at the left cell end, +1 right
        for face, icell, opp in zip(faces[:, 0], fcells, fopp):
            nrm = np.array([1.0 if opp == 0 else -1.0])
            boundary_node[face] = True
            np.add.at(cij, pos(np.array([face]), np.array([face])), 0.5 * nrm[None, :])
        face_normals = np.where(fopp == 0, 1.0, -1.0)[:, None]
        face_meas = np.ones(len(faces))
    else:
        vcells = mesh.cells[fcells]
        p = mesh.vertices
        # geometric endpoints of the face = the two non-opposite local vertices
        aidx = vcells[np.arange(len(fcells)), (fopp + 1) % 3]
        bidx = vcells[np.arange(len(fcells)), (fopp + 2) % 3]
        oidx = vcells[np.arange(len(fcells)), fopp]
        edge = p[bidx] - p[aidx]
        face_meas = np.linalg.norm(edge, axis=1)
        nrm = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / face_meas[:, None]
        flip = np.einsum("fk,fk->f", nrm, p[oidx] - p[aidx]) > 0.0
        nrm[flip] *= -1.0
        face_normals = nrm
        la = node_of[aidx]
        lb = node_of[bidx]
        boundary_node[la] = True
        boundary_node[lb] = True
        np.add.at(cij, pos(la, lb), nrm * (face_meas / 12.0)[:, None])
        np.add.at(cij, pos(lb, la), nrm * (face_meas / 12.0)[:, None])
        np.add.at(cij, pos(la, la), nrm * (face_meas / 6.0)[:, None])
        np.add.at(cij, pos(lb, lb), nrm * (face_meas / 6.0)[:, None])

    cnorm = np.linalg.norm(cij, axis=1)
    nij = np.zeros_like(cij)
    nz = cnorm > 0.0
    nij[nz] = cij[nz] / cnorm[nz, None]

    diag_pos = pos(np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64))
    tperm = pos(col, rowidx)

    markers = np.zeros(n, dtype=np.int64)
    vm = mesh.markers.copy()
    vm[vm >= PERIODIC_BASE] = 0
    markers[node_of] = vm  # all group members carry 0 by construction

    wall_nodes, wall_normals = _wall_normals(
        mesh, node_of, n, faces, face_normals, face_meas, markers, dim
    )

    pair_mask = col > rowidx
    pair_pos_ij = np.nonzero(pair_mask)[0].astype(np.int64)
    pair_pos_ji = tperm[pair_pos_ij]
    pair_i = rowidx[pair_pos_ij]
    pair_j = col[pair_pos_ij]
    pair_sym = np.all(cij[pair_pos_ij] == -cij[pair_pos_ji], axis=1)

    g = DiscreteGraph(
        dim=dim,
        n=n,
        row_ptr=row_ptr,
        col=col,
        rowidx=rowidx,
        diag_pos=diag_pos,
        tperm=tperm,
        cij=cij,
        cnorm=cnorm,
        nij=nij,
        mij=mij,
        mi=mi,
        x=mesh.vertices[masters].copy(),
        node_of_vertex=node_of,
        markers=markers,
        boundary_node=boundary_node,
        wall_nodes=wall_nodes,
        wall_normals=wall_normals,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_pos_ij=pair_pos_ij,
        pair_pos_ji=pair_pos_ji,
        pair_sym=pair_sym,
    )
    g.validate()
    return g


def _wall_normals(mesh, node_of, n, faces, face_normals, face_meas, markers, dim):
    """Outward unit normal per slip-wall node.

    Length-weighted average over incident boundary faces, preferring faces
    all of whose endpoints are wall-marked; explicit per-vertex overrides in
    mesh.slip_normal_override win.
    """
    wall_nodes = np.nonzero(markers == MARKER_SLIP_WALL)[0]
    if len(wall_nodes) == 0:
        return wall_nodes, np.zeros((0, dim))
    acc_wall = np.zeros((n, dim))
    acc_any = np.zeros((n, dim))
    for f in range(len(faces)):
        nodes = faces[f]
        contrib = face_normals[f] * face_meas[f]
        is_wall_face = all(markers[nd] == MARKER_SLIP_WALL for nd in nodes)
        for nd in nodes:
            acc_any[nd] += contrib
            if is_wall_face:
                acc_wall[nd] += contrib
    normals = np.zeros((len(wall_nodes), dim))
    override = {int(node_of[v]): np.asarray(nrm, dtype=float) for v, nrm in mesh.slip_normal_override.items()}
    for k, i in enumerate(wall_nodes):
        if int(i) in override:
            v = override[int(i)]
        else:
            v = acc_wall[i]
            if np.linalg.norm(v) == 0.0:
                v = acc_any[i]
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise MeshFormatError(
                f"slip-wall node {int(i)} has no well-defined outward normal; "
                "configure mesh.slip_normal_override for it"
            )
        normals[k] = v / norm
    return wall_nodes, normals


def apply_slip_wall_modification(graph: DiscreteGraph, mesh: Mesh) -> DiscreteGraph:
    """Integration-by-parts redefinition c_ij := -int phi_j grad(phi_i) on wall rows.

    Only wall-row entries whose column is also a boundary node actually
    change (interior neighbors already satisfy c_ij = -c_ji); the diagonal is
    reset to the negative row sum so every wall row keeps sum_j c_ij = 0.
    """
    if len(graph.wall_nodes) == 0:
        return graph

    cij = graph.cij.copy()
    old = graph.cij
    for i in graph.wall_nodes:
        sl = graph.row_slice(int(i))
        for k in range(sl.start, sl.stop):
            if graph.col[k] != i:
                cij[k] = -old[graph.tperm[k]]
        dpos = graph.diag_pos[i]
        cij[dpos] = 0.0
        cij[dpos] = -cij[sl].sum(axis=0)

    cnorm = np.linalg.norm(cij, axis=1)
    nij = np.zeros_like(cij)
    nz = cnorm > 0.0
    nij[nz] = cij[nz] / cnorm[nz, None]
    pair_sym = np.all(cij[graph.pair_pos_ij] == -cij[graph.pair_pos_ji], axis=1)

    g = DiscreteGraph(
        dim=graph.dim,
        n=graph.n,
        row_ptr=graph.row_ptr,
        col=graph.col,
        rowidx=graph.rowidx,
        diag_pos=graph.diag_pos,
        tperm=graph.tperm,
        cij=cij,
        cnorm=cnorm,
        nij=nij,
        mij=graph.mij,
        mi=graph.mi,
        x=graph.x,
        node_of_vertex=graph.node_of_vertex,
        markers=graph.markers,
        boundary_node=graph.boundary_node,
        wall_nodes=graph.wall_nodes,
        wall_normals=graph.wall_normals,
        pair_i=graph.pair_i,
        pair_j=graph.pair_j,
        pair_pos_ij=graph.pair_pos_ij,
        pair_pos_ji=graph.pair_pos_ji,
        pair_sym=pair_sym,
        wall_modified=True,
    )
    # row sums must still vanish (the diagonal reset enforces it)
    crows = g.row_sums_c()
    cmax = np.zeros(g.n)
    np.maximum.at(cmax, g.rowidx, g.cnorm)
    bad = np.linalg.norm(crows, axis=1) > 1e-12 * np.maximum(cmax, 1e-300)
    if np.any(bad):
        raise MeshFormatError("slip-wall modification broke a row sum")
    return g
