import numpy as np
import pytest

from eulerfem.graph import apply_slip_wall_modification, assemble_graph
from eulerfem.mesh import Mesh, build_crisscross_mesh, build_interval_mesh, build_mach3_step_mesh


def _uniform_1d(n=8, bc="dirichlet"):
    return assemble_graph(build_interval_mesh(n, 0.0, 1.0, bc=bc))


def test_1d_uniform_entries():
    n = 8
    g = _uniform_1d(n)
    h = 1.0 / n
    i = 3
    assert g.cij[g.entry(i, i + 1)][0] == pytest.approx(0.5, abs=1e-15)
    assert g.cij[g.entry(i, i - 1)][0] == pytest.approx(-0.5, abs=1e-15)
    assert g.mi[i] == pytest.approx(h, rel=1e-14)
    assert g.mi[0] == pytest.approx(h / 2, rel=1e-14)
    assert g.mij[g.entry(i, i + 1)] == pytest.approx(h / 6, rel=1e-14)
    assert g.mij[g.entry(i, i)] == pytest.approx(2 * h / 3, rel=1e-14)


def test_row_sums_zero_and_mass_consistency():
    for g in (_uniform_1d(13), assemble_graph(build_crisscross_mesh(4, 3, (0.0, 2.0, -1.0, 1.0)))):
        crows = g.row_sums_c()
        cmax = np.zeros(g.n)
        np.maximum.at(cmax, g.rowidx, g.cnorm)
        assert np.all(np.linalg.norm(crows, axis=1) <= 1e-13 * np.maximum(cmax, 1e-300))
        mass_rows = np.add.reduceat(g.mij, g.row_ptr[:-1])
        assert np.all(np.abs(mass_rows - g.mi) <= 1e-13 * g.mi)
        assert np.all(g.mi > 0)


def test_antisymmetry_exact_for_interior_pairs():
    g = assemble_graph(build_crisscross_mesh(5, 4, (0.0, 1.0, 0.0, 1.0)))
    interior = ~(g.boundary_node[g.pair_i] & g.boundary_node[g.pair_j])
    a = g.cij[g.pair_pos_ij[interior]]
    b = g.cij[g.pair_pos_ji[interior]]
    assert np.array_equal(a, -b)


def test_reference_triangle_lumped_mass():
    m = Mesh(
        dim=2,
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        cells=np.array([[0, 1, 2]]),
        markers=np.zeros(3, dtype=np.int64),
    )
    g = assemble_graph(m)
    assert np.allclose(g.mi, 1.0 / 6.0, rtol=1e-14)


def test_assembly_deterministic():
    m = build_crisscross_mesh(6, 5, (0.0, 3.0, 0.0, 2.0))
    g1 = assemble_graph(m)
    g2 = assemble_graph(m)
    assert np.array_equal(g1.cij, g2.cij)
    assert np.array_equal(g1.mij, g2.mij)
    assert np.array_equal(g1.mi, g2.mi)


def test_periodic_merging_1d():
    g = _uniform_1d(8, bc="periodic")
    assert g.n == 8
    assert np.allclose(g.mi, 1.0 / 8.0)
    # the seam node couples to both physical sides
    assert g.degrees()[0] == 3
    crows = g.row_sums_c()
    assert np.all(np.abs(crows) <= 1e-14)
    # all pairs are interior now: exact antisymmetry everywhere
    assert np.array_equal(g.cij[g.pair_pos_ij], -g.cij[g.pair_pos_ji])


def test_periodic_torus_uniform_mass():
    g = assemble_graph(build_crisscross_mesh(3, 3, (0.0, 1.0, 0.0, 1.0), bc="periodic"))
    # 3x3 grid nodes (corners/edges merged) + 9 centers
    assert g.n == 9 + 9
    assert not np.any(g.boundary_node)


def test_tperm_involution():
    g = assemble_graph(build_crisscross_mesh(4, 4, (0.0, 1.0, 0.0, 1.0)))
    assert np.array_equal(g.tperm[g.tperm], np.arange(g.nnz))
    assert np.array_equal(g.col[g.tperm], g.rowidx)


def test_slip_wall_noop_without_walls():
    g = _uniform_1d(8)
    assert apply_slip_wall_modification(g, build_interval_mesh(8, 0.0, 1.0)) is g


def test_slip_wall_1d_rows_unchanged():
    mesh = build_interval_mesh(8, 0.0, 1.0, bc="wall")
    g0 = assemble_graph(mesh)
    g1 = apply_slip_wall_modification(g0, mesh)
    assert g1.wall_modified
    # interior-neighbor entries already satisfy c_ij = -c_ji: 1D graph unchanged
    assert np.allclose(g1.cij, g0.cij, atol=1e-15)
    assert g1.cij[g1.entry(0, 0)][0] + g1.cij[g1.entry(0, 1)][0] == pytest.approx(0.0, abs=1e-15)


def test_slip_wall_mach3_row_sums_and_normals():
    mesh = build_mach3_step_mesh(0.1)
    g0 = assemble_graph(mesh)
    g = apply_slip_wall_modification(g0, mesh)
    crows = g.row_sums_c()
    cmax = np.zeros(g.n)
    np.maximum.at(cmax, g.rowidx, g.cnorm)
    assert np.all(np.linalg.norm(crows, axis=1) <= 1e-12 * np.maximum(cmax, 1e-300))
    # wall-wall couplings actually changed in 2D
    assert not np.allclose(g.cij, g0.cij)
    # normals: bottom wall points down, step corner averages to (1,-1)/sqrt(2)
    xy = g.x[g.wall_nodes]
    bottom = np.isclose(xy[:, 1], 0.0) & (xy[:, 0] > 0.05) & (xy[:, 0] < 0.55)
    assert np.allclose(g.wall_normals[bottom], [0.0, -1.0], atol=1e-12)
    corner = np.isclose(xy[:, 0], 0.6) & np.isclose(xy[:, 1], 0.2)
    assert corner.sum() == 1
    assert np.allclose(g.wall_normals[corner][0], [1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)])
    assert np.allclose(np.linalg.norm(g.wall_normals, axis=1), 1.0)


def test_normal_override():
    mesh = build_mach3_step_mesh(0.1)
    g0 = assemble_graph(mesh)
    corner_vertex = int(
        np.nonzero(np.isclose(mesh.vertices[:, 0], 0.6) & np.isclose(mesh.vertices[:, 1], 0.2))[0][0]
    )
    mesh.slip_normal_override[corner_vertex] = np.array([0.0, -1.0])
    g = assemble_graph(mesh)
    k = np.nonzero(g.wall_nodes == g.node_of_vertex[corner_vertex])[0][0]
    assert np.allclose(g.wall_normals[k], [0.0, -1.0])
