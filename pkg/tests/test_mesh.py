import numpy as np
import pytest

from eulerfem import mesh as meshmod
from eulerfem.errors import MeshFormatError
from eulerfem.mesh import (
    Mesh,
    build_crisscross_mesh,
    build_interval_mesh,
    build_mach3_step_mesh,
    load_mesh,
    refine_mesh,
    save_mesh,
)


def test_interval_mesh_basic():
    m = build_interval_mesh(2, 0.0, 1.0)
    assert np.allclose(m.vertices[:, 0], [0.0, 0.5, 1.0])
    assert m.cells.tolist() == [[0, 1], [1, 2]]


def test_interval_mesh_periodic_pairs_ends():
    m = build_interval_mesh(100, 0.0, 1.0, bc="periodic")
    groups = m.periodic_groups()
    assert len(groups) == 1
    (members,) = groups.values()
    assert set(members.tolist()) == {0, 100}


def test_interval_mesh_preconditions():
    with pytest.raises(ValueError):
        build_interval_mesh(1, 0.0, 1.0)
    with pytest.raises(ValueError):
        build_interval_mesh(10, 1.0, 0.0)


def test_crisscross_counts():
    m = build_crisscross_mesh(1, 1, (0.0, 1.0, 0.0, 1.0))
    assert m.n_vertices == 5
    assert m.n_cells == 4
    m = build_crisscross_mesh(20, 13, (-5.0, 10.0, -5.0, 5.0))
    assert m.n_cells == 20 * 13 * 4 == 1040
    assert m.n_vertices == 21 * 14 + 20 * 13
    m = build_crisscross_mesh(2, 1, (0.0, 2.0, 0.0, 1.0))
    assert m.n_cells == 8
    assert m.n_vertices == 3 * 2 + 2  # shared edge vertices deduplicated


def test_crisscross_degenerate_bbox():
    with pytest.raises(ValueError):
        build_crisscross_mesh(2, 2, (0.0, 0.0, 0.0, 1.0))


def test_crisscross_positive_measures():
    m = build_crisscross_mesh(3, 2, (0.0, 1.0, 0.0, 1.0))
    assert np.all(m.cell_measures() > 0.0)


def test_periodic_torus_markers():
    m = build_crisscross_mesh(3, 3, (0.0, 1.0, 0.0, 1.0), bc="periodic")
    groups = m.periodic_groups()
    sizes = sorted(len(v) for v in groups.values())
    assert sizes.count(4) == 1  # the four corners merge
    assert sizes.count(2) == (3 - 1) + (3 - 1)


def test_mesh_file_roundtrip(tmp_path):
    m = build_crisscross_mesh(2, 2, (0.0, 1.0, 0.0, 1.0))
    m.markers[0] = 3
    path = tmp_path / "mesh.txt"
    save_mesh(m, path)
    m2 = load_mesh(path)
    assert np.array_equal(m2.cells, m.cells)
    assert np.array_equal(m2.markers, m.markers)
    assert np.allclose(m2.vertices, m.vertices)


def test_load_minimal_two_triangle_square(tmp_path):
    path = tmp_path / "square.txt"
    path.write_text(
        "2 4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n"
    )
    m = load_mesh(path)
    assert m.n_vertices == 4
    assert m.n_cells == 2


def test_load_rejects_inverted_cell(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 4 2\n0 0\n1 0\n1 1\n0 1\n0 2 1\n0 2 3\n")
    with pytest.raises(MeshFormatError, match="negative cell measure"):
        load_mesh(path)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad2.txt"
    path.write_text("2 4 1\n0 0\n1 0\nbroken line\n0 1\n0 1 2\n")
    with pytest.raises(MeshFormatError, match="line 4"):
        load_mesh(path)


def test_load_rejects_repeated_vertices(tmp_path):
    path = tmp_path / "bad3.txt"
    path.write_text("1 3 2\n0\n0.5\n1\n0 0\n1 2\n")
    with pytest.raises(MeshFormatError, match="repeated"):
        load_mesh(path)


def test_mach3_geometry(tmp_path):
    m = build_mach3_step_mesh(0.1)
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    assert x.min() == 0.0 and x.max() == 3.0
    assert y.min() == 0.0 and y.max() == 1.0
    # no vertex strictly inside the step
    assert not np.any((x > 0.6 + 1e-9) & (y < 0.2 - 1e-9))
    # roundtrips through the file format
    path = tmp_path / "step.txt"
    save_mesh(m, path)
    m2 = load_mesh(path)
    assert m2.n_cells == m.n_cells
    # marker sanity: inflow on x=0, outflow on x=3 interior, walls elsewhere
    assert np.all(m.markers[np.isclose(x, 0.0)] == meshmod.MARKER_INFLOW)
    corner = np.isclose(x, 0.6) & np.isclose(y, 0.2)
    assert np.all(m.markers[corner] == meshmod.MARKER_SLIP_WALL)


def test_refine_quadruples_cells():
    m = build_crisscross_mesh(2, 2, (0.0, 1.0, 0.0, 1.0), bc="dirichlet")
    r = refine_mesh(m)
    assert r.n_cells == 4 * m.n_cells
    assert np.all(r.cell_measures() > 0)
    # boundary midpoints inherit the boundary marker
    on_bdry = (
        np.isclose(r.vertices[:, 0], 0.0)
        | np.isclose(r.vertices[:, 0], 1.0)
        | np.isclose(r.vertices[:, 1], 0.0)
        | np.isclose(r.vertices[:, 1], 1.0)
    )
    assert np.all(r.markers[on_bdry] == meshmod.MARKER_INFLOW)
    assert np.all(r.markers[~on_bdry] == 0)
