"""Solution writers: per-node CSV, legacy ASCII VTK, and Schlieren CSV."""

from __future__ import annotations

import numpy as np

from . import physics
from .errors import EulerFEMError
from .graph import DiscreteGraph
from .mesh import Mesh
from .physics import EquationOfState

SCHLIEREN_CONTRAST = 10.0


def _check_nonempty(U: np.ndarray) -> None:
    if U.shape[0] == 0:
        raise EulerFEMError("refusing to write an empty solution")


def solution_header(dim: int) -> list[str]:
    if dim == 1:
        return ["x", "rho", "m", "E", "p"]
    return ["x", "y", "rho", "mx", "my", "E", "p"]


def write_solution_csv(path, graph: DiscreteGraph, U: np.ndarray, eos: EquationOfState) -> None:
    """Per-node x [y] rho m [m2] E p at 17 significant digits (bit roundtrip)."""
    _check_nonempty(U)
    p = physics.pressure(U, eos)
    cols = [graph.x[:, a] for a in range(graph.dim)] + [U[:, c] for c in range(U.shape[1])] + [p]
    with open(path, "w") as f:
        f.write(",".join(solution_header(graph.dim)) + "\n")
        for i in range(graph.n):
            f.write(",".join(f"{c[i]:.17g}" for c in cols) + "\n")


def read_solution_csv(path):
    """Inverse of write_solution_csv; returns (header, columns array)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    return header, data


def write_vtk(path, mesh: Mesh, graph: DiscreteGraph, U: np.ndarray, eos: EquationOfState) -> None:
    """Legacy ASCII unstructured-grid VTK with point data (rho, momentum, E, p)."""
    _check_nonempty(U)
    Uv = U[graph.node_of_vertex]  # values live on logical nodes
    p = physics.pressure(Uv, eos)
    nv = mesh.n_vertices
    nc = mesh.n_cells
    npts_per_cell = mesh.dim + 1
    cell_type = 3 if mesh.dim == 1 else 5  # VTK_LINE / VTK_TRIANGLE
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("eulerfem solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {nv} double\n")
        for v in mesh.vertices:
            x = v[0]
            y = v[1] if mesh.dim == 2 else 0.0
            f.write(f"{x:.17g} {y:.17g} 0\n")
        f.write(f"CELLS {nc} {nc * (npts_per_cell + 1)}\n")
        for c in mesh.cells:
            f.write(f"{npts_per_cell} " + " ".join(str(int(i)) for i in c) + "\n")
        f.write(f"CELL_TYPES {nc}\n")
        for _ in range(nc):
            f.write(f"{cell_type}\n")
        f.write(f"POINT_DATA {nv}\n")
        f.write("SCALARS rho double 1\nLOOKUP_TABLE default\n")
        for val in Uv[:, 0]:
            f.write(f"{val:.17g}\n")
        f.write("VECTORS momentum double\n")
        for i in range(nv):
            mx = Uv[i, 1]
            my = Uv[i, 2] if mesh.dim == 2 else 0.0
            f.write(f"{mx:.17g} {my:.17g} 0\n")
        f.write("SCALARS E double 1\nLOOKUP_TABLE default\n")
        for val in Uv[:, -1]:
            f.write(f"{val:.17g}\n")
        f.write("SCALARS p double 1\nLOOKUP_TABLE default\n")
        for val in p:
            f.write(f"{val:.17g}\n")


def recovered_gradient(graph: DiscreteGraph, g: np.ndarray) -> np.ndarray:
    """Lumped L2-projected P1 gradient: grad_i = (sum_j c_ij g_j) / m_i."""
    contrib = graph.cij * g[graph.col][:, None]
    return np.add.reduceat(contrib, graph.row_ptr[:-1], axis=0) / graph.mi[:, None]


def schlieren_field(graph: DiscreteGraph, U: np.ndarray, contrast: float = SCHLIEREN_CONTRAST):
    """exp(-c |grad rho| / max |grad rho|), the usual numerical Schlieren map."""
    grad = recovered_gradient(graph, physics.density(U))
    mag = np.linalg.norm(grad, axis=1)
    peak = mag.max()
    if peak == 0.0:
        return np.ones(graph.n)
    return np.exp(-contrast * mag / peak)


def write_schlieren_csv(path, graph: DiscreteGraph, U: np.ndarray, contrast: float = SCHLIEREN_CONTRAST) -> None:
    _check_nonempty(U)
    s = schlieren_field(graph, U, contrast)
    coords = ["x", "y"][: graph.dim]
    with open(path, "w") as f:
        f.write(",".join(coords + ["schlieren"]) + "\n")
        for i in range(graph.n):
            xs = ",".join(f"{graph.x[i, a]:.17g}" for a in range(graph.dim))
            f.write(f"{xs},{s[i]:.17g}\n")
