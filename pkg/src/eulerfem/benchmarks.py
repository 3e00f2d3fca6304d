"""Benchmark problems: meshes, initial data, exact solutions, defaults.

1D cases interpret `resolution` as the number of dofs (n_cells = dofs - 1);
the vortex interprets it as the uniform-refinement level of the 20x13
criss-cross base mesh; the Mach-3 step as squares per unit length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import mesh as meshmod
from . import riemann
from .physics import EquationOfState, primitive_to_conserved

GAMMA_75 = 7.0 / 5.0


@dataclass
class BenchmarkCase:
    name: str
    dim: int
    eos: EquationOfState
    t_start: float
    t_final: float
    cfl: float
    error_norm: str  # "1", "2", or "inf"
    build_mesh: Callable[[int], meshmod.Mesh]
    initial: Callable[[np.ndarray], np.ndarray]  # x (n, d) -> U (n, d+2)
    exact: Optional[Callable[[np.ndarray, float], np.ndarray]] = None  # (x, t) -> U


def _piecewise_riemann_initial(x0, left, right, eos):
    def init(x):
        xs = x[:, 0]
        prim = np.where(xs[:, None] < x0, left, right)
        return primitive_to_conserved(prim[:, 0], prim[:, 1:2], prim[:, 2], eos)

    return init


def _oracle_exact(x0, left, right, eos):
    wl = primitive_to_conserved(left[0], [left[1]], left[2], eos)
    wr = primitive_to_conserved(right[0], [right[1]], right[2], eos)

    def exact(x, t):
        xs = x[:, 0]
        if t <= 0.0:
            prim = np.where(xs[:, None] < x0, left, right)
        else:
            prim = np.array([riemann.exact_riemann_solve(wl, wr, eos, (xx - x0) / t) for xx in xs])
        return primitive_to_conserved(prim[:, 0], prim[:, 1:2], prim[:, 2], eos)

    return exact


# --- smooth wave -------------------------------------------------------------


def smooth_wave_primitive(x: np.ndarray, t: float):
    """rho = 1 + 2^6 (x1-x0)^-6 (x-t-x0)^3 (x1-x+t)^3 on x0 <= x-t < x1, else 1;
    v = 1, p = 1; x0 = 0.1, x1 = 0.3."""
    x0, x1 = 0.1, 0.3
    xi = x - t
    bump = 2.0**6 / (x1 - x0) ** 6 * (xi - x0) ** 3 * (x1 - xi) ** 3
    rho = np.where((xi >= x0) & (xi < x1), 1.0 + bump, 1.0)
    return rho, np.ones_like(rho), np.ones_like(rho)


def exact_smooth_wave(x: np.ndarray, t: float, eos: EquationOfState) -> np.ndarray:
    rho, v, p = smooth_wave_primitive(x[:, 0], t)
    return primitive_to_conserved(rho, v[:, None], p, eos)


# --- rarefaction -------------------------------------------------------------

RAREFACTION_X0 = 0.2


def rarefaction_data(gamma=GAMMA_75):
    rho_l, p_l = 3.0, 1.0
    c_l = math.sqrt(gamma * p_l / rho_l)
    v_l = c_l
    rho_r = 0.5
    p_r = p_l * (rho_r / rho_l) ** gamma
    c_r = math.sqrt(gamma * p_r / rho_r)
    v_r = v_l + 2.0 / (gamma - 1.0) * (c_l - c_r)
    return (rho_l, v_l, p_l, c_l), (rho_r, v_r, p_r, c_r)


def exact_rarefaction(xi: np.ndarray, gamma=GAMMA_75):
    """Primitive solution of the rarefaction benchmark as a function of xi = (x-x0)/t."""
    (rho_l, v_l, p_l, c_l), (rho_r, v_r, p_r, c_r) = rarefaction_data(gamma)
    xi = np.asarray(xi, dtype=float)
    frac = 2.0 / (gamma + 1.0) + (gamma - 1.0) / (gamma + 1.0) * (v_l - xi) / c_l
    frac = np.maximum(frac, 0.0)  # fan branch is selected away outside its range
    rho_fan = rho_l * frac ** (2.0 / (gamma - 1.0))
    v_fan = 2.0 / (gamma + 1.0) * (c_l + 0.5 * (gamma - 1.0) * v_l + xi)
    p_fan = p_l * frac ** (2.0 * gamma / (gamma - 1.0))
    left = xi <= v_l - c_l
    right = xi > v_r - c_r
    rho = np.where(left, rho_l, np.where(right, rho_r, rho_fan))
    v = np.where(left, v_l, np.where(right, v_r, v_fan))
    p = np.where(left, p_l, np.where(right, p_r, p_fan))
    return rho, v, p


def rarefaction_t_start(gamma=GAMMA_75) -> float:
    (_, _, _, _), (rho_r, v_r, p_r, c_r) = rarefaction_data(gamma)
    return RAREFACTION_X0 / (v_r - c_r)


# --- Leblanc -----------------------------------------------------------------

LEBLANC_X0 = 0.33
LEBLANC_RHO_STAR_L = 5.40793353493162e-2
LEBLANC_RHO_STAR_R = 3.99999806043000e-3
LEBLANC_V_STAR = 0.621838671391735
LEBLANC_P_STAR = 0.515577927650970e-3
LEBLANC_LAMBDA_1 = 0.495784895188979  # rarefaction tail
LEBLANC_LAMBDA_3 = 0.829118362533470  # shock


def exact_leblanc(xi: np.ndarray):
    """Primitive Leblanc solution vs xi = (x-x0)/t (gamma = 5/3)."""
    xi = np.asarray(xi, dtype=float)
    gamma = 5.0 / 3.0
    rho_fan = (0.75 - 0.75 * xi) ** 3
    v_fan = 0.75 * (1.0 / 3.0 + xi)
    p_fan = (1.0 / 15.0) * (0.75 - 0.75 * xi) ** 5
    rho = np.select(
        [xi <= -1.0 / 3.0, xi <= LEBLANC_LAMBDA_1, xi <= LEBLANC_V_STAR, xi <= LEBLANC_LAMBDA_3],
        [1.0, rho_fan, LEBLANC_RHO_STAR_L, LEBLANC_RHO_STAR_R],
        default=1e-3,
    )
    v = np.select(
        [xi <= -1.0 / 3.0, xi <= LEBLANC_LAMBDA_1, xi <= LEBLANC_LAMBDA_3],
        [0.0, v_fan, LEBLANC_V_STAR],
        default=0.0,
    )
    p = np.select(
        [xi <= -1.0 / 3.0, xi <= LEBLANC_LAMBDA_1, xi <= LEBLANC_LAMBDA_3],
        [(gamma - 1.0) * 1e-1, p_fan, LEBLANC_P_STAR],
        default=(gamma - 1.0) * 1e-10,
    )
    return rho, v, p


# --- isentropic vortex -------------------------------------------------------

VORTEX_BETA = 5.0
VORTEX_CENTER = (0.0, 0.0)
VORTEX_U_INF = (2.0, 0.0)


def exact_isentropic_vortex(x: np.ndarray, t: float, eos: EquationOfState) -> np.ndarray:
    gamma = eos.gamma
    xc = VORTEX_CENTER[0] + VORTEX_U_INF[0] * t
    yc = VORTEX_CENTER[1] + VORTEX_U_INF[1] * t
    xb = x[:, 0] - xc
    yb = x[:, 1] - yc
    r2 = xb * xb + yb * yb
    env = np.exp(1.0 - r2)
    du = VORTEX_BETA / (2.0 * math.pi) * env
    dT = -(gamma - 1.0) * VORTEX_BETA**2 / (8.0 * gamma * math.pi**2) * env
    T = 1.0 + dT
    if np.any(T <= 0.0):
        raise ValueError("vortex temperature perturbation exceeds the free stream")
    rho = T ** (1.0 / (gamma - 1.0))
    p = rho**gamma
    v = np.stack([VORTEX_U_INF[0] - du * yb, VORTEX_U_INF[1] + du * xb], axis=1)
    return primitive_to_conserved(rho, v, p, eos)


# --- registry ----------------------------------------------------------------


def _interval_builder(bc):
    def build(resolution):
        return meshmod.build_interval_mesh(max(resolution - 1, 2), 0.0, 1.0, bc=bc)

    return build


def _vortex_builder(level):
    m = meshmod.build_crisscross_mesh(20, 13, (-5.0, 10.0, -5.0, 5.0), bc="dirichlet")
    for _ in range(level):
        m = meshmod.refine_mesh(m)
    return m


def get_case(name: str, gamma: Optional[float] = None, covolume: float = 0.0) -> BenchmarkCase:
    """Benchmark registry; gamma/covolume override the case defaults where the
    exact solution permits it (the Leblanc table and the Riemann oracles pin
    their own EOS)."""
    if covolume != 0.0 and name not in ("smooth_wave", "blast", "mach3_step"):
        raise ValueError(f"case {name!r} has a polytropic exact solution; covolume must be 0")
    if name == "smooth_wave":
        eos = EquationOfState(gamma=gamma if gamma is not None else GAMMA_75, b=covolume)
        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=0.0,
            t_final=0.6,
            cfl=0.25,
            error_norm="inf",
            build_mesh=_interval_builder("dirichlet"),
            initial=lambda x: exact_smooth_wave(x, 0.0, eos),
            exact=lambda x, t: exact_smooth_wave(x, t, eos),
        )
    if name == "rarefaction":
        g = gamma if gamma is not None else GAMMA_75
        eos = EquationOfState(gamma=g)

        def exact(x, t):
            rho, v, p = exact_rarefaction((x[:, 0] - RAREFACTION_X0) / t, g)
            return primitive_to_conserved(rho, v[:, None], p, eos)

        t0 = rarefaction_t_start(g)
        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=t0,
            t_final=0.5,
            cfl=0.25,
            error_norm="1",
            build_mesh=_interval_builder("dirichlet"),
            initial=lambda x: exact(x, t0),
            exact=exact,
        )
    if name == "leblanc":
        if gamma is not None and abs(gamma - 5.0 / 3.0) > 1e-12:
            raise ValueError("the Leblanc exact solution is specific to gamma = 5/3")
        eos = EquationOfState(gamma=5.0 / 3.0)

        def exact(x, t):
            if t <= 0.0:
                xs = x[:, 0]
                rho = np.where(xs < LEBLANC_X0, 1.0, 1e-3)
                p = np.where(xs < LEBLANC_X0, (eos.gamma - 1.0) * 1e-1, (eos.gamma - 1.0) * 1e-10)
                return primitive_to_conserved(rho, np.zeros_like(rho)[:, None], p, eos)
            rho, v, p = exact_leblanc((x[:, 0] - LEBLANC_X0) / t)
            return primitive_to_conserved(rho, v[:, None], p, eos)

        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=0.0,
            t_final=2.0 / 3.0,
            cfl=0.25,
            error_norm="1",
            build_mesh=_interval_builder("dirichlet"),
            initial=lambda x: exact(x, 0.0),
            exact=exact,
        )
    if name == "sod":
        eos = EquationOfState(gamma=gamma if gamma is not None else 1.4)
        left, right = (1.0, 0.0, 1.0), (0.125, 0.0, 0.1)
        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=0.0,
            t_final=0.225,
            cfl=0.5,
            error_norm="1",
            build_mesh=_interval_builder("dirichlet"),
            initial=_piecewise_riemann_initial(0.5, np.array(left), np.array(right), eos),
            exact=_oracle_exact(0.5, left, right, eos),
        )
    if name == "lax":
        eos = EquationOfState(gamma=gamma if gamma is not None else 1.4)
        left, right = (0.445, 0.698, 3.528), (0.5, 0.0, 0.571)
        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=0.0,
            t_final=0.15,
            cfl=0.5,
            error_norm="1",
            build_mesh=_interval_builder("dirichlet"),
            initial=_piecewise_riemann_initial(0.5, np.array(left), np.array(right), eos),
            exact=_oracle_exact(0.5, left, right, eos),
        )
    if name == "blast":
        eos = EquationOfState(gamma=gamma if gamma is not None else 1.4, b=covolume)

        def init(x):
            xs = x[:, 0]
            p = np.where(xs < 0.1, 1000.0, np.where(xs < 0.9, 0.01, 100.0))
            rho = np.ones_like(xs)
            return primitive_to_conserved(rho, np.zeros_like(xs)[:, None], p, eos)

        return BenchmarkCase(
            name=name,
            dim=1,
            eos=eos,
            t_start=0.0,
            t_final=0.038,
            cfl=0.5,
            error_norm="1",
            build_mesh=_interval_builder("wall"),
            initial=init,
            exact=None,
        )
    if name == "vortex":
        eos = EquationOfState(gamma=gamma if gamma is not None else GAMMA_75)
        return BenchmarkCase(
            name=name,
            dim=2,
            eos=eos,
            t_start=0.0,
            t_final=2.0,
            cfl=0.5,
            error_norm="inf",
            build_mesh=_vortex_builder,
            initial=lambda x: exact_isentropic_vortex(x, 0.0, eos),
            exact=lambda x, t: exact_isentropic_vortex(x, t, eos),
        )
    if name == "mach3_step":
        eos = EquationOfState(gamma=gamma if gamma is not None else 1.4, b=covolume)

        def init(x):
            n = x.shape[0]
            rho = np.full(n, 1.4)
            v = np.tile([3.0, 0.0], (n, 1))
            p = np.ones(n)
            return primitive_to_conserved(rho, v, p, eos)

        return BenchmarkCase(
            name=name,
            dim=2,
            eos=eos,
            t_start=0.0,
            t_final=4.0,
            cfl=0.25,
            error_norm="inf",
            build_mesh=lambda res: meshmod.build_mach3_step_mesh(1.0 / res),
            initial=init,
            exact=None,
        )
    raise KeyError(f"unknown benchmark case {name!r}")


CASE_NAMES = ["smooth_wave", "rarefaction", "leblanc", "sod", "lax", "blast", "vortex", "mach3_step"]
