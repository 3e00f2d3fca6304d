"""Convex (quasiconcavity-based) limiting.

Antidiffusive fluxes A_ij, the per-edge candidate vectors P_ij, the limiter
cascade density -> internal energy -> specific entropy, symmetrization,
optional iteration, and the second-order bound relaxations.

Every directed limiter returns a fraction on the *feasible* side of its
constraint: the reconstructed states U^L + l P satisfy the active relaxed
bounds up to the documented tolerances by construction.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from . import physics
from .errors import EulerFEMError
from .graph import DiscreteGraph
from .loworder import LimiterBounds
from .physics import EquationOfState

DENSITY_EPS = 1e-14  # division guard of the density limiter, eps_i = eps * rho_max
PRECOND_TOL = 1e-12  # allowed relative violation of "U^L satisfies the bounds"
LINE_SEARCH_TOL = 1e-12
LINE_SEARCH_MAX_IT = 50


# ----------------------------------------------------------------------------
# antidiffusion
# ----------------------------------------------------------------------------


def assemble_antidiffusion(
    graph: DiscreteGraph,
    U: np.ndarray,
    U_low: np.ndarray,
    U_high: np.ndarray,
    d_low: np.ndarray,
    d_high: np.ndarray,
    dt: float,
    mass_mode: str = "consistent",
    solve_slack: np.ndarray | None = None,
) -> np.ndarray:
    """A_ij = Delta_ij (dU^H_j - dU^H_i) + dt (d^H_ij - d^L_ij)(U_j - U_i).

    dU^H = U^H - U^n and Delta_ij = m_i delta_ij - m_ij (zero in lumped
    mode).  Skew-symmetry holds bitwise.  The row identity
    m_i (U^H_i - U^L_i) = sum_j A_ij holds up to the consistent-mass solver
    residual and is verified here (pass solve_slack = per-component residual
    norms from that solve); violations beyond it are assembly bugs.
    """
    dUH = U_high - U
    A = dt * (d_high - d_low)[:, None] * (U[graph.col] - U[graph.rowidx])
    if mass_mode == "consistent":
        A -= graph.mij[:, None] * (dUH[graph.col] - dUH[graph.rowidx])
    A[graph.diag_pos] = 0.0

    rowsum = np.add.reduceat(A, graph.row_ptr[:-1], axis=0)
    lhs = graph.mi[:, None] * (U_high - U_low)
    err = np.abs(lhs - rowsum)
    scale = graph.mi[:, None] * (np.abs(U_high - U_low) + np.abs(dUH) + np.abs(U_low - U))
    tol = 1e-10 * (scale + scale.max(axis=0))
    if solve_slack is not None:
        tol = tol + 2.0 * solve_slack
    if np.any(err > tol):
        i, c = np.unravel_index(int(np.argmax(err - tol)), err.shape)
        raise EulerFEMError(
            f"antidiffusion row identity violated at node {i} component {c}: "
            f"|m_i(U^H - U^L) - sum_j A_ij| = {err[i, c]:.3e} > {tol[i, c]:.3e}"
        )
    return A


# ----------------------------------------------------------------------------
# scalar limiters (njit; shared by the vectorized pipeline and the tests)
# ----------------------------------------------------------------------------


@njit(cache=True)
def _density_fraction(rho_L, P_rho, rho_min, rho_max, eps_i):
    target = rho_L + P_rho
    if target < rho_min:
        l = abs(rho_min - rho_L) / (abs(P_rho) + eps_i)
    elif target > rho_max:
        l = abs(rho_max - rho_L) / (abs(P_rho) + eps_i)
    else:
        return 1.0
    return l if l < 1.0 else 1.0


@njit(cache=True)
def _quad_smallest_positive_root(a, b, c):
    """Smallest positive root of a t^2 + b t + c with c >= 0; 1.0 if none.

    Stable form q = -(b + sign(b) sqrt(disc))/2, roots q/a and c/q, so a tiny
    'a' cannot blow up the relevant root.
    """
    if c == 0.0:
        if b < 0.0:
            return 0.0
        if b == 0.0 and a < 0.0:
            return 0.0
        if b > 0.0 and a < 0.0:
            return -b / a
        return 1.0
    if a == 0.0:
        if b < 0.0:
            return -c / b
        return 1.0
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return 1.0
    sq = math.sqrt(disc)
    q = -0.5 * (b + sq) if b >= 0.0 else -0.5 * (b - sq)
    t0 = 1.0
    found = False
    if q != 0.0:
        r = q / a
        if r > 0.0 and (not found or r < t0):
            t0 = r
            found = True
        r = c / q
        if r > 0.0 and (not found or r < t0):
            t0 = r
            found = True
    if not found:
        return 1.0
    return t0


@njit(cache=True)
def _energy_fraction(eps_min, uL, P):
    """t0 for psi(U) = rho E - |m|^2/2 - eps_min rho along U^L + t P."""
    ncomp = uL.shape[0]
    d = ncomp - 2
    rho = uL[0]
    E = uL[ncomp - 1]
    m_sq = 0.0
    m_dot_P = 0.0
    P_sq = 0.0
    for a in range(d):
        m_sq += uL[1 + a] * uL[1 + a]
        m_dot_P += uL[1 + a] * P[1 + a]
        P_sq += P[1 + a] * P[1 + a]
    aa = P[0] * P[ncomp - 1] - 0.5 * P_sq
    bb = (E - eps_min) * P[0] - m_dot_P + rho * P[ncomp - 1]
    cc = rho * E - 0.5 * m_sq - eps_min * rho
    scale = abs(rho * E) + 0.5 * m_sq + abs(eps_min * rho) + 1e-300
    if cc < -1e-12 * scale:
        raise ValueError("internal-energy limiter precondition: psi(U^L) < 0")
    if cc < 0.0:
        cc = 0.0
    return _quad_smallest_positive_root(aa, bb, cc)


@njit(cache=True)
def _entropy_gap(t, uL, P, s_min, gamma, b_cov):
    """h(t) = rho*e(U^L + tP) - s_min * rho^gamma (1-b rho)^(1-gamma); -inf-like
    marker when the point leaves the domain (rho <= 0 or b rho >= 1)."""
    ncomp = uL.shape[0]
    d = ncomp - 2
    rho = uL[0] + t * P[0]
    if rho <= 0.0:
        return -1e300, False
    if b_cov > 0.0 and b_cov * rho >= 1.0:
        return -1e300, False
    m_sq = 0.0
    for a in range(d):
        mm = uL[1 + a] + t * P[1 + a]
        m_sq += mm * mm
    E = uL[ncomp - 1] + t * P[ncomp - 1]
    g = rho**gamma
    if b_cov > 0.0:
        g *= (1.0 - b_cov * rho) ** (1.0 - gamma)
    return E - 0.5 * m_sq / rho - s_min * g, True


@njit(cache=True)
def _entropy_gap_slope(t, uL, P, s_min, gamma, b_cov):
    ncomp = uL.shape[0]
    d = ncomp - 2
    rho = uL[0] + t * P[0]
    m_sq = 0.0
    m_dot_P = 0.0
    for a in range(d):
        mm = uL[1 + a] + t * P[1 + a]
        m_sq += mm * mm
        m_dot_P += mm * P[1 + a]
    dg = gamma * rho ** (gamma - 1.0)
    if b_cov > 0.0:
        cov = 1.0 - b_cov * rho
        dg = dg * cov ** (1.0 - gamma) + (gamma - 1.0) * b_cov * rho**gamma * cov**-gamma
    return (0.5 * m_sq / (rho * rho) - s_min * dg) * P[0] - m_dot_P / rho + P[ncomp - 1]


@njit(cache=True)
def _entropy_fraction(s_min, uL, P, gamma, b_cov):
    """Largest t0 in [0,1] with h >= 0 on [0,t0]; h concave, h(0) >= 0.

    Newton from the infeasible side with regula-falsi/bisection safeguards;
    the returned value is always on the feasible side of the bracket.
    """
    h0, ok0 = _entropy_gap(0.0, uL, P, s_min, gamma, b_cov)
    scale = abs(uL[uL.shape[0] - 1]) + abs(s_min) * uL[0] ** gamma + 1e-300
    if not ok0 or h0 < -1e-12 * scale:
        raise ValueError("specific-entropy limiter precondition: Psi(U^L) < 0")
    h1, ok1 = _entropy_gap(1.0, uL, P, s_min, gamma, b_cov)
    if ok1 and h1 >= 0.0:
        return 1.0
    if h0 <= 0.0:
        if _entropy_gap_slope(0.0, uL, P, s_min, gamma, b_cov) <= 0.0:
            return 0.0
        h0 = 0.0
    lo = 0.0
    hi = 1.0
    h_lo = h0
    h_hi = h1
    for _ in range(LINE_SEARCH_MAX_IT):
        if hi - lo <= LINE_SEARCH_TOL:
            break
        t_new = -1.0
        if h_hi > -1e299:  # hi inside the domain: Newton from the infeasible side
            slope = _entropy_gap_slope(hi, uL, P, s_min, gamma, b_cov)
            if slope < 0.0:
                t_new = hi - h_hi / slope
        if not (lo < t_new < hi):
            if h_hi > -1e299 and h_hi < h_lo:  # regula falsi
                t_new = lo - h_lo * (hi - lo) / (h_hi - h_lo)
            if not (lo < t_new < hi):
                t_new = 0.5 * (lo + hi)
        h_new, ok_new = _entropy_gap(t_new, uL, P, s_min, gamma, b_cov)
        if ok_new and h_new >= 0.0:
            lo = t_new
            h_lo = h_new
        else:
            hi = t_new
            h_hi = h_new
    return lo


# ----------------------------------------------------------------------------
# public scalar entry points
# ----------------------------------------------------------------------------


def limit_density(rho_min: float, rho_max: float, u_L: np.ndarray, P: np.ndarray) -> float:
    """Largest l with rho(U^L + l' P) in [rho_min, rho_max] for all l' in [0, l]."""
    u_L = np.asarray(u_L, dtype=float)
    P = np.asarray(P, dtype=float)
    rho_L = u_L[0]
    tol = PRECOND_TOL * max(rho_max, 1e-300)
    if rho_L < rho_min - tol or rho_L > rho_max + tol:
        raise EulerFEMError(f"density limiter precondition: rho^L = {rho_L} outside [{rho_min}, {rho_max}]")
    return _density_fraction(rho_L, P[0], rho_min, rho_max, DENSITY_EPS * rho_max)


def limit_internal_energy(eps_min: float, u_L: np.ndarray, P: np.ndarray, l_rho: float) -> float:
    """min(t0, l_rho) for the quadratic constraint rho^2 e >= eps_min rho."""
    t0 = _energy_fraction(float(eps_min), np.asarray(u_L, dtype=float), np.asarray(P, dtype=float))
    return min(t0, l_rho)


def limit_specific_entropy(
    surr_min: float, u_L: np.ndarray, P: np.ndarray, l_e: float, eos: EquationOfState
) -> float:
    """min(t0, l_e) for the concave constraint rho e >= surr_min g(rho)."""
    t0 = _entropy_fraction(
        float(surr_min), np.asarray(u_L, dtype=float), np.asarray(P, dtype=float), eos.gamma, eos.b
    )
    return min(t0, l_e)


# ----------------------------------------------------------------------------
# vectorized pipeline
# ----------------------------------------------------------------------------


def compute_Pij(graph: DiscreteGraph, A: np.ndarray, i: int | None = None) -> np.ndarray:
    """P_ij = A_ij / (m_i lambda_j) with lambda_j = 1/(card(I(Omega_i)) - 1)."""
    deg = graph.degrees()
    if np.any(deg < 2):
        raise EulerFEMError(f"isolated node {int(np.argmax(deg < 2))} (stencil of size 1)")
    factor = (deg - 1.0) / graph.mi
    if i is not None:
        sl = graph.row_slice(i)
        return A[sl] * factor[i]
    return A * factor[graph.rowidx][:, None]


@njit(cache=True)
def _directed_limiter_kernel(
    rowidx,
    col,
    UL,
    P,
    rho_min,
    rho_max,
    eps_min,
    surr_min,
    do_rho,
    do_energy,
    do_entropy,
    gamma,
    b_cov,
):
    nnz = rowidx.shape[0]
    out = np.ones(nnz)
    for k in range(nnz):
        i = rowidx[k]
        if col[k] == i:
            continue
        l = 1.0
        if do_rho:
            rmax = rho_max[i]
            rho_L = UL[i, 0]
            tol = 1e-12 * rmax
            if rho_L < rho_min[i] - tol or rho_L > rmax + tol:
                raise ValueError("density limiter precondition: rho^L outside bounds")
            l = _density_fraction(rho_L, P[k, 0], rho_min[i], rmax, 1e-14 * rmax)
        if do_energy and l > 0.0:
            t0 = _energy_fraction(eps_min[i], UL[i], P[k])
            if t0 < l:
                l = t0
        if do_entropy and l > 0.0:
            t0 = _entropy_fraction(surr_min[i], UL[i], P[k], gamma, b_cov)
            if t0 < l:
                l = t0
        out[k] = l
    return out


def directed_limiters(
    graph: DiscreteGraph,
    U_L: np.ndarray,
    P: np.ndarray,
    bounds: LimiterBounds,
    eos: EquationOfState,
    limiter_set: str = "all",
) -> np.ndarray:
    """Per directed edge, the cascade l^rho -> l^e -> l^s against relaxed bounds."""
    do_rho, do_energy, do_entropy = _limiter_flags(limiter_set)
    return _directed_limiter_kernel(
        graph.rowidx,
        graph.col,
        U_L,
        np.ascontiguousarray(P),
        bounds.rho_min_rel,
        bounds.rho_max_rel,
        bounds.eps_min_rel,
        bounds.surr_min_rel,
        do_rho,
        do_energy,
        do_entropy,
        eos.gamma,
        eos.b,
    )


def _limiter_flags(limiter_set: str):
    table = {
        "none": (False, False, False),
        "density": (True, False, False),
        "density+energy": (True, True, False),
        "density+entropy": (True, False, True),
        "all": (True, True, True),
    }
    if limiter_set not in table:
        raise ValueError(f"unknown limiter set {limiter_set!r}")
    return table[limiter_set]


def symmetrize(graph: DiscreteGraph, l_directed: np.ndarray) -> np.ndarray:
    """l_ij = min(l^i_j, l^j_i); diagonal entries are 1 (their A is zero)."""
    L = np.minimum(l_directed, l_directed[graph.tperm])
    L[graph.diag_pos] = 1.0
    return L


def apply_limited_update(graph: DiscreteGraph, U_L: np.ndarray, A: np.ndarray, L: np.ndarray) -> np.ndarray:
    """U = U^L + (1/m_i) sum_j l_ij A_ij; conservative for any symmetric L."""
    corr = np.add.reduceat(L[:, None] * A, graph.row_ptr[:-1], axis=0)
    return U_L + corr / graph.mi[:, None]


def check_limited_state(
    graph: DiscreteGraph,
    U: np.ndarray,
    bounds: LimiterBounds,
    eos: EquationOfState,
    limiter_set: str = "all",
) -> None:
    """Post-update verification of the active relaxed constraints + admissibility."""
    do_rho, do_energy, do_entropy = _limiter_flags(limiter_set)
    rho = physics.density(U)
    if do_rho:
        tol = 1e-12 * np.abs(bounds.rho_max_rel)
        bad = rho < bounds.rho_min_rel - tol
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EulerFEMError(f"node {i}: rho = {rho[i]} under relaxed minimum {bounds.rho_min_rel[i]}")
        bad = rho > bounds.rho_max_rel + tol
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EulerFEMError(f"node {i}: rho = {rho[i]} over relaxed maximum {bounds.rho_max_rel[i]}")
    if do_energy:
        rhoe = physics.internal_energy(U)
        scale = np.abs(physics.total_energy(U)) + np.abs(bounds.eps_min_rel)
        bad = rhoe < bounds.eps_min_rel - 1e-12 * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EulerFEMError(f"node {i}: rho*e = {rhoe[i]} under relaxed minimum {bounds.eps_min_rel[i]}")
    if do_entropy:
        rhoe = physics.internal_energy(U)
        g = rho**eos.gamma
        if eos.b > 0.0:
            g *= (1.0 - eos.b * rho) ** (1.0 - eos.gamma)
        gap = rhoe - bounds.surr_min_rel * g
        scale = np.abs(rhoe) + np.abs(bounds.surr_min_rel) * g
        bad = gap < -1e-12 * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EulerFEMError(f"node {i}: entropy surrogate under relaxed minimum (gap {gap[i]})")
    physics.check_admissible(U, eos, context="limited update")


def iterative_limiting(
    graph: DiscreteGraph,
    U_L: np.ndarray,
    A: np.ndarray,
    bounds: LimiterBounds,
    eos: EquationOfState,
    k_max: int = 1,
    limiter_set: str = "all",
) -> np.ndarray:
    """k_max passes of limit-and-apply; leftover antidiffusion is carried as
    A <- (1 - l) A.  Bounds stay fixed across passes."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if limiter_set == "none":
        return apply_limited_update(graph, U_L, A, np.ones(graph.nnz))
    U = U_L
    A_cur = A
    for _ in range(k_max):
        P = compute_Pij(graph, A_cur)
        l_dir = directed_limiters(graph, U, P, bounds, eos, limiter_set)
        L = symmetrize(graph, l_dir)
        U = apply_limited_update(graph, U, A_cur, L)
        A_cur = (1.0 - L)[:, None] * A_cur
    check_limited_state(graph, U, bounds, eos, limiter_set)
    return U


# ----------------------------------------------------------------------------
# bound relaxation
# ----------------------------------------------------------------------------


def _second_difference(graph: DiscreteGraph, g: np.ndarray) -> np.ndarray:
    """Delta^2 g_i = sum_{j != i} (g_i - g_j) = deg_i g_i - sum_j g_j."""
    rowsum = np.add.reduceat(g[graph.col], graph.row_ptr[:-1])
    return graph.degrees() * g - rowsum


def _relaxation_amount(graph: DiscreteGraph, g: np.ndarray, mode: str) -> np.ndarray:
    d2 = _second_difference(graph, g)
    deg = graph.degrees()
    if mode == "average":
        rowsum_d2 = np.add.reduceat(d2[graph.col], graph.row_ptr[:-1])
        return np.abs(((deg - 2.0) * d2 + rowsum_d2) / (4.0 * deg))
    if mode == "minmod":
        half = 0.5 * d2
        mn = np.minimum.reduceat(half[graph.col], graph.row_ptr[:-1])
        mx = np.maximum.reduceat(half[graph.col], graph.row_ptr[:-1])
        out = np.zeros_like(mn)
        out = np.where(mn > 0.0, mn, out)
        out = np.where(mx < 0.0, -mx, out)
        return out
    raise ValueError(f"unknown relaxation mode {mode!r}")


def relax_bounds(
    graph: DiscreteGraph, bounds: LimiterBounds, U: np.ndarray, mode: str = "average"
) -> LimiterBounds:
    """Second-difference relaxation of the density (and internal-energy) bounds.

    Minima: max(0.99 b, b - |Dbar^2|); maxima mirrored as min(1.01 b, b + |Dbar^2|).
    mode 'none' returns the bounds unchanged.
    """
    out = LimiterBounds.from_raw(
        bounds.rho_min, bounds.rho_max, bounds.E_min, bounds.E_max, bounds.eps_min, bounds.surr_min
    )
    out.surr_min_rel = bounds.surr_min_rel.copy()
    if mode == "none":
        return out
    amount_rho = _relaxation_amount(graph, physics.density(U), mode)
    out.rho_min_rel = np.maximum(0.99 * bounds.rho_min, bounds.rho_min - amount_rho)
    out.rho_max_rel = np.minimum(1.01 * bounds.rho_max, bounds.rho_max + amount_rho)
    amount_eps = _relaxation_amount(graph, physics.internal_energy(U), mode)
    out.eps_min_rel = np.maximum(0.99 * bounds.eps_min, bounds.eps_min - amount_eps)
    return out


def relax_entropy_bound(
    graph: DiscreteGraph, surrogate_min: np.ndarray, U: np.ndarray, eos: EquationOfState
) -> np.ndarray:
    """max(0.99 b, b - max_j (surrogate(midpoint_ij) - b)), midpoints by P1
    interpolation of the conservative variables.  The probe is clamped at 0
    so rounding on constant fields can never tighten the bound."""
    U_mid = 0.5 * (U[graph.rowidx] + U[graph.col])
    s_mid = physics.entropy_surrogate(U_mid, eos)
    s_mid[graph.diag_pos] = -np.inf
    delta = np.maximum.reduceat(s_mid, graph.row_ptr[:-1]) - surrogate_min
    delta = np.maximum(delta, 0.0)
    return np.maximum(0.99 * surrogate_min, surrogate_min - delta)
