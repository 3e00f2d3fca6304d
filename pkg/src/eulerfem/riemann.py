"""Riemann wave-speed machinery.

Two layers live here:

* the guaranteed upper bound on the maximum wave speed built from the
  two-rarefaction star-pressure estimate (valid for 1 < gamma <= 5/3, and
  for the covolume gas through the (1 - b*rho) factors) -- this is what the
  scheme uses, compiled with numba so the graph kernels can call it per edge;
* an exact Riemann solver for the ideal gas (b = 0), used purely as a test
  oracle and by the `riemann` CLI subcommand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EulerFEMError, InadmissibleStateError
from .physics import EquationOfState

__all__ = [
    "ProjectedState1D",
    "project_to_normal",
    "two_rarefaction_pressure",
    "max_wave_speed",
    "wave_speed_core",
    "exact_riemann_solve",
    "exact_star_state",
    "exact_fan_speeds",
]


@dataclass(frozen=True)
class ProjectedState1D:
    """1D-reduced state (rho, m_n, E_red) seen along a unit normal."""

    rho: float
    m_n: float
    E_red: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.m_n, self.E_red])


def project_to_normal(u: np.ndarray, n: np.ndarray) -> ProjectedState1D:
    """Reduce u to the 1D Riemann data along n: m_n = m.n, E_red = E - |m_perp|^2/(2 rho).

    The specific internal energy (hence the pressure) of the projected state
    equals that of u.
    """
    u = np.asarray(u, dtype=float)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if abs(np.dot(n, n) - 1.0) > 1e-12:
        raise ValueError(f"normal must be unit length, got |n| = {np.linalg.norm(n)}")
    rho = u[0]
    m = u[1:-1]
    E = u[-1]
    if rho <= 0.0:
        raise InadmissibleStateError("rho <= 0 in projection")
    m_n = float(np.dot(m, n))
    m_perp_sq = float(np.dot(m, m)) - m_n * m_n
    return ProjectedState1D(rho=float(rho), m_n=m_n, E_red=float(E) - 0.5 * m_perp_sq / rho)


@njit(cache=True)
def _ipow(x, n):
    r = 1.0
    while n:
        if n & 1:
            r *= x
        x *= x
        n >>= 1
    return r


@njit(cache=True)
def tr_exponent_as_int(gamma):
    """2 gamma/(gamma-1) as an integer when it is one (7 for 1.4, 5 for 5/3), else 0."""
    e = 2.0 * gamma / (gamma - 1.0)
    n = int(round(e))
    if n >= 1 and abs(e - n) < 1e-9:
        return n
    return 0


@njit(cache=True)
def wave_speed_star(v_l, c_l, p_l, cb_l, pw_l, v_r, c_r, p_r, cb_r, pw_r, gamma, ip):
    """Core of the guaranteed bound, with precomputable per-state factors.

    cb = c (1 - b rho); pw = p^(-(gamma-1)/(2 gamma)); ip = integer value of
    2 gamma/(gamma-1) or 0 for the generic power.  Returns
    (p_tilde, lambda_1^-, lambda_3^+, lambda_max) with z_+ = max(z, 0),
    lambda_max = max((lambda_1)_-, (lambda_3)_+).  A nonpositive numerator
    (near-vacuum data) clamps p_tilde to 0.
    """
    num = cb_l + cb_r - 0.5 * (gamma - 1.0) * (v_r - v_l)
    if num <= 0.0:
        p_tilde = 0.0
    else:
        r = num / (cb_l * pw_l + cb_r * pw_r)
        p_tilde = _ipow(r, ip) if ip > 0 else r ** (2.0 * gamma / (gamma - 1.0))
    k = 0.5 * (gamma + 1.0) / gamma
    z_l = (p_tilde - p_l) / p_l
    if z_l < 0.0:
        z_l = 0.0
    lam1 = v_l - c_l * math.sqrt(1.0 + k * z_l)
    z_r = (p_tilde - p_r) / p_r
    if z_r < 0.0:
        z_r = 0.0
    lam3 = v_r + c_r * math.sqrt(1.0 + k * z_r)
    neg = -lam1 if lam1 < 0.0 else 0.0
    pos = lam3 if lam3 > 0.0 else 0.0
    lam_max = neg if neg > pos else pos
    return p_tilde, lam1, lam3, lam_max


@njit(cache=True)
def wave_speed_core(rho_l, v_l, p_l, rho_r, v_r, p_r, gamma, b):
    """(p_tilde, lambda_1^-, lambda_3^+, lambda_max) from primitive 1D data."""
    cov_l = 1.0 - b * rho_l
    cov_r = 1.0 - b * rho_r
    c_l = math.sqrt(gamma * p_l / (rho_l * cov_l))
    c_r = math.sqrt(gamma * p_r / (rho_r * cov_r))
    expo = 0.5 * (gamma - 1.0) / gamma
    return wave_speed_star(
        v_l,
        c_l,
        p_l,
        c_l * cov_l,
        p_l**-expo,
        v_r,
        c_r,
        p_r,
        c_r * cov_r,
        p_r**-expo,
        gamma,
        tr_exponent_as_int(gamma),
    )


def _primitive_1d(w, eos: EquationOfState):
    if isinstance(w, ProjectedState1D):
        rho, m, E = w.rho, w.m_n, w.E_red
    else:
        w = np.asarray(w, dtype=float)
        rho, m, E = float(w[0]), float(w[1]), float(w[2])
    if rho <= 0.0:
        raise InadmissibleStateError("rho <= 0")
    rhoe = E - 0.5 * m * m / rho
    if rhoe <= 0.0:
        raise InadmissibleStateError("rho*e <= 0")
    if eos.b * rho >= 1.0:
        raise InadmissibleStateError("b*rho >= 1")
    p = (eos.gamma - 1.0) * rhoe / (1.0 - eos.b * rho)
    return rho, m / rho, p


def two_rarefaction_pressure(wL, wR, eos: EquationOfState) -> float:
    """Closed-form upper bound p_tilde >= p_star for 1 < gamma <= 5/3."""
    rho_l, v_l, p_l = _primitive_1d(wL, eos)
    rho_r, v_r, p_r = _primitive_1d(wR, eos)
    p_tilde, _, _, _ = wave_speed_core(rho_l, v_l, p_l, rho_r, v_r, p_r, eos.gamma, eos.b)
    return p_tilde


def max_wave_speed(n, uL, uR, eos: EquationOfState) -> float:
    """Guaranteed upper bound on the maximum wave speed of the projected Riemann problem."""
    wL = project_to_normal(np.asarray(uL, dtype=float), n)
    wR = project_to_normal(np.asarray(uR, dtype=float), n)
    rho_l, v_l, p_l = _primitive_1d(wL, eos)
    rho_r, v_r, p_r = _primitive_1d(wR, eos)
    _, _, _, lam = wave_speed_core(rho_l, v_l, p_l, rho_r, v_r, p_r, eos.gamma, eos.b)
    return lam


# ----------------------------------------------------------------------------
# Exact solver (oracle; ideal gas only)
# ----------------------------------------------------------------------------


class VacuumError(EulerFEMError):
    """The Riemann data generate a vacuum region."""


def _pressure_fn(p, rho_k, p_k, c_k, gamma):
    """Toro's f_K(p) and its derivative (shock branch p > p_k, rarefaction otherwise)."""
    if p > p_k:
        a_k = 2.0 / ((gamma + 1.0) * rho_k)
        b_k = (gamma - 1.0) / (gamma + 1.0) * p_k
        root = math.sqrt(a_k / (p + b_k))
        f = (p - p_k) * root
        df = root * (1.0 - 0.5 * (p - p_k) / (p + b_k))
    else:
        f = 2.0 * c_k / (gamma - 1.0) * ((p / p_k) ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
        df = (p / p_k) ** (-(gamma + 1.0) / (2.0 * gamma)) / (rho_k * c_k)
    return f, df


def exact_star_state(wL, wR, eos: EquationOfState, tol: float = 1e-13, max_iter: int = 100):
    """Exact (p*, v*) via safeguarded Newton on the pressure function.

    The Newton iterate is projected back into a maintained bracket, so the
    iteration cannot escape; tol is relative on p*.
    """
    if eos.b != 0.0:
        raise ValueError("exact solver supports b = 0 only")
    g = eos.gamma
    rho_l, v_l, p_l = _primitive_1d(wL, eos)
    rho_r, v_r, p_r = _primitive_1d(wR, eos)
    c_l = math.sqrt(g * p_l / rho_l)
    c_r = math.sqrt(g * p_r / rho_r)
    dv = v_r - v_l
    if 2.0 * (c_l + c_r) / (g - 1.0) <= dv:
        raise VacuumError("vacuum formation: 2(c_l+c_r)/(gamma-1) <= v_r - v_l")

    def phi(p):
        f_l, df_l = _pressure_fn(p, rho_l, p_l, c_l, g)
        f_r, df_r = _pressure_fn(p, rho_r, p_r, c_r, g)
        return f_l + f_r + dv, df_l + df_r

    # bracket: phi is increasing; phi(0+) = -2(c_l+c_r)/(g-1) + dv < 0
    lo = 0.0
    hi = max(p_l, p_r)
    while phi(hi)[0] < 0.0:
        lo = hi
        hi *= 10.0
        if hi > 1e300:
            raise EulerFEMError("failed to bracket p*")
    # two-rarefaction guess, clipped into the bracket
    p = two_rarefaction_pressure(wL, wR, eos)
    p = min(max(p, lo + 1e-300), hi)
    for _ in range(max_iter):
        val, dval = phi(p)
        if val > 0.0:
            hi = p
        else:
            lo = p
        step_ok = dval > 0.0
        p_new = p - val / dval if step_ok else 0.5 * (lo + hi)
        if not (lo < p_new < hi):
            p_new = 0.5 * (lo + hi)
        if abs(p_new - p) <= tol * max(p_new, 1e-300):
            p = p_new
            break
        p = p_new
    f_l, _ = _pressure_fn(p, rho_l, p_l, c_l, g)
    f_r, _ = _pressure_fn(p, rho_r, p_r, c_r, g)
    v_star = 0.5 * (v_l + v_r) + 0.5 * (f_r - f_l)
    return p, v_star


def exact_fan_speeds(wL, wR, eos: EquationOfState):
    """Leftmost/rightmost signal speeds (lambda_1, lambda_3) of the exact solution."""
    g = eos.gamma
    rho_l, v_l, p_l = _primitive_1d(wL, eos)
    rho_r, v_r, p_r = _primitive_1d(wR, eos)
    c_l = math.sqrt(g * p_l / rho_l)
    c_r = math.sqrt(g * p_r / rho_r)
    p_star, _ = exact_star_state(wL, wR, eos)
    if p_star > p_l:  # left shock
        lam1 = v_l - c_l * math.sqrt((g + 1.0) / (2.0 * g) * p_star / p_l + (g - 1.0) / (2.0 * g))
    else:  # left rarefaction head
        lam1 = v_l - c_l
    if p_star > p_r:  # right shock
        lam3 = v_r + c_r * math.sqrt((g + 1.0) / (2.0 * g) * p_star / p_r + (g - 1.0) / (2.0 * g))
    else:
        lam3 = v_r + c_r
    return lam1, lam3


def exact_riemann_solve(wL, wR, eos: EquationOfState, xi: float):
    """Sample the self-similar exact solution at xi = x/t; returns (rho, v, p)."""
    g = eos.gamma
    rho_l, v_l, p_l = _primitive_1d(wL, eos)
    rho_r, v_r, p_r = _primitive_1d(wR, eos)
    c_l = math.sqrt(g * p_l / rho_l)
    c_r = math.sqrt(g * p_r / rho_r)
    p_star, v_star = exact_star_state(wL, wR, eos)
    gm1, gp1 = g - 1.0, g + 1.0

    if xi <= v_star:  # left of the contact
        if p_star > p_l:  # left shock
            s_l = v_l - c_l * math.sqrt(gp1 / (2 * g) * p_star / p_l + gm1 / (2 * g))
            if xi <= s_l:
                return rho_l, v_l, p_l
            rho = rho_l * (p_star / p_l + gm1 / gp1) / (gm1 / gp1 * p_star / p_l + 1.0)
            return rho, v_star, p_star
        head = v_l - c_l
        c_star = c_l * (p_star / p_l) ** (gm1 / (2 * g))
        tail = v_star - c_star
        if xi <= head:
            return rho_l, v_l, p_l
        if xi >= tail:
            rho = rho_l * (p_star / p_l) ** (1.0 / g)
            return rho, v_star, p_star
        frac = 2.0 / gp1 + gm1 / (gp1 * c_l) * (v_l - xi)
        rho = rho_l * frac ** (2.0 / gm1)
        v = 2.0 / gp1 * (c_l + 0.5 * gm1 * v_l + xi)
        p = p_l * frac ** (2.0 * g / gm1)
        return rho, v, p

    if p_star > p_r:  # right shock
        s_r = v_r + c_r * math.sqrt(gp1 / (2 * g) * p_star / p_r + gm1 / (2 * g))
        if xi >= s_r:
            return rho_r, v_r, p_r
        rho = rho_r * (p_star / p_r + gm1 / gp1) / (gm1 / gp1 * p_star / p_r + 1.0)
        return rho, v_star, p_star
    head = v_r + c_r
    c_star = c_r * (p_star / p_r) ** (gm1 / (2 * g))
    tail = v_star + c_star
    if xi >= head:
        return rho_r, v_r, p_r
    if xi <= tail:
        rho = rho_r * (p_star / p_r) ** (1.0 / g)
        return rho, v_star, p_star
    frac = 2.0 / gp1 - gm1 / (gp1 * c_r) * (v_r - xi)
    rho = rho_r * frac ** (2.0 / gm1)
    v = 2.0 / gp1 * (-c_r + 0.5 * gm1 * v_r + xi)
    p = p_r * frac ** (2.0 * g / gm1)
    return rho, v, p
