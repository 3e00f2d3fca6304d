"""Gas-dynamics closures for the gamma-law / covolume equation of state.

Conservative states are stored as float arrays of shape (..., d+2) laid out
as [rho, m_1, ..., m_d, E].  All functions broadcast over leading axes, so a
single state (d+2,) and a nodal field (n, d+2) go through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleStateError

GAMMA_MAX = 5.0 / 3.0


@dataclass(frozen=True)
class EquationOfState:
    """Covolume gas p(1 - b*rho) = (gamma - 1)*e*rho; b = 0 is the ideal gas.

    The two-rarefaction wave-speed bound requires 1 < gamma <= 5/3, so the
    constructor enforces it.
    """

    gamma: float
    b: float = 0.0
    s0: float = 0.0

    def __post_init__(self):
        if not 1.0 < self.gamma <= GAMMA_MAX + 1e-12:
            raise ValueError(f"gamma must lie in (1, 5/3], got {self.gamma}")
        if self.b < 0.0:
            raise ValueError(f"covolume must be nonnegative, got {self.b}")


def dim_of(U: np.ndarray) -> int:
    return U.shape[-1] - 2


def density(U: np.ndarray) -> np.ndarray:
    return U[..., 0]


def momentum(U: np.ndarray) -> np.ndarray:
    return U[..., 1:-1]


def total_energy(U: np.ndarray) -> np.ndarray:
    return U[..., -1]


def velocity(U: np.ndarray) -> np.ndarray:
    return momentum(U) / density(U)[..., None]


def kinetic_energy(U: np.ndarray) -> np.ndarray:
    m = momentum(U)
    return 0.5 * np.einsum("...k,...k->...", m, m) / density(U)


def internal_energy(U: np.ndarray) -> np.ndarray:
    """rho*e = E - |m|^2/(2 rho); raises if any density is nonpositive."""
    rho = density(U)
    if np.any(rho <= 0.0):
        node = int(np.argmax(np.atleast_1d(rho <= 0.0)))
        raise InadmissibleStateError(f"rho <= 0 at node {node}", node=node)
    return total_energy(U) - kinetic_energy(U)


def specific_internal_energy(U: np.ndarray) -> np.ndarray:
    return internal_energy(U) / density(U)


def is_admissible(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """Elementwise membership in the admissible set (no exceptions)."""
    rho = density(U)
    ok = rho > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rhoe = total_energy(U) - 0.5 * np.einsum("...k,...k->...", momentum(U), momentum(U)) / rho
    ok = ok & (rhoe > 0.0)
    if eos.b > 0.0:
        ok = ok & (eos.b * rho < 1.0)
    return ok


def check_admissible(U: np.ndarray, eos: EquationOfState, context: str = "") -> None:
    ok = np.atleast_1d(is_admissible(U, eos))
    if not ok.all():
        node = int(np.argmax(~ok))
        where = f" ({context})" if context else ""
        raise InadmissibleStateError(f"inadmissible state at node {node}{where}", node=node)


def pressure(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """p = (gamma-1) * rho*e / (1 - b*rho)."""
    rhoe = internal_energy(U)
    cov = 1.0 - eos.b * density(U)
    if np.any(cov <= 0.0):
        raise InadmissibleStateError("covolume limit b*rho >= 1 reached")
    return (eos.gamma - 1.0) * rhoe / cov


def sound_speed(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """c = sqrt(gamma p / (rho (1 - b rho)))."""
    p = pressure(U, eos)
    if np.any(p <= 0.0):
        raise InadmissibleStateError("nonpositive pressure")
    rho = density(U)
    return np.sqrt(eos.gamma * p / (rho * (1.0 - eos.b * rho)))


def flux(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """Euler flux f(u) = (m, v ⊗ m + p I, v(E+p)), shape (..., d+2, d)."""
    d = dim_of(U)
    p = pressure(U, eos)
    m = momentum(U)
    v = velocity(U)
    out = np.empty(U.shape[:-1] + (d + 2, d), dtype=U.dtype)
    out[..., 0, :] = m
    out[..., 1 : 1 + d, :] = v[..., :, None] * m[..., None, :]
    for k in range(d):
        out[..., 1 + k, k] += p
    out[..., d + 1, :] = v * (total_energy(U) + p)[..., None]
    return out


def entropy_surrogate(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """exp((gamma-1)(s - s0)) = rho*e (1-b rho)^{gamma-1} / rho^gamma."""
    rho = density(U)
    rhoe = internal_energy(U)
    out = rhoe * rho ** (-eos.gamma)
    if eos.b > 0.0:
        out = out * (1.0 - eos.b * rho) ** (eos.gamma - 1.0)
    return out


def specific_entropy(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """Phi(u) = s(rho, e(u)); polytropic form s - s0 = log(e^{1/(gamma-1)}/rho)."""
    surr = entropy_surrogate(U, eos)
    if np.any(surr <= 0.0):
        raise InadmissibleStateError("nonpositive internal energy in entropy")
    return eos.s0 + np.log(surr) / (eos.gamma - 1.0)


def mathematical_entropy(U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """S(u) = rho * Phi(u), the smoothness-sensor default."""
    return density(U) * specific_entropy(U, eos)


def ev_entropy(U: np.ndarray, eos: EquationOfState):
    """Entropy pair (eta, q) = (p^{1/gamma}, v p^{1/gamma}) and grad eta.

    Polytropic-only (b must be 0): p^{1/gamma} is a generalized entropy for
    the gamma-law gas but not for the covolume one.
    Returns (eta, q, deta) with shapes (...,), (..., d), (..., d+2).
    """
    if eos.b != 0.0:
        raise ValueError("p^(1/gamma) entropy requires b = 0")
    d = dim_of(U)
    p = pressure(U, eos)
    eta = p ** (1.0 / eos.gamma)
    v = velocity(U)
    q = v * eta[..., None]
    # d eta = (1/gamma) p^{1/gamma - 1} * dp, dp = (gamma-1)(|v|^2/2, -v, 1)
    coef = (eta / p) * ((eos.gamma - 1.0) / eos.gamma)
    deta = np.empty_like(U)
    deta[..., 0] = coef * 0.5 * np.einsum("...k,...k->...", v, v)
    deta[..., 1:-1] = -coef[..., None] * v
    deta[..., -1] = coef
    return eta, q, deta


def primitive_to_conserved(rho, v, p, eos: EquationOfState) -> np.ndarray:
    """(rho, v, p) -> (rho, m, E); v has shape (..., d)."""
    rho = np.asarray(rho, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape[-1:] == () or v.ndim == rho.ndim:
        v = v[..., None]
    p = np.asarray(p, dtype=float)
    rhoe = p * (1.0 - eos.b * rho) / (eos.gamma - 1.0)
    E = rhoe + 0.5 * rho * np.einsum("...k,...k->...", v, v)
    out = np.empty(rho.shape + (v.shape[-1] + 2,), dtype=float)
    out[..., 0] = rho
    out[..., 1:-1] = rho[..., None] * v
    out[..., -1] = E
    return out


def conserved_to_primitive(U: np.ndarray, eos: EquationOfState):
    return density(U), velocity(U), pressure(U, eos)
