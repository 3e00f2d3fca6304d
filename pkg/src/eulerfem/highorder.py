"""Provisional high-order update: smoothness / entropy-commutator viscosities
and the consistent-mass (or lumped) forward-Euler step.

The high-order state is *not* admissible by construction; the limiter module
turns it into one.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import physics
from .errors import EulerFEMError
from .graph import DiscreteGraph
from .physics import EquationOfState

INDICATOR_EPS = 1e-8  # floor coefficient for both smoothness and commutator


def smoothness_indicator(graph: DiscreteGraph, g: np.ndarray) -> np.ndarray:
    """alpha_i = |sum_j (G_j - G_i)| / max(sum_j |G_j - G_i|, eps_i) in [0, 1].

    beta_ij = 1; eps_i = 1e-8 * max_j |G_j| over the stencil.
    """
    gj = g[graph.col]
    diff = gj - g[graph.rowidx]
    num = np.abs(np.add.reduceat(diff, graph.row_ptr[:-1]))
    den = np.add.reduceat(np.abs(diff), graph.row_ptr[:-1])
    eps = INDICATOR_EPS * np.maximum.reduceat(np.abs(gj), graph.row_ptr[:-1])
    floor = np.maximum(den, eps)
    alpha = np.divide(num, floor, out=np.zeros_like(num), where=floor > 0.0)
    return np.minimum(alpha, 1.0)


def high_viscosity_smooth(
    graph: DiscreteGraph, d_low: np.ndarray, alpha: np.ndarray, psi_exponent: int = 4
) -> np.ndarray:
    """d^H_ij = d^L_ij * max(alpha_i, alpha_j)^q with q in {2, 4}."""
    if psi_exponent not in (2, 4):
        raise ValueError(f"psi exponent must be 2 or 4, got {psi_exponent}")
    psi = alpha**psi_exponent
    dh = d_low * np.maximum(psi[graph.rowidx], psi[graph.col])
    _reset_diag(graph, dh)
    return dh


def entropy_commutator(graph: DiscreteGraph, U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """Nondimensional entropy residual R_i with the pair (p^{1/gamma}, v p^{1/gamma}).

    R_i = [sum_j (F(U_j) - eta'(U_i)^T f(U_j)) . c_ij] / max(eta_max - eta_min, eps_i).
    """
    physics.check_admissible(U, eos, context="entropy_commutator input")
    eta, q, deta = physics.ev_entropy(U, eos)
    F = physics.flux(U, eos)
    # sum_j q_j . c_ij  and  sum_j f(U_j x) . c_ij, both rows at once
    qc = np.einsum("ka,ka->k", q[graph.col], graph.cij)
    ent_div = np.add.reduceat(qc, graph.row_ptr[:-1])
    fc = np.einsum("kca,ka->kc", F[graph.col], graph.cij)
    flux_div = np.add.reduceat(fc, graph.row_ptr[:-1], axis=0)
    num = ent_div - np.einsum("ic,ic->i", deta, flux_div)

    eta_j = eta[graph.col]
    eta_max = np.maximum.reduceat(eta_j, graph.row_ptr[:-1])
    eta_min = np.minimum.reduceat(eta_j, graph.row_ptr[:-1])
    eps = INDICATOR_EPS * np.maximum(np.abs(eta_max), np.abs(eta_min))
    den = np.maximum(eta_max - eta_min, eps)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)


def high_viscosity_ev(graph: DiscreteGraph, d_low: np.ndarray, R: np.ndarray) -> np.ndarray:
    """d^H_ij = min(d^L_ij, max(|R_i|, |R_j|))."""
    aR = np.abs(R)
    dh = np.minimum(d_low, np.maximum(aR[graph.rowidx], aR[graph.col]))
    _reset_diag(graph, dh)
    return dh


def _reset_diag(graph: DiscreteGraph, d: np.ndarray) -> None:
    d[graph.diag_pos] = 0.0
    rowsum = np.add.reduceat(d, graph.row_ptr[:-1])
    d[graph.diag_pos] = -rowsum


@njit(cache=True)
def _residual_kernel(row_ptr, col, cij, dvisc, flux, U):
    """acc_i = sum_j f(U_j).c_ij - d_ij (U_j - U_i), one row per node."""
    n, ncomp = U.shape
    d = cij.shape[1]
    out = np.empty((n, ncomp))
    for i in range(n):
        for c in range(ncomp):
            acc = 0.0
            for k in range(row_ptr[i], row_ptr[i + 1]):
                j = col[k]
                fc = 0.0
                for a in range(d):
                    fc += flux[j, c, a] * cij[k, a]
                acc += fc - dvisc[k] * (U[j, c] - U[i, c])
            out[i, c] = acc
    return out


def solve_consistent_mass(graph: DiscreteGraph, B: np.ndarray, rtol: float = 1e-12, maxiter: int = 200):
    """Solve M X = B for the consistent mass matrix; returns (X, residual_norms).

    2D uses lumped-mass-preconditioned CG (the mass matrix is SPD and
    spectrally close to its lumped diagonal).  1D uses a cached sparse LU of
    the (almost) tridiagonal matrix.  Both paths verify
    ||M x - b|| <= rtol ||b|| per component before returning.
    """
    M = graph.mass_matrix()
    bnorm = np.linalg.norm(B, axis=0)
    if graph.dim == 1:
        if "mass_lu" not in graph._cache:
            from scipy.sparse.linalg import splu

            graph._cache["mass_lu"] = splu(M.tocsc())
        X = graph._cache["mass_lu"].solve(B)
    else:
        X = _cg_mass(graph, M, B, rtol, maxiter)
    res = np.linalg.norm(B - M @ X, axis=0)
    if np.any(res > rtol * np.maximum(bnorm, 1e-300)):
        raise EulerFEMError(
            f"consistent-mass solve residual {res} exceeds {rtol} * {bnorm}"
        )
    return X, res


def _cg_mass(graph: DiscreteGraph, M, B: np.ndarray, rtol: float, maxiter: int) -> np.ndarray:
    minv = 1.0 / graph.mi[:, None]
    bnorm = np.linalg.norm(B, axis=0)
    target = rtol * np.maximum(bnorm, 1e-300)
    X = B * minv
    R = B - M @ X
    Z = R * minv
    P = Z.copy()
    rz = np.einsum("ic,ic->c", R, Z)
    for _ in range(maxiter):
        if np.all(np.linalg.norm(R, axis=0) <= target):
            return X
        MP = M @ P
        pMp = np.einsum("ic,ic->c", P, MP)
        alpha = np.where(pMp > 0.0, rz / np.where(pMp > 0.0, pMp, 1.0), 0.0)
        X += alpha * P
        R -= alpha * MP
        Z = R * minv
        rz_new = np.einsum("ic,ic->c", R, Z)
        beta = np.where(rz > 0.0, rz_new / np.where(rz > 0.0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
    res = np.linalg.norm(B - M @ X, axis=0)
    if np.any(res > target):
        raise EulerFEMError(
            f"mass CG did not converge in {maxiter} iterations; residuals {res}, targets {target}"
        )
    return X


def high_order_update(
    graph: DiscreteGraph,
    U: np.ndarray,
    d_high: np.ndarray,
    dt: float,
    eos: EquationOfState,
    mass_mode: str = "consistent",
    return_info: bool = False,
):
    """Forward-Euler step with viscosity d_high.

    'consistent' solves sum_j m_ij (U^H_j - U_j)/dt = -residual_i;
    'lumped' replaces m_ij by m_i delta_ij (diagnostic: with d_high = d_low
    it reproduces the low-order update).  The result is in general not
    admissible; that is the limiter's job.
    """
    F = np.ascontiguousarray(physics.flux(U, eos))
    acc = _residual_kernel(graph.row_ptr, graph.col, graph.cij, d_high, F, U)
    if mass_mode == "lumped":
        UH = U - (dt / graph.mi)[:, None] * acc
        res = np.zeros(U.shape[1])
    elif mass_mode == "consistent":
        dU, res = solve_consistent_mass(graph, -dt * acc)
        UH = U + dU
    else:
        raise ValueError(f"mass_mode must be 'lumped' or 'consistent', got {mass_mode!r}")
    if return_info:
        return UH, res
    return UH


def galerkin_update(
    graph: DiscreteGraph,
    U: np.ndarray,
    dt: float,
    eos: EquationOfState,
    mass_mode: str = "consistent",
):
    """Inviscid Galerkin step (d_high = 0)."""
    return high_order_update(graph, U, np.zeros(graph.nnz), dt, eos, mass_mode=mass_mode)
