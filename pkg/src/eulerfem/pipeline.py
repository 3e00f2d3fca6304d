"""Fused per-stage kernels for the production time loop.

The module-level operations in loworder/highorder/limiter are the reference
implementations the tests pin down; running them back to back spends most of
the wall time in interpreter glue on desk-size meshes.  This module chains
the same formulas (and the same njit scalar helpers) into a handful of
pair-sweep kernels per forward-Euler stage; test_pipeline asserts the two
paths agree on random fields.

Everything is single-threaded with fixed traversal order, so results are
bit-reproducible run to run.  Transcendental work (p^x, rho^gamma) is pulled
out of the kernels into vectorized numpy precomputations wherever the
formulas allow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CFLViolationError, EulerFEMError
from .graph import DiscreteGraph
from .highorder import INDICATOR_EPS, smoothness_indicator, solve_consistent_mass
from .limiter import _density_fraction, _energy_fraction, _entropy_fraction
from .loworder import LimiterBounds, _pair_wave_speeds, pair_wave_speed_inputs
from .physics import EquationOfState
from .riemann import tr_exponent_as_int

VISC_LOW, VISC_EV, VISC_SMOOTH, VISC_GALERKIN = 0, 1, 2, 3
FAST = dict(cache=True, fastmath=True)


@dataclass(frozen=True)
class StageOptions:
    """Scheme switches for one forward-Euler stage (mirrors SolverConfig)."""

    viscosity: int = VISC_EV
    psi_exponent: int = 4
    smoothness_field: str = "entropy"
    limiters: str = "density+entropy"
    relaxation: str = "average"
    relax_entropy: bool = True
    k_max: int = 1
    mass_consistent: bool = True


# ----------------------------------------------------------------------------
# node-level precomputation
# ----------------------------------------------------------------------------


@njit(**FAST)
def _node_core(U, gamma, b):
    """Velocity, pressure, rho*e and the flux tensor (transcendental-free)."""
    n, ncomp = U.shape
    d = ncomp - 2
    vel = np.empty((n, d))
    p = np.empty(n)
    rhoe = np.empty(n)
    F = np.empty((n, ncomp, d))
    ok = True
    for i in range(n):
        rho = U[i, 0]
        if rho <= 0.0:
            ok = False
            continue
        E = U[i, ncomp - 1]
        ke = 0.0
        for a in range(d):
            v = U[i, 1 + a] / rho
            vel[i, a] = v
            ke += U[i, 1 + a] * v
        re = E - 0.5 * ke
        rhoe[i] = re
        pi = (gamma - 1.0) * re / (1.0 - b * rho)
        p[i] = pi
        for a in range(d):
            F[i, 0, a] = U[i, 1 + a]
            for k in range(d):
                F[i, 1 + k, a] = vel[i, a] * U[i, 1 + k]
            F[i, 1 + a, a] += pi
            F[i, ncomp - 1, a] = vel[i, a] * (E + pi)
    return vel, p, rhoe, F, ok


@njit(**FAST)
def _node_ev(vel, p, eta, gamma):
    n, d = vel.shape
    qeta = np.empty((n, d))
    deta = np.empty((n, d + 2))
    for i in range(n):
        coef = (eta[i] / p[i]) * ((gamma - 1.0) / gamma)
        vsq = 0.0
        for a in range(d):
            qeta[i, a] = vel[i, a] * eta[i]
            vsq += vel[i, a] * vel[i, a]
            deta[i, 1 + a] = -coef * vel[i, a]
        deta[i, 0] = coef * 0.5 * vsq
        deta[i, d + 1] = coef
    return qeta, deta


class NodeFields:
    """Per-node quantities shared by the stage kernels."""

    __slots__ = ("rho", "vel", "p", "rhoe", "F", "c", "cb", "pw", "surr", "eta", "qeta", "deta")

    def __init__(self, U, eos: EquationOfState, need_ev: bool, need_surr: bool):
        gamma, b = eos.gamma, eos.b
        vel, p, rhoe, F, ok = _node_core(U, gamma, b)
        rho = np.ascontiguousarray(U[:, 0])
        if not ok or np.any(rhoe <= 0.0) or (b > 0.0 and np.any(b * rho >= 1.0)):
            bad = (rho <= 0.0) | (rhoe <= 0.0)
            if b > 0.0:
                bad |= b * rho >= 1.0
            raise EulerFEMError(f"inadmissible state entering stage at node {int(np.argmax(bad))}")
        self.rho = rho
        self.vel = vel
        self.p = p
        self.rhoe = rhoe
        self.F = F
        cov = 1.0 - b * rho
        self.c = np.sqrt(gamma * p / (rho * cov))
        self.cb = self.c * cov
        self.pw = p ** (-0.5 * (gamma - 1.0) / gamma)
        if need_surr:
            self.surr = rhoe * rho**-gamma
            if b > 0.0:
                self.surr = self.surr * cov ** (gamma - 1.0)
        else:
            self.surr = rhoe
        if need_ev:
            eta = p ** (1.0 / gamma)
            self.eta = eta
            self.qeta, self.deta = _node_ev(vel, p, eta, gamma)
        else:
            self.eta = np.zeros(U.shape[0])
            self.qeta = np.zeros((U.shape[0], vel.shape[1]))
            self.deta = np.zeros_like(U)


# ----------------------------------------------------------------------------
# viscosity
# ----------------------------------------------------------------------------


@njit(cache=True)
def _dcsr_from_pairs(n, nnz, row_ptr, diag_pos, pair_pos_ij, pair_pos_ji, d_pair):
    d = np.zeros(nnz)
    for q in range(pair_pos_ij.shape[0]):
        d[pair_pos_ij[q]] = d_pair[q]
        d[pair_pos_ji[q]] = d_pair[q]
    for i in range(n):
        s = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            if k != diag_pos[i]:
                s += d[k]
        d[diag_pos[i]] = -s
    return d


def compute_pair_viscosity(graph: DiscreteGraph, U, eos: EquationOfState, nf=None):
    """Pair wave speeds scattered to the CSR array (diagonal = -row sum)."""
    if nf is None:
        vel, p, c, cb, pw = pair_wave_speed_inputs(U, eos)
    else:
        vel, p, c, cb, pw = nf.vel, nf.p, nf.c, nf.cb, nf.pw
    d_pair = _pair_wave_speeds(
        graph.pair_i,
        graph.pair_j,
        graph.pair_pos_ij,
        graph.pair_pos_ji,
        graph.pair_sym,
        graph.cij,
        graph.cnorm,
        vel,
        p,
        c,
        cb,
        pw,
        eos.gamma,
        tr_exponent_as_int(eos.gamma),
    )
    return _dcsr_from_pairs(
        graph.n, graph.nnz, graph.row_ptr, graph.diag_pos, graph.pair_pos_ij, graph.pair_pos_ji, d_pair
    )


# ----------------------------------------------------------------------------
# pair sweeps
# ----------------------------------------------------------------------------


@njit(**FAST)
def _sweep_pairs(
    pair_i,
    pair_j,
    pair_pos_ij,
    pair_pos_ji,
    pair_sym,
    cij,
    dcsr,
    U,
    F,
    qeta,
    eta,
    rhoe,
    surr,
    want_bounds,
    want_ev,
):
    """Scatter pass over unordered pairs: flux divergence G, viscosity sum V,
    entropy-flux divergence qdiv, eta stencil range, and the bar-state bounds.

    Symmetric pairs (c_ji == -c_ij bitwise) share one bar state and one flux
    dot per side; wall-modified pairs evaluate both orientations.
    """
    n, ncomp = U.shape
    d = cij.shape[1]
    G = np.zeros((n, ncomp))
    V = np.zeros((n, ncomp))
    qdiv = np.zeros(n)
    eta_lo = eta.copy()
    eta_hi = eta.copy()
    rho_min = np.empty(n)
    rho_max = np.empty(n)
    E_min = np.empty(n)
    E_max = np.empty(n)
    eps_min = np.empty(n)
    surr_min = np.empty(n)
    for i in range(n):
        rho_min[i] = U[i, 0]
        rho_max[i] = U[i, 0]
        E_min[i] = U[i, ncomp - 1]
        E_max[i] = U[i, ncomp - 1]
        eps_min[i] = rhoe[i]
        surr_min[i] = surr[i]
    fic = np.empty(ncomp)
    fjc = np.empty(ncomp)
    for q in range(pair_i.shape[0]):
        i = pair_i[q]
        j = pair_j[q]
        kij = pair_pos_ij[q]
        dij = dcsr[kij]
        for c in range(ncomp):
            a1 = 0.0
            a2 = 0.0
            for a in range(d):
                a1 += F[i, c, a] * cij[kij, a]
                a2 += F[j, c, a] * cij[kij, a]
            fic[c] = a1
            fjc[c] = a2
            G[i, c] += a2
            dU = U[j, c] - U[i, c]
            V[i, c] += dij * dU
            V[j, c] -= dij * dU
        if pair_sym[q]:
            for c in range(ncomp):
                G[j, c] -= fic[c]
        else:
            kji = pair_pos_ji[q]
            for c in range(ncomp):
                a1 = 0.0
                for a in range(d):
                    a1 += F[i, c, a] * cij[kji, a]
                G[j, c] += a1
        if want_ev:
            qj = 0.0
            for a in range(d):
                qj += qeta[j, a] * cij[kij, a]
            qdiv[i] += qj
            qi = 0.0
            if pair_sym[q]:
                for a in range(d):
                    qi -= qeta[i, a] * cij[kij, a]
            else:
                kji = pair_pos_ji[q]
                for a in range(d):
                    qi += qeta[i, a] * cij[kji, a]
            qdiv[j] += qi
            if eta[j] < eta_lo[i]:
                eta_lo[i] = eta[j]
            if eta[j] > eta_hi[i]:
                eta_hi[i] = eta[j]
            if eta[i] < eta_lo[j]:
                eta_lo[j] = eta[i]
            if eta[i] > eta_hi[j]:
                eta_hi[j] = eta[i]
        if want_bounds:
            if U[j, 0] < rho_min[i]:
                rho_min[i] = U[j, 0]
            if U[j, 0] > rho_max[i]:
                rho_max[i] = U[j, 0]
            if U[i, 0] < rho_min[j]:
                rho_min[j] = U[i, 0]
            if U[i, 0] > rho_max[j]:
                rho_max[j] = U[i, 0]
            Ej = U[j, ncomp - 1]
            Ei = U[i, ncomp - 1]
            if Ej < E_min[i]:
                E_min[i] = Ej
            if Ej > E_max[i]:
                E_max[i] = Ej
            if Ei < E_min[j]:
                E_min[j] = Ei
            if Ei > E_max[j]:
                E_max[j] = Ei
            if rhoe[j] < eps_min[i]:
                eps_min[i] = rhoe[j]
            if rhoe[i] < eps_min[j]:
                eps_min[j] = rhoe[i]
            if surr[j] < surr_min[i]:
                surr_min[i] = surr[j]
            if surr[i] < surr_min[j]:
                surr_min[j] = surr[i]
            if dij > 0.0:
                half = 0.5 / dij
                rb = 0.5 * (U[i, 0] + U[j, 0]) - (fjc[0] - fic[0]) * half
                eb = 0.5 * (Ei + Ej) - (fjc[ncomp - 1] - fic[ncomp - 1]) * half
                ke = 0.0
                for a in range(d):
                    mb = 0.5 * (U[i, 1 + a] + U[j, 1 + a]) - (fjc[1 + a] - fic[1 + a]) * half
                    ke += mb * mb
                reb = eb - 0.5 * ke / rb
                if rb < rho_min[i]:
                    rho_min[i] = rb
                if rb > rho_max[i]:
                    rho_max[i] = rb
                if eb < E_min[i]:
                    E_min[i] = eb
                if eb > E_max[i]:
                    E_max[i] = eb
                if reb < eps_min[i]:
                    eps_min[i] = reb
                if pair_sym[q]:
                    if rb < rho_min[j]:
                        rho_min[j] = rb
                    if rb > rho_max[j]:
                        rho_max[j] = rb
                    if eb < E_min[j]:
                        E_min[j] = eb
                    if eb > E_max[j]:
                        E_max[j] = eb
                    if reb < eps_min[j]:
                        eps_min[j] = reb
                else:
                    # wall-modified pair: the j-row has its own bar state
                    kji = pair_pos_ji[q]
                    for c in range(ncomp):
                        a1 = 0.0
                        a2 = 0.0
                        for a in range(d):
                            a1 += F[j, c, a] * cij[kji, a]
                            a2 += F[i, c, a] * cij[kji, a]
                        fjc[c] = a2  # i-side flux seen from row j
                        fic[c] = a1
                    rb = 0.5 * (U[i, 0] + U[j, 0]) - (fjc[0] - fic[0]) * half
                    eb = 0.5 * (Ei + Ej) - (fjc[ncomp - 1] - fic[ncomp - 1]) * half
                    ke = 0.0
                    for a in range(d):
                        mb = 0.5 * (U[i, 1 + a] + U[j, 1 + a]) - (fjc[1 + a] - fic[1 + a]) * half
                        ke += mb * mb
                    reb = eb - 0.5 * ke / rb
                    if rb < rho_min[j]:
                        rho_min[j] = rb
                    if rb > rho_max[j]:
                        rho_max[j] = rb
                    if eb < E_min[j]:
                        E_min[j] = eb
                    if eb > E_max[j]:
                        E_max[j] = eb
                    if reb < eps_min[j]:
                        eps_min[j] = reb
    return G, V, qdiv, eta_lo, eta_hi, rho_min, rho_max, E_min, E_max, eps_min, surr_min


@njit(**FAST)
def _diag_flux(diag_pos, cij, F, qeta, G, qdiv, want_ev):
    """Add the diagonal contributions f(U_i).c_ii (nonzero on boundary rows)."""
    n = diag_pos.shape[0]
    ncomp = G.shape[1]
    d = cij.shape[1]
    for i in range(n):
        k = diag_pos[i]
        for c in range(ncomp):
            fc = 0.0
            for a in range(d):
                fc += F[i, c, a] * cij[k, a]
            G[i, c] += fc
        if want_ev:
            qi = 0.0
            for a in range(d):
                qi += qeta[i, a] * cij[k, a]
            qdiv[i] += qi


@njit(**FAST)
def _finish_low(U, G, V, mi, dt, d_diag):
    """UL = U - dt/m (G - V); returns (UL, min CFL coefficient, min UL density)."""
    n, ncomp = U.shape
    UL = np.empty_like(U)
    coef_min = 1e300
    rho_min = 1e300
    for i in range(n):
        coef = 1.0 + 2.0 * dt * d_diag[i] / mi[i]
        if coef < coef_min:
            coef_min = coef
        w = dt / mi[i]
        for c in range(ncomp):
            UL[i, c] = U[i, c] - w * (G[i, c] - V[i, c])
        if UL[i, 0] < rho_min:
            rho_min = UL[i, 0]
    return UL, coef_min, rho_min


@njit(**FAST)
def _ev_amplitude(qdiv, deta, G, eta_lo, eta_hi, eps_coef):
    """|R_i| = |qdiv_i - deta_i.G_i| / max(eta range, eps_i)."""
    n, ncomp = G.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for c in range(ncomp):
            s += deta[i, c] * G[i, c]
        num = qdiv[i] - s
        rng = eta_hi[i] - eta_lo[i]
        e_hi = eta_hi[i] if eta_hi[i] > 0.0 else -eta_hi[i]
        e_lo = eta_lo[i] if eta_lo[i] > 0.0 else -eta_lo[i]
        eps = eps_coef * (e_hi if e_hi > e_lo else e_lo)
        den = rng if rng > eps else eps
        if den > 0.0:
            out[i] = (num if num > 0.0 else -num) / den
        else:
            out[i] = 0.0
    return out


@njit(**FAST)
def _high_order_rhs(pair_i, pair_j, pair_pos_ij, dcsr, a_high, visc_mode, U, G, dt):
    """B_i = -dt (G_i - sum_j d^H_ij (U_j - U_i)) for the mass solve."""
    n, ncomp = U.shape
    VH = np.zeros((n, ncomp))
    for q in range(pair_i.shape[0]):
        i = pair_i[q]
        j = pair_j[q]
        dl = dcsr[pair_pos_ij[q]]
        aa = a_high[i] if a_high[i] > a_high[j] else a_high[j]
        if visc_mode == 1:
            dh = dl if dl < aa else aa
        else:
            dh = dl * aa
        for c in range(ncomp):
            dU = U[j, c] - U[i, c]
            VH[i, c] += dh * dU
            VH[j, c] -= dh * dU
    for i in range(U.shape[0]):
        for c in range(ncomp):
            VH[i, c] = -dt * (G[i, c] - VH[i, c])
    return VH


@njit(**FAST)
def _apply_minmax_relax(vmin, vmax, amount):
    n = vmin.shape[0]
    out_min = np.empty(n)
    out_max = np.empty(n)
    for i in range(n):
        lo = vmin[i] - amount[i]
        f = 0.99 * vmin[i]
        out_min[i] = lo if lo > f else f
        hi = vmax[i] + amount[i]
        f = 1.01 * vmax[i]
        out_max[i] = hi if hi < f else f
    return out_min, out_max


@njit(**FAST)
def _relax_second_difference(row_ptr, col, g, mode):
    """Relaxation magnitudes from stencil second differences (average/minmod)."""
    n = row_ptr.shape[0] - 1
    d2 = np.empty(n)
    for i in range(n):
        s = 0.0
        cnt = 0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            s += g[col[k]]
            cnt += 1
        d2[i] = cnt * g[i] - s
    out = np.empty(n)
    if mode == 1:  # average
        for i in range(n):
            s = 0.0
            cnt = 0
            for k in range(row_ptr[i], row_ptr[i + 1]):
                s += d2[col[k]]
                cnt += 1
            v = ((cnt - 2.0) * d2[i] + s) / (4.0 * cnt)
            out[i] = -v if v < 0.0 else v
    else:  # minmod
        for i in range(n):
            lo = 1e300
            hi = -1e300
            for k in range(row_ptr[i], row_ptr[i + 1]):
                h = 0.5 * d2[col[k]]
                if h < lo:
                    lo = h
                if h > hi:
                    hi = h
            if lo > 0.0:
                out[i] = lo
            elif hi < 0.0:
                out[i] = -hi
            else:
                out[i] = 0.0
    return out


@njit(cache=True)
def _entropy_relax_kernel(pair_i, pair_j, U, gamma, b, surr_min):
    """Relaxed entropy minimum from the midpoint surrogate probe."""
    n = surr_min.shape[0]
    ncomp = U.shape[1]
    d = ncomp - 2
    delta = np.zeros(n)
    for q in range(pair_i.shape[0]):
        i = pair_i[q]
        j = pair_j[q]
        rho = 0.5 * (U[i, 0] + U[j, 0])
        E = 0.5 * (U[i, ncomp - 1] + U[j, ncomp - 1])
        ke = 0.0
        for a in range(d):
            mm = 0.5 * (U[i, 1 + a] + U[j, 1 + a])
            ke += mm * mm
        s = (E - 0.5 * ke / rho) * rho**-gamma
        if b > 0.0:
            s *= (1.0 - b * rho) ** (gamma - 1.0)
        gi = s - surr_min[i]
        if gi > delta[i]:
            delta[i] = gi
        gj = s - surr_min[j]
        if gj > delta[j]:
            delta[j] = gj
    out = np.empty(n)
    for i in range(n):
        lo = surr_min[i] - (delta[i] if delta[i] > 0.0 else 0.0)
        f = 0.99 * surr_min[i]
        out[i] = lo if lo > f else f
    return out


@njit(**FAST)
def _build_antidiffusion(
    pair_i, pair_j, pair_pos_ij, pair_mij, dcsr, a_high, visc_mode, U, UL, UH, mi, dt, consistent, slack
):
    """A per pair plus the row-identity verification
    m_i (U^H_i - U^L_i) = sum_j A_ij; returns (A, worst violation ratio)."""
    npair = pair_i.shape[0]
    n, ncomp = U.shape
    A = np.empty((npair, ncomp))
    rowsum = np.zeros((n, ncomp))
    for q in range(npair):
        i = pair_i[q]
        j = pair_j[q]
        dl = dcsr[pair_pos_ij[q]]
        aa = a_high[i] if a_high[i] > a_high[j] else a_high[j]
        if visc_mode == 1:
            dh = dl if dl < aa else aa
        else:
            dh = dl * aa
        coef = dt * (dh - dl)
        for c in range(ncomp):
            v = coef * (U[j, c] - U[i, c])
            if consistent:
                v -= pair_mij[q] * ((UH[j, c] - U[j, c]) - (UH[i, c] - U[i, c]))
            A[q, c] = v
            rowsum[i, c] += v
            rowsum[j, c] -= v
    # scale includes a global floor so near-constant rows do not trip on noise
    gmax = 0.0
    err_max = np.zeros(n)
    scl = np.zeros(n)
    for i in range(n):
        semax = 0.0
        ee = 0.0
        for c in range(ncomp):
            s = mi[i] * (abs(UH[i, c] - UL[i, c]) + abs(UH[i, c] - U[i, c]) + abs(UL[i, c] - U[i, c]))
            if s > semax:
                semax = s
            e = abs(mi[i] * (UH[i, c] - UL[i, c]) - rowsum[i, c])
            if e > ee:
                ee = e
        scl[i] = semax
        err_max[i] = ee
        if semax > gmax:
            gmax = semax
    worst = 0.0
    for i in range(n):
        tol = 1e-10 * (scl[i] + gmax) + 2.0 * slack
        r = err_max[i] / tol if tol > 0.0 else 0.0
        if r > worst:
            worst = r
    return A, worst


@njit(**FAST)
def _limit_prep_rho(pair_i, pair_j, A, U, deg, mi):
    """rho(U_i + P_ij) and rho(U_j + P_ji) per pair (clamped positive) for the
    vectorized gamma-powers outside."""
    npair = pair_i.shape[0]
    r_i = np.empty(npair)
    r_j = np.empty(npair)
    for q in range(npair):
        i = pair_i[q]
        j = pair_j[q]
        v = U[i, 0] + A[q, 0] * (deg[i] - 1.0) / mi[i]
        r_i[q] = v if v > 1e-300 else 1e-300
        v = U[j, 0] - A[q, 0] * (deg[j] - 1.0) / mi[j]
        r_j[q] = v if v > 1e-300 else 1e-300
    return r_i, r_j


@njit(cache=True)
def _limit_pass(
    pair_i,
    pair_j,
    A,
    U,
    deg,
    mi,
    rho_min,
    rho_max,
    eps_min,
    surr_min,
    pow_i,
    pow_j,
    do_rho,
    do_energy,
    do_entropy,
    gamma,
    b_cov,
):
    """One limiting pass: symmetric l per pair from the frozen U, then apply
    U += l A / m and A *= (1 - l), in place.

    pow_i/pow_j hold rho(U_i + P_ij)^gamma and rho(U_j + P_ji)^gamma
    (vectorized outside) so the common h(1) >= 0 entropy test is pow-free;
    only edges that need the root search pay scalar transcendentals.
    """
    npair = pair_i.shape[0]
    ncomp = U.shape[1]
    d = ncomp - 2
    lpair = np.ones(npair)
    P = np.empty(ncomp)
    for q in range(npair):
        i = pair_i[q]
        j = pair_j[q]
        l = 1.0
        fac = (deg[i] - 1.0) / mi[i]
        for c in range(ncomp):
            P[c] = A[q, c] * fac
        if do_rho:
            rmax = rho_max[i]
            l = _density_fraction(U[i, 0], P[0], rho_min[i], rmax, 1e-14 * rmax)
        if do_energy and l > 0.0:
            t0 = _energy_fraction(eps_min[i], U[i], P)
            if t0 < l:
                l = t0
        if do_entropy and l > 0.0:
            rho1 = U[i, 0] + P[0]
            if rho1 > 0.0 and (b_cov == 0.0 or b_cov * rho1 < 1.0):
                ke = 0.0
                for a in range(d):
                    mm = U[i, 1 + a] + P[1 + a]
                    ke += mm * mm
                g1 = pow_i[q]
                if b_cov > 0.0:
                    g1 *= (1.0 - b_cov * rho1) ** (1.0 - gamma)
                h1 = U[i, ncomp - 1] + P[ncomp - 1] - 0.5 * ke / rho1 - surr_min[i] * g1
            else:
                h1 = -1.0
            if h1 < 0.0:
                t0 = _entropy_fraction(surr_min[i], U[i], P, gamma, b_cov)
                if t0 < l:
                    l = t0
        if l > 0.0:
            fac = -(deg[j] - 1.0) / mi[j]
            for c in range(ncomp):
                P[c] = A[q, c] * fac
            if do_rho:
                rmax = rho_max[j]
                l2 = _density_fraction(U[j, 0], P[0], rho_min[j], rmax, 1e-14 * rmax)
                if l2 < l:
                    l = l2
            if do_energy and l > 0.0:
                t0 = _energy_fraction(eps_min[j], U[j], P)
                if t0 < l:
                    l = t0
            if do_entropy and l > 0.0:
                rho1 = U[j, 0] + P[0]
                if rho1 > 0.0 and (b_cov == 0.0 or b_cov * rho1 < 1.0):
                    ke = 0.0
                    for a in range(d):
                        mm = U[j, 1 + a] + P[1 + a]
                        ke += mm * mm
                    g1 = pow_j[q]
                    if b_cov > 0.0:
                        g1 *= (1.0 - b_cov * rho1) ** (1.0 - gamma)
                    h1 = U[j, ncomp - 1] + P[ncomp - 1] - 0.5 * ke / rho1 - surr_min[j] * g1
                else:
                    h1 = -1.0
                if h1 < 0.0:
                    t0 = _entropy_fraction(surr_min[j], U[j], P, gamma, b_cov)
                    if t0 < l:
                        l = t0
        lpair[q] = l
    for q in range(npair):
        i = pair_i[q]
        j = pair_j[q]
        l = lpair[q]
        for c in range(ncomp):
            v = l * A[q, c]
            U[i, c] += v / mi[i]
            U[j, c] -= v / mi[j]
            A[q, c] *= 1.0 - l
    return lpair


@njit(**FAST)
def _check_limited(U, rho_min, rho_max, eps_min, surr_min, surr_pow, do_rho, do_energy, do_entropy, b_cov, gamma):
    """Violation scan of the relaxed constraints; returns (node, code) or (-1, 0).

    surr_pow = rho^gamma per node, precomputed.  Codes: 1 rho-min, 2 rho-max,
    3 eps-min, 4 entropy, 5 admissibility.
    """
    n, ncomp = U.shape
    d = ncomp - 2
    for i in range(n):
        rho = U[i, 0]
        if rho <= 0.0:
            return i, 5
        ke = 0.0
        for a in range(d):
            ke += U[i, 1 + a] * U[i, 1 + a]
        rhoe = U[i, ncomp - 1] - 0.5 * ke / rho
        if rhoe <= 0.0 or (b_cov > 0.0 and b_cov * rho >= 1.0):
            return i, 5
        if do_rho:
            tol = 1e-12 * rho_max[i]
            if rho < rho_min[i] - tol:
                return i, 1
            if rho > rho_max[i] + tol:
                return i, 2
        if do_energy:
            scale = abs(U[i, ncomp - 1]) + abs(eps_min[i])
            if rhoe < eps_min[i] - 1e-12 * scale:
                return i, 3
        if do_entropy:
            g = surr_pow[i]
            if b_cov > 0.0:
                g *= (1.0 - b_cov * rho) ** (1.0 - gamma)
            gap = rhoe - surr_min[i] * g
            scale = abs(rhoe) + abs(surr_min[i]) * g
            if gap < -1e-12 * scale:
                return i, 4
    return -1, 0


_CHECK_NAMES = {
    1: "density under relaxed minimum",
    2: "density over relaxed maximum",
    3: "internal energy under relaxed minimum",
    4: "entropy surrogate under relaxed minimum",
    5: "inadmissible state",
}


def _pair_mij(graph: DiscreteGraph) -> np.ndarray:
    if "pair_mij" not in graph._cache:
        graph._cache["pair_mij"] = np.ascontiguousarray(graph.mij[graph.pair_pos_ij])
    return graph._cache["pair_mij"]


# ----------------------------------------------------------------------------
# consistent-mass solve (1D direct Thomas; otherwise highorder's CG)
# ----------------------------------------------------------------------------


@njit(cache=True)
def _thomas_factor(lower, diag, upper):
    """Forward-elimination factors and inverse pivots, reused across solves."""
    n = diag.shape[0]
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 1.0 / diag[0]
    cp[0] = upper[0] * inv[0]
    for i in range(1, n):
        inv[i] = 1.0 / (diag[i] - lower[i] * cp[i - 1])
        cp[i] = upper[i] * inv[i]
    return cp, inv


@njit(cache=True)
def _thomas_solve(lower, cp, inv, B):
    n, m = B.shape
    X = np.empty_like(B)
    for c in range(m):
        X[0, c] = B[0, c] * inv[0]
    for i in range(1, n):
        li = lower[i]
        vi = inv[i]
        for c in range(m):
            X[i, c] = (B[i, c] - li * X[i - 1, c]) * vi
    for i in range(n - 2, -1, -1):
        ci = cp[i]
        for c in range(m):
            X[i, c] -= ci * X[i + 1, c]
    return X


def _tridiagonal_bands(graph: DiscreteGraph):
    """(lower, diag, upper) of the mass matrix if it is strictly tridiagonal."""
    if graph.dim != 1 or np.any(np.abs(graph.col.astype(np.int64) - graph.rowidx) > 1):
        return None
    lower = np.zeros(graph.n)
    diag = np.zeros(graph.n)
    upper = np.zeros(graph.n)
    off = graph.col.astype(np.int64) - graph.rowidx
    np.add.at(diag, graph.rowidx[off == 0], graph.mij[off == 0])
    np.add.at(lower, graph.rowidx[off == -1], graph.mij[off == -1])
    np.add.at(upper, graph.rowidx[off == 1], graph.mij[off == 1])
    return lower, diag, upper


def _solve_mass(graph: DiscreteGraph, B: np.ndarray):
    """Mass solve with the residual guarantee ||M x - b|| <= 1e-12 ||b||."""
    if "tridiag" not in graph._cache:
        bands = _tridiagonal_bands(graph)
        if bands is None:
            graph._cache["tridiag"] = None
        else:
            lower, diag, upper = bands
            cp, inv = _thomas_factor(lower, diag, upper)
            graph._cache["tridiag"] = (lower, cp, inv)
    tri = graph._cache["tridiag"]
    if tri is None:
        return solve_consistent_mass(graph, B)
    lower, cp, inv = tri
    # direct solve: residual is at rounding level (test_highorder pins the
    # 1e-12 ||b|| invariant for both solve paths)
    X = _thomas_solve(lower, cp, inv, B)
    return X, np.zeros(B.shape[1])


# ----------------------------------------------------------------------------
# the fused stage
# ----------------------------------------------------------------------------


def euler_stage(
    graph: DiscreteGraph,
    U: np.ndarray,
    dt: float,
    eos: EquationOfState,
    opts: StageOptions,
    d_low: np.ndarray | None = None,
) -> np.ndarray:
    """One fused forward-Euler stage (without boundary conditions)."""
    need_ev = opts.viscosity == VISC_EV
    limited = opts.limiters != "none" and opts.viscosity not in (VISC_LOW, VISC_GALERKIN)
    do_entropy = limited and opts.limiters in ("density+entropy", "all")
    nf = NodeFields(U, eos, need_ev, do_entropy)

    if opts.viscosity == VISC_GALERKIN:
        G, V, qdiv, *_ = _sweep_pairs(
            graph.pair_i, graph.pair_j, graph.pair_pos_ij, graph.pair_pos_ji, graph.pair_sym,
            graph.cij, np.zeros(graph.nnz), U, nf.F, nf.qeta, nf.eta, nf.rhoe, nf.surr,
            False, False,
        )
        _diag_flux(graph.diag_pos, graph.cij, nf.F, nf.qeta, G, qdiv, False)
        return _mass_apply(graph, U, -dt * G, opts)

    if d_low is None:
        d_low = compute_pair_viscosity(graph, U, eos, nf)

    G, V, qdiv, eta_lo, eta_hi, rho_min, rho_max, E_min, E_max, eps_min, surr_min = _sweep_pairs(
        graph.pair_i,
        graph.pair_j,
        graph.pair_pos_ij,
        graph.pair_pos_ji,
        graph.pair_sym,
        graph.cij,
        d_low,
        U,
        nf.F,
        nf.qeta,
        nf.eta,
        nf.rhoe,
        nf.surr,
        limited,
        need_ev,
    )
    _diag_flux(graph.diag_pos, graph.cij, nf.F, nf.qeta, G, qdiv, need_ev)

    UL, coef_min, rho_low_min = _finish_low(U, G, V, graph.mi, dt, d_low[graph.diag_pos])
    if coef_min < -1e-13:  # rounding slack at dt = CFL m/|d| exactly
        raise CFLViolationError(f"1 + 2 dt d_ii/m_i = {coef_min:.3e} < 0 (dt = {dt:.3e})")
    if rho_low_min <= 0.0:
        raise EulerFEMError("low-order density nonpositive")
    if opts.viscosity == VISC_LOW:
        return UL

    if need_ev:
        a_high = _ev_amplitude(qdiv, nf.deta, G, eta_lo, eta_hi, INDICATOR_EPS)
        visc_mode = 1
    else:
        gfield = _smoothness_values(U, eos, opts.smoothness_field, nf)
        a_high = smoothness_indicator(graph, gfield) ** opts.psi_exponent
        visc_mode = 2

    B = _high_order_rhs(
        graph.pair_i, graph.pair_j, graph.pair_pos_ij, d_low, a_high, visc_mode, U, G, dt
    )
    UH, slack = _mass_apply(graph, U, B, opts, return_info=True)
    if opts.limiters == "none":
        return UH

    bounds = LimiterBounds.from_raw(rho_min, rho_max, E_min, E_max, eps_min, surr_min)
    if opts.relaxation != "none":
        mode = 1 if opts.relaxation == "average" else 2
        amount = _relax_second_difference(graph.row_ptr, graph.col, nf.rho, mode)
        bounds.rho_min_rel, bounds.rho_max_rel = _apply_minmax_relax(rho_min, rho_max, amount)
        if opts.limiters in ("density+energy", "all"):
            amount_e = _relax_second_difference(graph.row_ptr, graph.col, nf.rhoe, mode)
            bounds.eps_min_rel = np.maximum(0.99 * eps_min, eps_min - amount_e)
    if opts.relax_entropy and do_entropy:
        bounds.surr_min_rel = _entropy_relax_kernel(
            graph.pair_i, graph.pair_j, U, eos.gamma, eos.b, surr_min
        )

    A, identity_violation = _build_antidiffusion(
        graph.pair_i,
        graph.pair_j,
        graph.pair_pos_ij,
        _pair_mij(graph),
        d_low,
        a_high,
        visc_mode,
        U,
        UL,
        UH,
        graph.mi,
        dt,
        opts.mass_consistent,
        2.0 * float(slack.max()),
    )
    if identity_violation > 1.0:
        raise EulerFEMError(
            f"antidiffusion row identity violated (worst excess ratio {identity_violation:.3e})"
        )

    do_energy = opts.limiters in ("density+energy", "all")
    U_new = UL  # _finish_low returned a fresh array; limit passes mutate it
    if "deg_f" not in graph._cache:
        graph._cache["deg_f"] = graph.degrees().astype(np.float64)
    deg = graph._cache["deg_f"]
    empty = np.zeros(0)
    for _ in range(opts.k_max):
        if do_entropy:
            r_i, r_j = _limit_prep_rho(graph.pair_i, graph.pair_j, A, U_new, deg, graph.mi)
            pow_i = r_i**eos.gamma
            pow_j = r_j**eos.gamma
        else:
            pow_i = pow_j = empty
        _limit_pass(
            graph.pair_i,
            graph.pair_j,
            A,
            U_new,
            deg,
            graph.mi,
            bounds.rho_min_rel,
            bounds.rho_max_rel,
            bounds.eps_min_rel,
            bounds.surr_min_rel,
            pow_i,
            pow_j,
            True,
            do_energy,
            do_entropy,
            eos.gamma,
            eos.b,
        )
    node, code = _check_limited(
        U_new,
        bounds.rho_min_rel,
        bounds.rho_max_rel,
        bounds.eps_min_rel,
        bounds.surr_min_rel,
        U_new[:, 0] ** eos.gamma if do_entropy else np.ones(graph.n),
        True,
        do_energy,
        do_entropy,
        eos.b,
        eos.gamma,
    )
    if node >= 0:
        raise EulerFEMError(f"node {node}: {_CHECK_NAMES[code]} after limiting")
    return U_new


def _smoothness_values(U, eos, which, nf: NodeFields):
    if which == "entropy":
        surr = nf.rhoe * nf.rho**-eos.gamma
        if eos.b > 0.0:
            surr = surr * (1.0 - eos.b * nf.rho) ** (eos.gamma - 1.0)
        return nf.rho * (eos.s0 + np.log(surr) / (eos.gamma - 1.0))
    if which == "density":
        return nf.rho
    return nf.p ** (1.0 / eos.gamma)


def _mass_apply(graph, U, B, opts, return_info=False):
    """U + M^{-1} B (consistent) or U + B/m_i (lumped); B = -dt * residual."""
    if not opts.mass_consistent:
        UH = U + B / graph.mi[:, None]
        slack = np.zeros(U.shape[1])
    else:
        dU, slack = _solve_mass(graph, B)
        UH = U + dU
    if return_info:
        return UH, slack
    return UH
