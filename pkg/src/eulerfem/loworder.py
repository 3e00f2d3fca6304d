"""First-order guaranteed-maximum-speed scheme (GMS-GV1).

Graph viscosity from the two-rarefaction wave-speed bound, the CFL time
step, the forward-Euler low-order update, the bar states it is a convex
combination of, and the limiter bounds those bar states generate.

A viscosity matrix is a plain (nnz,) float array aligned with the graph
sparsity: off-diagonal entries are >= 0, each diagonal entry holds the
negative sum of its row's off-diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import physics
from .errors import CFLViolationError, EulerFEMError, InadmissibleStateError
from .graph import DiscreteGraph
from .physics import EquationOfState
from .riemann import wave_speed_star


@njit(cache=True)
def _pair_wave_speeds(
    pair_i, pair_j, pair_pos_ij, pair_pos_ji, pair_sym, cij, cnorm, vel, p, c, cb, pw, gamma, ip
):
    """d_ij per unordered pair; c/cb/pw are the per-node sound speed,
    c (1 - b rho), and p^(-(gamma-1)/2 gamma).  Symmetric pairs (c_ji == -c_ij)
    evaluate one orientation: the construction is orientation-invariant there."""
    n_pairs = pair_i.shape[0]
    d = vel.shape[1]
    out = np.zeros(n_pairs)
    for k in range(n_pairs):
        i = pair_i[k]
        j = pair_j[k]
        kij = pair_pos_ij[k]
        dmax = 0.0
        nrm = cnorm[kij]
        if nrm > 0.0:
            v_l = 0.0
            v_r = 0.0
            for a in range(d):
                v_l += vel[i, a] * cij[kij, a]
                v_r += vel[j, a] * cij[kij, a]
            v_l /= nrm
            v_r /= nrm
            _, _, _, lam = wave_speed_star(
                v_l, c[i], p[i], cb[i], pw[i], v_r, c[j], p[j], cb[j], pw[j], gamma, ip
            )
            dmax = lam * nrm
        if not pair_sym[k]:
            kji = pair_pos_ji[k]
            nrm = cnorm[kji]
            if nrm > 0.0:
                v_l = 0.0
                v_r = 0.0
                for a in range(d):
                    v_l += vel[j, a] * cij[kji, a]
                    v_r += vel[i, a] * cij[kji, a]
                v_l /= nrm
                v_r /= nrm
                _, _, _, lam = wave_speed_star(
                    v_l, c[j], p[j], cb[j], pw[j], v_r, c[i], p[i], cb[i], pw[i], gamma, ip
                )
                if lam * nrm > dmax:
                    dmax = lam * nrm
        out[k] = dmax
    return out


@njit(cache=True)
def _low_update_kernel(row_ptr, col, diag_pos, cij, dvisc, flux, U, mi, dt):
    n, ncomp = U.shape
    d = cij.shape[1]
    out = np.empty_like(U)
    for i in range(n):
        for c in range(ncomp):
            acc = 0.0
            for k in range(row_ptr[i], row_ptr[i + 1]):
                j = col[k]
                fc = 0.0
                for a in range(d):
                    fc += flux[j, c, a] * cij[k, a]
                acc += fc - dvisc[k] * (U[j, c] - U[i, c])
            out[i, c] = U[i, c] - dt / mi[i] * acc
    return out


@njit(cache=True)
def _bar_state_kernel(
    rowidx, col, diag_pos, pair_pos_ij, pair_pos_ji, pair_sym, cij, dvisc, flux, U
):
    nnz, _ = cij.shape
    n, ncomp = U.shape
    d = cij.shape[1]
    bar = np.empty((nnz, ncomp))
    for q in range(pair_pos_ij.shape[0]):
        kij = pair_pos_ij[q]
        kji = pair_pos_ji[q]
        i = rowidx[kij]
        j = col[kij]
        dij = dvisc[kij]
        for c in range(ncomp):
            mean = 0.5 * (U[i, c] + U[j, c])
            if dij > 0.0:
                dfc = 0.0
                for a in range(d):
                    dfc += (flux[j, c, a] - flux[i, c, a]) * cij[kij, a]
                bar[kij, c] = mean - dfc / (2.0 * dij)
            else:
                bar[kij, c] = mean
        if pair_sym[q]:
            for c in range(ncomp):
                bar[kji, c] = bar[kij, c]
        else:
            for c in range(ncomp):
                mean = 0.5 * (U[i, c] + U[j, c])
                if dij > 0.0:
                    dfc = 0.0
                    for a in range(d):
                        dfc += (flux[i, c, a] - flux[j, c, a]) * cij[kji, a]
                    bar[kji, c] = mean - dfc / (2.0 * dij)
                else:
                    bar[kji, c] = mean
    for i in range(n):
        for c in range(ncomp):
            bar[diag_pos[i], c] = U[i, c]
    return bar


@njit(cache=True)
def _bounds_kernel(row_ptr, col, diag_pos, dvisc, bar, rho, rhoe, E, surr):
    n = row_ptr.shape[0] - 1
    ncomp = bar.shape[1]
    d = ncomp - 2
    rho_min = np.empty(n)
    rho_max = np.empty(n)
    E_min = np.empty(n)
    E_max = np.empty(n)
    eps_min = np.empty(n)
    surr_min = np.empty(n)
    for i in range(n):
        rmin = rho[i]
        rmax = rho[i]
        emin = E[i]
        emax = E[i]
        epsm = rhoe[i]
        smin = surr[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            j = col[k]
            if rho[j] < rmin:
                rmin = rho[j]
            if rho[j] > rmax:
                rmax = rho[j]
            if E[j] < emin:
                emin = E[j]
            if E[j] > emax:
                emax = E[j]
            if rhoe[j] < epsm:
                epsm = rhoe[j]
            if surr[j] < smin:
                smin = surr[j]
            if j != i and dvisc[k] > 0.0:
                rb = bar[k, 0]
                if rb < rmin:
                    rmin = rb
                if rb > rmax:
                    rmax = rb
                eb = bar[k, ncomp - 1]
                if eb < emin:
                    emin = eb
                if eb > emax:
                    emax = eb
                ke = 0.0
                for a in range(d):
                    ke += bar[k, 1 + a] * bar[k, 1 + a]
                rhoeb = eb - 0.5 * ke / rb
                if rhoeb < epsm:
                    epsm = rhoeb
        rho_min[i] = rmin
        rho_max[i] = rmax
        E_min[i] = emin
        E_max[i] = emax
        eps_min[i] = epsm
        surr_min[i] = smin
    return rho_min, rho_max, E_min, E_max, eps_min, surr_min


@dataclass
class LimiterBounds:
    """Per-node bounds extracted from the GV1 bar states.

    rho/E bounds come from nodal values plus bar states; eps_min is the
    internal-energy minimum principle; surr_min is the specific-entropy
    surrogate minimum min_j rho_j e_j / rho_j^gamma over the stencil
    (nodal values only).  The *_rel fields are the relaxed variants used by
    the limiter; they start equal to the raw bounds.
    """

    rho_min: np.ndarray
    rho_max: np.ndarray
    E_min: np.ndarray
    E_max: np.ndarray
    eps_min: np.ndarray
    surr_min: np.ndarray
    rho_min_rel: np.ndarray
    rho_max_rel: np.ndarray
    eps_min_rel: np.ndarray
    surr_min_rel: np.ndarray

    @classmethod
    def from_raw(cls, rho_min, rho_max, E_min, E_max, eps_min, surr_min):
        return cls(
            rho_min,
            rho_max,
            E_min,
            E_max,
            eps_min,
            surr_min,
            rho_min.copy(),
            rho_max.copy(),
            eps_min.copy(),
            surr_min.copy(),
        )


def pair_wave_speed_inputs(U: np.ndarray, eos: EquationOfState):
    """Per-node arrays consumed by the pair wave-speed kernel."""
    rho = physics.density(U)
    vel = np.ascontiguousarray(physics.velocity(U))
    p = physics.pressure(U, eos)
    cov = 1.0 - eos.b * rho
    c = np.sqrt(eos.gamma * p / (rho * cov))
    cb = c * cov
    pw = p ** (-0.5 * (eos.gamma - 1.0) / eos.gamma)
    return vel, p, c, cb, pw


def compute_low_viscosity(graph: DiscreteGraph, U: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """d_ij = max over both orientations of lambda_max * |c|; diagonal = -row sum."""
    physics.check_admissible(U, eos, context="compute_low_viscosity input")
    from .riemann import tr_exponent_as_int

    vel, p, c, cb, pw = pair_wave_speed_inputs(U, eos)
    dpair = _pair_wave_speeds(
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
    d = np.zeros(graph.nnz)
    d[graph.pair_pos_ij] = dpair
    d[graph.pair_pos_ji] = dpair
    _set_viscosity_diagonal(graph, d)
    return d


def _set_viscosity_diagonal(graph: DiscreteGraph, d: np.ndarray) -> None:
    d[graph.diag_pos] = 0.0
    rowsum = np.add.reduceat(d, graph.row_ptr[:-1])
    d[graph.diag_pos] = -rowsum


def compute_dt(graph: DiscreteGraph, d_low: np.ndarray, cfl: float) -> float:
    """dt = CFL * min_i m_i / |d_ii|."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    dii = np.abs(d_low[graph.diag_pos])
    if not np.any(dii > 0.0):
        raise EulerFEMError("all d_ii vanish; time step is unbounded")
    mask = dii > 0.0
    return cfl * float(np.min(graph.mi[mask] / dii[mask]))


def low_order_update(
    graph: DiscreteGraph, U: np.ndarray, d_low: np.ndarray, dt: float, eos: EquationOfState
) -> np.ndarray:
    """One forward-Euler GV1 step.  Raises CFLViolationError before touching U
    if 1 + 2 dt d_ii / m_i < 0 anywhere, and InadmissibleStateError if the
    update leaves the admissible set (which the CFL condition rules out)."""
    # rounding slack: dt = CFL m/|d| at the argmin node makes coef 0 up to eps
    coef = 1.0 + 2.0 * dt * d_low[graph.diag_pos] / graph.mi
    if np.any(coef < -1e-13):
        i = int(np.argmin(coef))
        raise CFLViolationError(
            f"1 + 2 dt d_ii/m_i = {coef[i]:.3e} < 0 at node {i} (dt = {dt:.3e})"
        )
    F = np.ascontiguousarray(physics.flux(U, eos))
    UL = _low_update_kernel(
        graph.row_ptr, graph.col, graph.diag_pos, graph.cij, d_low, F, U, graph.mi, dt
    )
    physics.check_admissible(UL, eos, context="low_order_update output")
    return UL


def compute_bar_states(
    graph: DiscreteGraph, U: np.ndarray, d_low: np.ndarray, eos: EquationOfState
) -> np.ndarray:
    """Bar states (nnz, d+2): Ubar_ij = (U_i+U_j)/2 - (f(U_j)-f(U_i)).c_ij/(2 d_ij).

    Convention: Ubar_ii = U_i; edges with d_ij = 0 store the arithmetic mean
    (their flux term vanishes when c_ij = 0; bounds skip them anyway).
    Degenerate d_ij = 0 with c_ij != 0 is an error.
    """
    degenerate = (d_low == 0.0) & (graph.cnorm > 0.0) & (graph.col != graph.rowidx)
    if np.any(degenerate):
        k = int(np.argmax(degenerate))
        raise EulerFEMError(
            f"degenerate edge ({graph.rowidx[k]}, {graph.col[k]}): d_ij = 0 with c_ij != 0"
        )
    F = np.ascontiguousarray(physics.flux(U, eos))
    return _bar_state_kernel(
        graph.rowidx,
        graph.col,
        graph.diag_pos,
        graph.pair_pos_ij,
        graph.pair_pos_ji,
        graph.pair_sym,
        graph.cij,
        d_low,
        F,
        U,
    )


def compute_limiter_bounds(
    graph: DiscreteGraph,
    U: np.ndarray,
    bar_states: np.ndarray,
    eos: EquationOfState,
    d_low: np.ndarray | None = None,
) -> LimiterBounds:
    """Stencil bounds per node.  Edges with d_ij = 0 contribute only their
    nodal values (their bar state carries no coupling)."""
    rho = physics.density(U)
    rhoe = physics.internal_energy(U)
    E = physics.total_energy(U)
    surr = physics.entropy_surrogate(U, eos)
    if d_low is None:
        d_low = np.ones(graph.nnz)
    raw = _bounds_kernel(
        graph.row_ptr, graph.col, graph.diag_pos, d_low, bar_states, rho, rhoe, E, surr
    )
    return LimiterBounds.from_raw(*raw)
