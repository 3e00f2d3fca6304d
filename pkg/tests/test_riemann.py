import numpy as np
import pytest

from conftest import random_admissible_states
from eulerfem import riemann
from eulerfem.physics import EquationOfState, primitive_to_conserved
from eulerfem.riemann import (
    ProjectedState1D,
    exact_fan_speeds,
    exact_riemann_solve,
    exact_star_state,
    max_wave_speed,
    project_to_normal,
    two_rarefaction_pressure,
)


def test_project_identity_1d(eos14):
    u = np.array([1.0, 0.7, 2.0])
    w = project_to_normal(u, np.array([1.0]))
    assert (w.rho, w.m_n, w.E_red) == (1.0, 0.7, 2.0)


def test_project_2d(eos14):
    u = np.array([1.0, 3.0, 4.0, 30.0])
    w = project_to_normal(u, np.array([1.0, 0.0]))
    assert w.m_n == 3.0
    assert w.E_red == 30.0 - 0.5 * 16.0  # E - |m_perp|^2 / (2 rho)


def test_projection_preserves_internal_energy(eos14):
    rng = np.random.default_rng(2)
    U = random_admissible_states(rng, 50, dim=2)
    for u in U:
        n = rng.normal(size=2)
        n /= np.linalg.norm(n)
        w = project_to_normal(u, n)
        e_orig = (u[-1] - 0.5 * (u[1] ** 2 + u[2] ** 2) / u[0]) / u[0]
        e_proj = (w.E_red - 0.5 * w.m_n**2 / w.rho) / w.rho
        assert e_proj == pytest.approx(e_orig, rel=1e-12)


def test_projection_sign_symmetric_pressure(eos14):
    u = np.array([2.0, 1.0, -0.5, 8.0])
    for n in (np.array([0.6, 0.8]), np.array([-0.6, -0.8])):
        w = project_to_normal(u, n)
        rhoe = w.E_red - 0.5 * w.m_n**2 / w.rho
        assert rhoe == pytest.approx(
            project_to_normal(u, -n).E_red - 0.5 * project_to_normal(u, -n).m_n ** 2 / w.rho
        )


def test_project_rejects_non_unit_normal():
    with pytest.raises(ValueError):
        project_to_normal(np.array([1.0, 0.0, 1.0]), np.array([1.1]))


def test_two_rarefaction_equal_states(eos14):
    w = primitive_to_conserved(1.3, [0.4], 0.7, eos14)
    assert two_rarefaction_pressure(w, w, eos14) == pytest.approx(0.7, rel=1e-13)


def test_two_rarefaction_bounds_exact_star(eos14):
    sodL = primitive_to_conserved(1.0, [0.0], 1.0, eos14)
    sodR = primitive_to_conserved(0.125, [0.0], 0.1, eos14)
    p_star, _ = exact_star_state(sodL, sodR, eos14)
    assert p_star == pytest.approx(0.30313017805064697, rel=1e-10)
    assert two_rarefaction_pressure(sodL, sodR, eos14) >= p_star


def test_two_rarefaction_vacuum_limit(eos14):
    """Strongly receding states: p_tilde -> 0+, never negative."""
    for dv in (1.0, 3.0, 5.0, 8.0, 20.0):
        wl = primitive_to_conserved(1.0, [-dv], 1.0, eos14)
        wr = primitive_to_conserved(1.0, [dv], 1.0, eos14)
        pt = two_rarefaction_pressure(wl, wr, eos14)
        assert pt >= 0.0
    assert two_rarefaction_pressure(
        primitive_to_conserved(1.0, [-20.0], 1.0, eos14),
        primitive_to_conserved(1.0, [20.0], 1.0, eos14),
        eos14,
    ) == pytest.approx(0.0, abs=1e-300)


def test_max_wave_speed_rest_state(eos14):
    u = primitive_to_conserved(1.0, [0.0], 1.0, eos14)
    lam = max_wave_speed(np.array([1.0]), u, u, eos14)
    assert lam == pytest.approx(np.sqrt(1.4), rel=1e-13)


def test_max_wave_speed_orientation_swap(eos14):
    rng = np.random.default_rng(3)
    A = random_admissible_states(rng, 30, dim=2)
    B = random_admissible_states(rng, 30, dim=2)
    for ua, ub in zip(A, B):
        n = rng.normal(size=2)
        n /= np.linalg.norm(n)
        assert max_wave_speed(n, ua, ub, eos14) == pytest.approx(
            max_wave_speed(-n, ub, ua, eos14), rel=1e-12
        )


def test_max_wave_speed_tangential_invariance(eos14):
    """Shifting both states by the same tangential velocity leaves lambda unchanged."""
    from eulerfem import physics

    rng = np.random.default_rng(4)
    A = random_admissible_states(rng, 30, dim=2)
    B = random_admissible_states(rng, 30, dim=2)
    n = np.array([1.0, 0.0])
    for ua, ub in zip(A, B):
        lam0 = max_wave_speed(n, ua, ub, eos14)
        boosted = []
        for orig in (ua, ub):
            rho, v, p = physics.conserved_to_primitive(orig, eos14)
            vb = v.copy()
            vb[1] += 0.9  # tangential to n
            boosted.append(primitive_to_conserved(rho, vb, p, eos14))
        lam1 = max_wave_speed(n, boosted[0], boosted[1], eos14)
        assert lam1 == pytest.approx(lam0, rel=1e-9)


LEBLANC = dict(
    rho_star_L=5.40793353493162e-2,
    rho_star_R=3.99999806043000e-3,
    v_star=0.621838671391735,
    p_star=0.515577927650970e-3,
    lam3=0.829118362533470,
)


def _leblanc_states(eos53):
    g = eos53.gamma
    wl = primitive_to_conserved(1.0, [0.0], (g - 1.0) * 1e-1, eos53)
    wr = primitive_to_conserved(1e-3, [0.0], (g - 1.0) * 1e-10, eos53)
    return wl, wr


def test_exact_solver_leblanc_constants(eos53):
    """The oracle reproduces the published 15-digit Leblanc values."""
    wl, wr = _leblanc_states(eos53)
    p_star, v_star = exact_star_state(wl, wr, eos53)
    assert p_star == pytest.approx(LEBLANC["p_star"], abs=1e-12)
    assert v_star == pytest.approx(LEBLANC["v_star"], abs=1e-12)
    lam1, lam3 = exact_fan_speeds(wl, wr, eos53)
    assert lam1 == pytest.approx(-1.0 / 3.0, abs=1e-12)  # rarefaction head
    assert lam3 == pytest.approx(LEBLANC["lam3"], abs=1e-12)
    rho, v, p = exact_riemann_solve(wl, wr, eos53, 0.55)
    assert rho == pytest.approx(LEBLANC["rho_star_L"], abs=1e-12)
    rho, _, _ = exact_riemann_solve(wl, wr, eos53, 0.75)
    assert rho == pytest.approx(LEBLANC["rho_star_R"], abs=1e-12)


def test_exact_solver_rarefaction_fan(eos14):
    """Sampling inside the fan matches the closed-form similarity solution."""
    from eulerfem.benchmarks import exact_rarefaction, rarefaction_data

    (rho_l, v_l, p_l, c_l), (rho_r, v_r, p_r, _) = rarefaction_data()
    wl = primitive_to_conserved(rho_l, [v_l], p_l, eos14)
    wr = primitive_to_conserved(rho_r, [v_r], p_r, eos14)
    for xi in np.linspace(0.05, 1.1, 13):
        rho, v, p = exact_riemann_solve(wl, wr, eos14, xi)
        rho_e, v_e, p_e = exact_rarefaction(np.array([xi]))
        assert rho == pytest.approx(float(rho_e[0]), rel=1e-12)
        assert v == pytest.approx(float(v_e[0]), rel=1e-12)
        assert p == pytest.approx(float(p_e[0]), rel=1e-12)


def test_exact_solver_constant_state(eos14):
    w = primitive_to_conserved(2.0, [0.3], 1.5, eos14)
    for xi in (-1.0, 0.0, 0.3, 2.0):
        rho, v, p = exact_riemann_solve(w, w, eos14, xi)
        assert (rho, v, p) == pytest.approx((2.0, 0.3, 1.5), rel=1e-12)


def test_exact_solver_vacuum_detection(eos14):
    wl = primitive_to_conserved(1.0, [-20.0], 1.0, eos14)
    wr = primitive_to_conserved(1.0, [20.0], 1.0, eos14)
    with pytest.raises(riemann.VacuumError):
        exact_star_state(wl, wr, eos14)


@pytest.mark.parametrize("gamma", [1.4, 5.0 / 3.0])
def test_wave_speed_upper_bound_random_sample(gamma):
    """1000-pair spot check of the guarantee (the 1e4 sample runs in acceptance)."""
    eos = EquationOfState(gamma=gamma)
    rng = np.random.default_rng(int(gamma * 100))
    A = random_admissible_states(rng, 1000, dim=1, gamma=gamma)
    B = random_admissible_states(rng, 1000, dim=1, gamma=gamma)
    n = np.array([1.0])
    for ua, ub in zip(A, B):
        try:
            p_star, _ = exact_star_state(ua, ub, eos)
        except riemann.VacuumError:
            continue
        lam1, lam3 = exact_fan_speeds(ua, ub, eos)
        exact_speed = max(max(-lam1, 0.0), max(lam3, 0.0))
        lam = max_wave_speed(n, ua, ub, eos)
        assert lam >= exact_speed - 1e-12 * max(1.0, exact_speed)
        assert two_rarefaction_pressure(ua, ub, eos) >= p_star * (1.0 - 1e-12)


def test_covolume_wave_speed_runs():
    eos = EquationOfState(gamma=1.4, b=0.05)
    wl = primitive_to_conserved(1.0, [0.0], 1.0, eos)
    wr = primitive_to_conserved(0.5, [0.2], 0.4, eos)
    lam = max_wave_speed(np.array([1.0]), wl, wr, eos)
    assert lam > 0.0
    # b -> 0 recovers the ideal-gas value on the same primitive data
    eos_tiny = EquationOfState(gamma=1.4, b=1e-14)
    eos_zero = EquationOfState(gamma=1.4)
    lam_tiny = max_wave_speed(
        np.array([1.0]),
        primitive_to_conserved(1.0, [0.0], 1.0, eos_tiny),
        primitive_to_conserved(0.5, [0.2], 0.4, eos_tiny),
        eos_tiny,
    )
    lam_zero = max_wave_speed(
        np.array([1.0]),
        primitive_to_conserved(1.0, [0.0], 1.0, eos_zero),
        primitive_to_conserved(0.5, [0.2], 0.4, eos_zero),
        eos_zero,
    )
    assert lam_tiny == pytest.approx(lam_zero, rel=1e-10)
