import numpy as np
import pytest

from conftest import random_admissible_states
from eulerfem import physics
from eulerfem.errors import CFLViolationError, EulerFEMError, InadmissibleStateError
from eulerfem.graph import assemble_graph
from eulerfem.loworder import (
    compute_bar_states,
    compute_dt,
    compute_limiter_bounds,
    compute_low_viscosity,
    low_order_update,
)
from eulerfem.mesh import build_crisscross_mesh, build_interval_mesh
from eulerfem.physics import EquationOfState, primitive_to_conserved


def periodic_graph(n=50):
    return assemble_graph(build_interval_mesh(n, 0.0, 1.0, bc="periodic"))


def random_field(rng, g, dim=1, gamma=1.4, mild=False):
    if mild:
        rho = np.exp(rng.uniform(-0.5, 0.5, g.n))
        v = rng.uniform(-1.0, 1.0, (g.n, dim))
        p = np.exp(rng.uniform(-0.5, 0.5, g.n))
        return primitive_to_conserved(rho, v, p, EquationOfState(gamma=gamma))
    return random_admissible_states(rng, g.n, dim=dim, gamma=gamma)


def test_constant_rest_field_viscosity(eos14):
    g = periodic_graph(8)
    U = np.tile(primitive_to_conserved(1.0, [0.0], 1.0, eos14), (g.n, 1))
    d = compute_low_viscosity(g, U, eos14)
    k = g.entry(3, 4)
    assert d[k] == pytest.approx(np.sqrt(1.4) / 2.0, rel=1e-13)
    # symmetry and nonnegativity
    off = g.col != g.rowidx
    assert np.all(d[off] >= 0)
    assert np.array_equal(d[off], d[g.tperm[off]])
    assert np.all(d[g.diag_pos] <= 0)


def test_viscosity_symmetric_on_random_field(eos14):
    g = periodic_graph(40)
    U = random_field(np.random.default_rng(0), g)
    d = compute_low_viscosity(g, U, eos14)
    off = g.col != g.rowidx
    assert np.array_equal(d[off], d[g.tperm[off]])


def test_viscosity_rejects_inadmissible(eos14):
    g = periodic_graph(8)
    U = np.tile(primitive_to_conserved(1.0, [0.0], 1.0, eos14), (g.n, 1))
    U[3, 0] = -1.0
    with pytest.raises(InadmissibleStateError):
        compute_low_viscosity(g, U, eos14)


def test_compute_dt(eos14):
    n = 16
    g = assemble_graph(build_interval_mesh(n, 0.0, 1.0, bc="periodic"))
    U = np.tile(primitive_to_conserved(1.0, [0.0], 1.0, eos14), (g.n, 1))
    d = compute_low_viscosity(g, U, eos14)
    h = 1.0 / n
    assert compute_dt(g, d, 0.5) == pytest.approx(0.5 * h / np.sqrt(1.4), rel=1e-13)
    assert compute_dt(g, d, 0.25) == pytest.approx(0.5 * compute_dt(g, d, 0.5), rel=1e-14)
    with pytest.raises(ValueError):
        compute_dt(g, d, 0.0)
    with pytest.raises(EulerFEMError):
        compute_dt(g, np.zeros(g.nnz), 0.5)


def test_dt_halves_under_refinement(eos14):
    dts = []
    for n in (16, 32):
        g = assemble_graph(build_interval_mesh(n, 0.0, 1.0, bc="periodic"))
        U = np.tile(primitive_to_conserved(1.0, [0.0], 1.0, eos14), (g.n, 1))
        d = compute_low_viscosity(g, U, eos14)
        dts.append(compute_dt(g, d, 0.5))
    assert dts[1] == pytest.approx(0.5 * dts[0], rel=1e-13)


def test_low_update_constant_field_fixed_point(eos14):
    g = periodic_graph(20)
    U = np.tile(primitive_to_conserved(1.3, [0.4], 0.9, eos14), (g.n, 1))
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    UL = low_order_update(g, U, d, dt, eos14)
    assert np.allclose(UL, U, atol=1e-14)


def test_low_update_cfl_guard(eos14):
    g = periodic_graph(20)
    U = random_field(np.random.default_rng(1), g)
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    with pytest.raises(CFLViolationError):
        low_order_update(g, U, d, 4.0 * dt, eos14)


def test_low_update_conservation(eos14):
    g = periodic_graph(64)
    U = random_field(np.random.default_rng(2), g)
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    UL = low_order_update(g, U, d, dt, eos14)
    tot0 = (g.mi[:, None] * U).sum(axis=0)
    tot1 = (g.mi[:, None] * UL).sum(axis=0)
    assert np.allclose(tot1, tot0, rtol=1e-12, atol=1e-14)


def test_low_update_equals_convex_combination(eos14):
    g = periodic_graph(32)
    U = random_field(np.random.default_rng(3), g)
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    UL = low_order_update(g, U, d, dt, eos14)
    bar = compute_bar_states(g, U, d, eos14)
    off = g.col != g.rowidx
    coef = np.where(off, 2.0 * dt * d / g.mi[g.rowidx], 0.0)
    coef_diag = 1.0 - np.add.reduceat(coef, g.row_ptr[:-1])
    rec = (
        np.add.reduceat(coef[:, None] * bar, g.row_ptr[:-1], axis=0)
        - coef[g.diag_pos][:, None] * bar[g.diag_pos]
        + coef_diag[:, None] * U
    )
    assert np.allclose(rec, UL, rtol=1e-12, atol=1e-13 * np.abs(UL).max())


def test_bar_states_basics(eos14):
    g = periodic_graph(32)
    U = random_field(np.random.default_rng(4), g)
    d = compute_low_viscosity(g, U, eos14)
    bar = compute_bar_states(g, U, d, eos14)
    # convention and symmetry
    assert np.array_equal(bar[g.diag_pos], U)
    off = g.col != g.rowidx
    assert np.allclose(bar[off], bar[g.tperm[off]], rtol=1e-14)
    # equal states: bar state is that state
    Uc = np.tile(U[0], (g.n, 1))
    dc = compute_low_viscosity(g, Uc, eos14)
    barc = compute_bar_states(g, Uc, dc, eos14)
    assert np.allclose(barc, Uc[0], rtol=1e-14)
    # admissibility and the entropy minimum principle of bar states
    assert np.all(physics.is_admissible(bar, eos14))
    phi = physics.specific_entropy(U, eos14)
    phi_bar = physics.specific_entropy(bar, eos14)
    pair_min = np.minimum(phi[g.rowidx], phi[g.col])
    assert np.all(phi_bar >= pair_min - 1e-11 * np.maximum(1.0, np.abs(pair_min)))


def test_bar_state_degenerate_edge_error(eos14):
    g = periodic_graph(16)
    U = random_field(np.random.default_rng(5), g)
    d = np.zeros(g.nnz)
    with pytest.raises(EulerFEMError, match="degenerate"):
        compute_bar_states(g, U, d, eos14)


def test_sod_interface_bar_state_admissible(eos14):
    g = assemble_graph(build_interval_mesh(10, 0.0, 1.0))
    xs = g.x[:, 0]
    rho = np.where(xs < 0.5, 1.0, 0.125)
    p = np.where(xs < 0.5, 1.0, 0.1)
    U = primitive_to_conserved(rho, np.zeros((g.n, 1)), p, eos14)
    d = compute_low_viscosity(g, U, eos14)
    bar = compute_bar_states(g, U, d, eos14)
    assert np.all(bar[:, 0] > 0)
    assert np.all(physics.is_admissible(bar, eos14))


def test_limiter_bounds(eos14):
    g = periodic_graph(50)
    rng = np.random.default_rng(6)
    U = random_field(rng, g)
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    bar = compute_bar_states(g, U, d, eos14)
    bounds = compute_limiter_bounds(g, U, bar, eos14, d)
    # constant field: degenerate bounds
    Uc = np.tile(primitive_to_conserved(1.0, [0.2], 0.8, eos14), (g.n, 1))
    dc = compute_low_viscosity(g, Uc, eos14)
    bc = compute_limiter_bounds(g, Uc, compute_bar_states(g, Uc, dc, eos14), eos14, dc)
    assert np.allclose(bc.rho_min, 1.0, rtol=1e-14)
    assert np.allclose(bc.rho_max, 1.0, rtol=1e-14)
    assert np.allclose(bc.eps_min, physics.internal_energy(Uc)[0], rtol=1e-13)
    # bounds bracket the low-order update
    UL = low_order_update(g, U, d, dt, eos14)
    assert np.all(UL[:, 0] >= bounds.rho_min - 1e-12 * bounds.rho_max)
    assert np.all(UL[:, 0] <= bounds.rho_max + 1e-12 * bounds.rho_max)
    rhoe_L = physics.internal_energy(UL)
    assert np.all(rhoe_L >= bounds.eps_min - 1e-12 * np.abs(rhoe_L))
    # surrogate minimum is the nodal stencil minimum
    surr = physics.entropy_surrogate(U, eos14)
    smin = np.minimum.reduceat(surr[g.col], g.row_ptr[:-1])
    assert np.allclose(bounds.surr_min, smin, rtol=1e-14)
    # bar-state densities are inside the rho bounds by construction
    off = (g.col != g.rowidx) & (d > 0)
    rows = g.rowidx[off]
    assert np.all(bar[off, 0] >= bounds.rho_min[rows] - 1e-13)
    assert np.all(bar[off, 0] <= bounds.rho_max[rows] + 1e-13)


def test_invariant_domain_random_fields_1d(eos14):
    """200 random admissible fields on a 50-node periodic mesh, one GV1 step
    at CFL 0.5: admissibility and the entropy minimum principle."""
    g = periodic_graph(50)
    rng = np.random.default_rng(7)
    for trial in range(200):
        U = random_field(rng, g, mild=(trial % 2 == 0))
        d = compute_low_viscosity(g, U, eos14)
        dt = compute_dt(g, d, 0.5)
        UL = low_order_update(g, U, d, dt, eos14)
        assert np.all(physics.is_admissible(UL, eos14))
        phi = physics.specific_entropy(U, eos14)
        smin = np.minimum.reduceat(phi[g.col], g.row_ptr[:-1])
        assert np.all(physics.specific_entropy(UL, eos14) >= smin - 1e-12 * np.maximum(1.0, np.abs(smin)))


def test_low_update_2d_crisscross(eos14):
    g = assemble_graph(build_crisscross_mesh(4, 4, (0.0, 1.0, 0.0, 1.0), bc="periodic"))
    rng = np.random.default_rng(8)
    U = random_field(rng, g, dim=2, mild=True)
    d = compute_low_viscosity(g, U, eos14)
    dt = compute_dt(g, d, 0.5)
    UL = low_order_update(g, U, d, dt, eos14)
    assert np.all(physics.is_admissible(UL, eos14))
    tot0 = (g.mi[:, None] * U).sum(axis=0)
    tot1 = (g.mi[:, None] * UL).sum(axis=0)
    assert np.allclose(tot1, tot0, rtol=1e-12, atol=1e-14)
