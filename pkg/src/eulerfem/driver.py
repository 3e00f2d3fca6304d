"""Time integration and benchmark orchestration.

One forward-Euler map per SSP RK(3,3) stage: GV1 update, provisional
high-order update, convex limiting, then boundary conditions.  The time step
dt = CFL * min_i m_i/|d_ii| is recomputed every step from the current state;
if an inner RK stage trips the convexity hypothesis (its own viscosity grew),
the whole step is retried with dt/2.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import benchmarks, highorder, limiter, loworder, physics
from .errors import CFLViolationError, ConfigError, InadmissibleStateError, SolverFailure
from .graph import DiscreteGraph, apply_slip_wall_modification, assemble_graph
from .mesh import MARKER_INFLOW, Mesh
from .physics import EquationOfState

VISCOSITY_MODES = ("low", "ev", "smooth", "galerkin")
LIMITER_SETS = ("none", "density", "density+energy", "density+entropy", "all")
RELAXATION_MODES = ("none", "average", "minmod")
SMOOTHNESS_FIELDS = ("entropy", "density", "pressure_entropy")
MAX_DT_RETRIES = 12


@dataclass
class SolverConfig:
    case: str = "sod"
    resolution: int = 200
    viscosity: str = "ev"
    limiters: str = "density+entropy"
    relaxation: str = "average"
    relax_entropy: bool = True
    psi_exponent: int = 4
    smoothness_field: str = "entropy"
    cfl: Optional[float] = None
    final_time: Optional[float] = None
    k_max: int = 1
    mass: str = "consistent"
    gamma: Optional[float] = None
    covolume: float = 0.0
    error_norm: Optional[str] = None
    output_csv: Optional[str] = None
    output_vtk: Optional[str] = None
    output_schlieren: Optional[str] = None

    def validate(self) -> None:
        if self.case not in benchmarks.CASE_NAMES:
            raise ConfigError(f"unknown case {self.case!r}; known: {benchmarks.CASE_NAMES}")
        if self.viscosity not in VISCOSITY_MODES:
            raise ConfigError(f"viscosity must be one of {VISCOSITY_MODES}")
        if self.limiters not in LIMITER_SETS:
            raise ConfigError(f"limiters must be one of {LIMITER_SETS}")
        if self.relaxation not in RELAXATION_MODES:
            raise ConfigError(f"relaxation must be one of {RELAXATION_MODES}")
        if self.smoothness_field not in SMOOTHNESS_FIELDS:
            raise ConfigError(f"smoothness_field must be one of {SMOOTHNESS_FIELDS}")
        if self.psi_exponent not in (2, 4):
            raise ConfigError("psi_exponent must be 2 or 4")
        if self.mass not in ("consistent", "lumped"):
            raise ConfigError("mass must be 'consistent' or 'lumped'")
        if self.cfl is not None and not 0.0 < self.cfl <= 1.0:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.resolution < 3:
            raise ConfigError("resolution too small")
        if self.error_norm is not None and self.error_norm not in ("1", "2", "inf"):
            raise ConfigError("error_norm must be '1', '2' or 'inf'")


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(path) -> SolverConfig:
    """key = value file, '#' comments; unknown keys are errors."""
    cfg = SolverConfig()
    fields = {f: cfg.__dataclass_fields__[f].type for f in cfg.__dataclass_fields__}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = text.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                if key in ("resolution", "psi_exponent", "k_max"):
                    parsed = int(value)
                elif key in ("cfl", "final_time", "gamma", "covolume"):
                    parsed = float(value)
                elif key == "relax_entropy":
                    parsed = _BOOL[value.lower()]
                else:
                    parsed = value
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
            setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


@dataclass
class BoundaryConditions:
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray
    wall_nodes: np.ndarray
    wall_normals: np.ndarray


def apply_boundary_conditions(U: np.ndarray, bc: BoundaryConditions) -> np.ndarray:
    """Dirichlet overwrite + slip-wall momentum projection m -= (m.n) n."""
    out = U.copy()
    if len(bc.dirichlet_nodes):
        out[bc.dirichlet_nodes] = bc.dirichlet_values
    if len(bc.wall_nodes):
        m = out[bc.wall_nodes, 1:-1]
        mn = np.einsum("ik,ik->i", m, bc.wall_normals)
        out[bc.wall_nodes, 1:-1] = m - mn[:, None] * bc.wall_normals
    return out


def ssp_rk33_step(U: np.ndarray, stepper: Callable, dt: float) -> np.ndarray:
    """u1 = L(u); u2 = 3/4 u + 1/4 L(u1); u_new = 1/3 u + 2/3 L(u2)."""
    u1 = stepper(U, dt)
    u2 = 0.75 * U + 0.25 * stepper(u1, dt)
    return U / 3.0 + (2.0 / 3.0) * stepper(u2, dt)


@dataclass
class Problem:
    config: SolverConfig
    case: benchmarks.BenchmarkCase
    mesh: Mesh
    graph: DiscreteGraph
    eos: EquationOfState
    bc: BoundaryConditions
    U0: np.ndarray


def build_problem(cfg: SolverConfig) -> Problem:
    cfg.validate()
    try:
        case = benchmarks.get_case(cfg.case, gamma=cfg.gamma, covolume=cfg.covolume)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eos = case.eos
    mesh = case.build_mesh(cfg.resolution)
    graph = assemble_graph(mesh)
    if len(graph.wall_nodes):
        graph = apply_slip_wall_modification(graph, mesh)
    U0 = case.initial(graph.x)
    physics.check_admissible(U0, eos, context="initial data")
    dirichlet = np.nonzero(graph.markers == MARKER_INFLOW)[0]
    bc = BoundaryConditions(
        dirichlet_nodes=dirichlet,
        dirichlet_values=U0[dirichlet].copy(),
        wall_nodes=graph.wall_nodes,
        wall_normals=graph.wall_normals,
    )
    U0 = apply_boundary_conditions(U0, bc)
    return Problem(config=cfg, case=case, mesh=mesh, graph=graph, eos=eos, bc=bc, U0=U0)


def stage_options(cfg: SolverConfig):
    from . import pipeline

    visc = {"low": pipeline.VISC_LOW, "ev": pipeline.VISC_EV, "smooth": pipeline.VISC_SMOOTH,
            "galerkin": pipeline.VISC_GALERKIN}[cfg.viscosity]
    return pipeline.StageOptions(
        viscosity=visc,
        psi_exponent=cfg.psi_exponent,
        smoothness_field=cfg.smoothness_field,
        limiters=cfg.limiters,
        relaxation=cfg.relaxation,
        relax_entropy=cfg.relax_entropy,
        k_max=cfg.k_max,
        mass_consistent=(cfg.mass == "consistent"),
    )


def make_euler_stepper(problem: Problem) -> Callable:
    """The forward-Euler map L(U, dt) of the configured scheme, BCs included.

    Uses the fused kernels in pipeline.py; see make_reference_stepper for the
    op-by-op composition the unit tests pin down.
    """
    from . import pipeline

    opts = stage_options(problem.config)
    graph, eos = problem.graph, problem.eos

    def stepper(U: np.ndarray, dt: float, d_low: np.ndarray | None = None) -> np.ndarray:
        out = pipeline.euler_stage(graph, U, dt, eos, opts, d_low=d_low)
        return apply_boundary_conditions(out, problem.bc)

    return stepper


def make_reference_stepper(problem: Problem) -> Callable:
    """Same map as make_euler_stepper, composed from the module-level ops."""
    cfg = problem.config
    graph = problem.graph
    eos = problem.eos

    def stepper(U: np.ndarray, dt: float, d_low: np.ndarray | None = None) -> np.ndarray:
        if cfg.viscosity == "galerkin":
            out = highorder.galerkin_update(graph, U, dt, eos, mass_mode=cfg.mass)
            return apply_boundary_conditions(out, problem.bc)
        if d_low is None:
            d_low = loworder.compute_low_viscosity(graph, U, eos)
        U_L = loworder.low_order_update(graph, U, d_low, dt, eos)
        if cfg.viscosity == "low":
            return apply_boundary_conditions(U_L, problem.bc)

        if cfg.viscosity == "ev":
            R = highorder.entropy_commutator(graph, U, eos)
            d_high = highorder.high_viscosity_ev(graph, d_low, R)
        else:
            g_field = _smoothness_field(U, eos, cfg.smoothness_field)
            alpha = highorder.smoothness_indicator(graph, g_field)
            d_high = highorder.high_viscosity_smooth(graph, d_low, alpha, cfg.psi_exponent)
        U_H, res = highorder.high_order_update(
            graph, U, d_high, dt, eos, mass_mode=cfg.mass, return_info=True
        )
        if cfg.limiters == "none":
            return apply_boundary_conditions(U_H, problem.bc)

        bar = loworder.compute_bar_states(graph, U, d_low, eos)
        bounds = loworder.compute_limiter_bounds(graph, U, bar, eos, d_low)
        if cfg.relaxation != "none":
            bounds = limiter.relax_bounds(graph, bounds, U, cfg.relaxation)
        if cfg.relax_entropy and cfg.limiters in ("density+entropy", "all"):
            bounds.surr_min_rel = limiter.relax_entropy_bound(graph, bounds.surr_min, U, eos)
        A = limiter.assemble_antidiffusion(
            graph, U, U_L, U_H, d_low, d_high, dt, mass_mode=cfg.mass, solve_slack=res
        )
        out = limiter.iterative_limiting(
            graph, U_L, A, bounds, eos, k_max=cfg.k_max, limiter_set=cfg.limiters
        )
        return apply_boundary_conditions(out, problem.bc)

    return stepper


def _smoothness_field(U, eos, which):
    if which == "entropy":
        return physics.mathematical_entropy(U, eos)
    if which == "density":
        return physics.density(U)
    return physics.pressure(U, eos) ** (1.0 / eos.gamma)


@dataclass
class RunReport:
    case: str
    dofs: int
    steps: int
    final_time: float
    deltas: dict = field(default_factory=dict)
    wall_time: float = 0.0
    U: Optional[np.ndarray] = None
    problem: Optional[Problem] = None


def run_case(cfg: SolverConfig) -> RunReport:
    """Integrate the configured benchmark to its final time.

    Every accepted step is hard-asserted admissible; CFL violations at inner
    RK stages retry the step with half the dt.  Raises SolverFailure with the
    failing step on any unrecoverable error.
    """
    problem = build_problem(cfg)
    graph, eos = problem.graph, problem.eos
    stepper = make_euler_stepper(problem)
    cfl = cfg.cfl if cfg.cfl is not None else problem.case.cfl
    t_end = cfg.final_time if cfg.final_time is not None else problem.case.t_final

    U = problem.U0.copy()
    t = problem.case.t_start
    steps = 0
    started = time.perf_counter()
    from . import pipeline

    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        try:
            d_low = pipeline.compute_pair_viscosity(graph, U, eos)
            dt = loworder.compute_dt(graph, d_low, cfl)
        except Exception as exc:
            raise SolverFailure(f"step {steps}: {exc}", step=steps, time=t) from exc
        dt = min(dt, t_end - t)

        def make_stage_fn():
            # the viscosity computed for dt is valid for the first stage only
            calls = [0]

            def stage_fn(V, h):
                calls[0] += 1
                return stepper(V, h, d_low if calls[0] == 1 else None)

            return stage_fn

        for attempt in range(MAX_DT_RETRIES + 1):
            try:
                U_new = ssp_rk33_step(U, make_stage_fn(), dt)
                break
            except CFLViolationError:
                if attempt == MAX_DT_RETRIES:
                    raise SolverFailure(
                        f"step {steps}: CFL retries exhausted", step=steps, time=t
                    ) from None
                dt *= 0.5
            except Exception as exc:
                raise SolverFailure(f"step {steps}: {exc}", step=steps, time=t) from exc
        try:
            physics.check_admissible(U_new, eos, context=f"accepted step {steps}")
        except InadmissibleStateError as exc:
            raise SolverFailure(f"step {steps}: {exc}", step=steps, time=t) from exc
        U = U_new
        t += dt
        steps += 1
    wall = time.perf_counter() - started

    report = RunReport(
        case=cfg.case, dofs=graph.n, steps=steps, final_time=t, wall_time=wall, U=U, problem=problem
    )
    if problem.case.exact is not None:
        exact = problem.case.exact(graph.x, t)
        for p in ("1", "2", "inf"):
            report.deltas[p] = error_indicator(U, exact, p, graph)
    _write_outputs(cfg, problem, U)
    return report


def _write_outputs(cfg: SolverConfig, problem: Problem, U: np.ndarray) -> None:
    from . import output

    if cfg.output_csv:
        output.write_solution_csv(cfg.output_csv, problem.graph, U, problem.eos)
    if cfg.output_vtk:
        output.write_vtk(cfg.output_vtk, problem.mesh, problem.graph, U, problem.eos)
    if cfg.output_schlieren:
        output.write_schlieren_csv(cfg.output_schlieren, problem.graph, U)


def _lumped_norm(v: np.ndarray, w: np.ndarray, p: str) -> float:
    if p == "inf":
        return float(np.max(np.abs(v)))
    q = 1.0 if p == "1" else 2.0
    return float(np.sum(w * np.abs(v) ** q) ** (1.0 / q))


def error_indicator(state: np.ndarray, exact: np.ndarray, p, graph: DiscreteGraph) -> float:
    """Consolidated indicator: relative lumped-mass L^p errors of rho, m, E added up.

    Momentum uses the pointwise Euclidean magnitude.  With nodal quadrature
    this is simultaneously the interpolated variant (the exact field enters
    only through its nodal values).
    """
    p = str(p)
    if p not in ("1", "2", "inf"):
        raise ValueError("p must be 1, 2 or 'inf'")
    rho_e = physics.density(exact)
    if np.any(rho_e <= 0.0):
        raise InadmissibleStateError("exact solution has nonpositive density at a node")
    if np.any(physics.internal_energy(exact) <= 0.0):
        raise InadmissibleStateError("exact solution has nonpositive internal energy at a node")
    w = graph.mi
    total = 0.0
    for err_field, ref_field in (
        (physics.density(state) - rho_e, rho_e),
        (
            np.linalg.norm(physics.momentum(state) - physics.momentum(exact), axis=1),
            np.linalg.norm(physics.momentum(exact), axis=1),
        ),
        (physics.total_energy(state) - physics.total_energy(exact), physics.total_energy(exact)),
    ):
        num = _lumped_norm(err_field, w, p)
        den = _lumped_norm(ref_field, w, p)
        if den == 0.0:
            if num > 0.0:
                return float("inf")
            continue
        total += num / den
    return total


def convergence_rate(dofs_coarse, delta_coarse, dofs_fine, delta_fine, dim) -> float:
    """log(delta ratio) / log(dof ratio^(1/dim)); matches pairwise table rates."""
    return float(
        np.log(delta_coarse / delta_fine) / np.log((dofs_fine / dofs_coarse) ** (1.0 / dim))
    )


def convergence_study(cfg: SolverConfig, n_levels: int, out_path=None):
    """Run n_levels uniform refinements; rows of (dofs, delta, rate).

    1D resolutions double from cfg.resolution; the vortex walks refinement
    levels cfg.resolution, +1, ...  The error norm defaults to the case's.
    """
    if n_levels < 2:
        raise ConfigError("need at least 2 levels")
    case = benchmarks.get_case(cfg.case)
    norm = cfg.error_norm if cfg.error_norm is not None else case.error_norm
    rows = []
    for level in range(n_levels):
        res = cfg.resolution * 2**level if case.dim == 1 else cfg.resolution + level
        report = run_case(replace(cfg, resolution=res))
        if norm not in report.deltas:
            raise ConfigError(f"case {cfg.case} has no exact solution; cannot run a study")
        delta = report.deltas[norm]
        rate = (
            convergence_rate(rows[-1][0], rows[-1][1], report.dofs, delta, case.dim)
            if rows
            else None
        )
        rows.append((report.dofs, delta, rate))
    if out_path is not None:
        write_convergence_csv(out_path, rows)
    return rows


def write_convergence_csv(path, rows) -> None:
    with open(path, "w") as f:
        f.write("dofs,delta,rate\n")
        for dofs, delta, rate in rows:
            rate_s = "" if rate is None else f"{rate:.4f}"
            f.write(f"{dofs},{delta:.6e},{rate_s}\n")
