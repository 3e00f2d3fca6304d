"""Command-line interface.

    eulerfem solve --config run.cfg
    eulerfem convergence --config run.cfg --levels 5 [--out table.csv]
    eulerfem riemann --left 1,0,1 --right 0.125,0,0.1 [--gamma 1.4] [--out t.csv]

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import driver, riemann
from .errors import ConfigError, EulerFEMError, MeshFormatError, SolverFailure
from .physics import EquationOfState, primitive_to_conserved


def _parse_state(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"state must be rho,v,p — got {text!r}")
    try:
        rho, v, p = (float(s) for s in parts)
    except ValueError as exc:
        raise ConfigError(f"bad state {text!r}") from exc
    if rho <= 0.0 or p <= 0.0:
        raise ConfigError("state needs rho > 0 and p > 0")
    return rho, v, p


def _cmd_solve(args) -> int:
    cfg = driver.parse_config(args.config)
    report = driver.run_case(cfg)
    print(f"case={report.case} dofs={report.dofs} steps={report.steps} t={report.final_time:.6g}")
    for p, val in sorted(report.deltas.items()):
        print(f"delta_{p} = {val:.6e}")
    print(f"wall_time = {report.wall_time:.2f}s")
    return 0


def _cmd_convergence(args) -> int:
    cfg = driver.parse_config(args.config)
    rows = driver.convergence_study(cfg, args.levels, out_path=args.out)
    print("dofs,delta,rate")
    for dofs, delta, rate in rows:
        print(f"{dofs},{delta:.6e},{'' if rate is None else f'{rate:.4f}'}")
    return 0


def _cmd_riemann(args) -> int:
    eos = EquationOfState(gamma=args.gamma, b=args.covolume)
    rho_l, v_l, p_l = _parse_state(args.left)
    rho_r, v_r, p_r = _parse_state(args.right)
    wl = primitive_to_conserved(rho_l, [v_l], p_l, eos)
    wr = primitive_to_conserved(rho_r, [v_r], p_r, eos)
    n = np.array([1.0])
    ptilde = riemann.two_rarefaction_pressure(wl, wr, eos)
    from .riemann import wave_speed_core

    _, lam1, lam3, lam_max = wave_speed_core(rho_l, v_l, p_l, rho_r, v_r, p_r, eos.gamma, eos.b)
    if eos.b == 0.0:
        p_star, _ = riemann.exact_star_state(wl, wr, eos)
        ex1, ex3 = riemann.exact_fan_speeds(wl, wr, eos)
        oracle = [f"{p_star:.17g}", f"{ex1:.17g}", f"{ex3:.17g}"]
    else:
        oracle = ["nan", "nan", "nan"]  # exact solver is ideal-gas only
    header = "ptilde,lambda1_minus,lambda3_plus,lambda_max,pstar_exact,lambda1_exact,lambda3_exact"
    row = f"{ptilde:.17g},{lam1:.17g},{lam3:.17g},{lam_max:.17g}," + ",".join(oracle)
    if args.out:
        with open(args.out, "w") as f:
            f.write(header + "\n" + row + "\n")
    print(header)
    print(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulerfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one benchmark configuration")
    p_solve.add_argument("--config", required=True)
    p_solve.set_defaults(fn=_cmd_solve)

    p_conv = sub.add_parser("convergence", help="run a refinement study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--levels", type=int, required=True)
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(fn=_cmd_convergence)

    p_r = sub.add_parser("riemann", help="tabulate wave-speed bounds vs the exact solver")
    p_r.add_argument("--left", required=True, help="rho,v,p")
    p_r.add_argument("--right", required=True, help="rho,v,p")
    p_r.add_argument("--gamma", type=float, default=1.4)
    p_r.add_argument("--covolume", type=float, default=0.0)
    p_r.add_argument("--out", default=None)
    p_r.set_defaults(fn=_cmd_riemann)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, MeshFormatError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (SolverFailure, EulerFEMError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
