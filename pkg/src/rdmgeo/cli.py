"""Command-line driver: run experiments, sweep parameters, audit RDM files
and solve raw SDP problem files.

    rdmgeo run   --model hubbard --sites 6 --t 1 --U 10 --N 6 --all --out out/
    rdmgeo sweep --model hubbard --sites 6 --N 6 --values 1,2,4,6,8,10,20,40
    rdmgeo check --rdm D_var.rdm --out report.json
    rdmgeo solve-sdp problem.sdp

All tolerances are exposed as flags with the numerical-zero default 1e-9.
A full configuration can also be supplied as JSON via --config; explicit
flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import report as report_mod
from . import sdp as sdp_mod
from .report import ConfigError, ExperimentConfig

__all__ = ["main", "build_parser"]


def _add_system_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with an ExperimentConfig")
    p.add_argument("--model", choices=["hubbard", "random", "integral-file"])
    p.add_argument("--sites", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--U", type=float)
    bc = p.add_mutually_exclusive_group()
    bc.add_argument("--periodic", dest="periodic", action="store_true",
                    default=None)
    bc.add_argument("--open", dest="periodic", action="store_false")
    p.add_argument("--spatial", dest="spatial_count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--integrals", help="integral file path")
    p.add_argument("--N", type=int)
    p.add_argument("--Sz", dest="sz2", type=int,
                   help="twice the spin projection of the FCI sector")
    p.add_argument("--conditions",
                   help="comma list from d,q,g,t1,t2,t2p (default all)")
    p.add_argument("--null-tol", dest="null_tol", type=float)
    p.add_argument("--sdp-tol", dest="sdp_tol", type=float)
    p.add_argument("--out", dest="out_dir")


def _config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    for key in ("model", "sites", "t", "U", "periodic", "spatial_count",
                "seed", "integrals", "N", "sz2", "null_tol", "sdp_tol",
                "out_dir"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "conditions", None):
        data["conditions"] = tuple(args.conditions.split(","))
    if getattr(args, "artifacts", None):
        data["artifacts"] = tuple(args.artifacts.split(","))
    if getattr(args, "all", False):
        data["artifacts"] = ("summary", "eigenvalues", "figures", "rdms",
                             "exact-audit")
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rdmgeo",
        description="exact and variational 2-RDMs with geometric "
                    "N-representability audits")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one end-to-end experiment")
    _add_system_flags(run)
    run.add_argument("--artifacts",
                     help="comma list: summary,eigenvalues,figures,rdms,"
                          "exact-audit")
    run.add_argument("--all", action="store_true",
                     help="emit every artifact")

    sweep = sub.add_parser("sweep", help="run over a parameter list")
    _add_system_flags(sweep)
    sweep.add_argument("--parameter", default="U",
                       help="config key to sweep (default U)")
    sweep.add_argument("--values", required=True,
                       help="comma list of parameter values")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="concurrent sweep points")

    check = sub.add_parser("check", help="audit an external D-matrix file")
    check.add_argument("--rdm", required=True, help="RDM text file (kind D)")
    check.add_argument("--null-tol", dest="null_tol", type=float,
                       default=1e-9)
    check.add_argument("--bounds",
                       help="JSON object overriding BoundSet fields")
    check.add_argument("--out", help="write the report JSON here "
                                     "(default stdout)")

    solve = sub.add_parser("solve-sdp", help="solve a problem file")
    solve.add_argument("problem", help="path to an sdp problem file")
    solve.add_argument("--tol", type=float, default=1e-9)
    solve.add_argument("--max-iter", type=int, default=200)
    solve.add_argument("--out", help="write the solution summary JSON here")
    return ap


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    outcome = report_mod.execute_run(cfg)
    if outcome.ok:
        print(json.dumps(outcome.summary, sort_keys=True, indent=2))
        return 0
    print(f"run failed during {outcome.failed_stage}: "
          f"{outcome.summary.get('error')}", file=sys.stderr)
    print(f"partial outputs marked in {cfg.out_dir}/manifest.json",
          file=sys.stderr)
    return 1


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    outcome = report_mod.execute_sweep(cfg, args.parameter, values,
                                       jobs=args.jobs)
    print(f"wrote {cfg.out_dir}/sweep.csv")
    return 0 if outcome.ok else 1


def _cmd_check(args) -> int:
    bounds = json.loads(args.bounds) if args.bounds else None
    result = report_mod.audit_rdm_file(args.rdm, args.null_tol, bounds)
    text = json.dumps(result, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_solve_sdp(args) -> int:
    with open(args.problem) as fh:
        problem = sdp_mod.load_problem(fh.read())
    sol = sdp_mod.solve(problem, sdp_mod.SdpConfig(tol=args.tol,
                                                   max_iter=args.max_iter))
    summary = {
        "status": sol.status,
        "iterations": sol.iterations,
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "residuals": sol.residuals,
        "dual_vector": [float(v) for v in sol.y],
    }
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if sol.status == "optimal" else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "solve-sdp":
            return _cmd_solve_sdp(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"missing input: {err}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
