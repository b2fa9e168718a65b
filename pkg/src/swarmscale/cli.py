"""Command-line front end.

Subcommands: `run` (one level of a scenario), `compare` (two levels on a
shared initial condition), `coeffs` (closure-coefficient table), and
`validate` (configuration lint + canonical echo).

Exit codes: 0 clean, 2 configuration error, 3 numerical audit failure,
4 solver abort.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_CLEAN = 0
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_SOLVER = 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="swarmscale",
        description="Multiscale follower-leader swarm simulations")
    sub = ap.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one scenario level")
    runp.add_argument("--config", required=True, help="configuration path")
    runp.add_argument("--level", required=True,
                      choices=("micro", "kinetic", "parabolic", "hyperbolic"))
    runp.add_argument("--seed", type=int, default=None, help="seed override")
    runp.add_argument("--out", default=None, help="output directory")
    runp.add_argument("--stride", type=int, default=None,
                      help="output stride override")
    runp.add_argument("--epsilon", type=float, default=None,
                      help="scale-separation override")
    runp.add_argument("--threads", type=int, default=None,
                      help="worker thread cap (results are identical for"
                           " any value)")

    cmp = sub.add_parser("compare", help="compare two levels")
    cmp.add_argument("--config", required=True)
    cmp.add_argument("--levels", required=True,
                     help="pair such as kinetic,parabolic")
    cmp.add_argument("--seed", type=int, default=None)
    cmp.add_argument("--out", default=None)
    cmp.add_argument("--epsilon", type=float, default=None)
    cmp.add_argument("--threads", type=int, default=None)

    cf = sub.add_parser("coeffs", help="emit the closure-coefficient table")
    cf.add_argument("--out", default=None, help="CSV path (default stdout)")
    cf.add_argument("--kappas", default="0,0.5,1,2,4,5,10",
                    help="comma-separated concentrations")

    val = sub.add_parser("validate", help="lint a configuration")
    val.add_argument("--config", required=True)
    return ap


def _apply_threads(threads: int | None) -> None:
    # the numerical core is sequential and deterministic; capping the BLAS
    # pool keeps per-element reduction order fixed for any requested count
    if threads is None or threads < 1:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def _load_scenario(path: str, seed=None, stride=None, epsilon=None):
    from dataclasses import replace

    from .config import parse_config

    with open(path) as fh:
        scenario = parse_config(fh.read())
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    if stride is not None:
        scenario = replace(scenario, stride=stride)
    if epsilon is not None:
        scenario = replace(scenario, epsilon=epsilon)
    return scenario


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))

    from .errors import AuditError, CFLError, ConfigError, SolverError

    try:
        if args.command == "validate":
            from .config import echo_config

            scenario = _load_scenario(args.config)
            sys.stdout.write(echo_config(scenario))
            for w in scenario.warnings:
                sys.stderr.write(f"warning: {w}\n")
            return EXIT_CLEAN
        if args.command == "coeffs":
            from .harness import coefficient_csv_text, coefficient_table

            kappas = tuple(float(k) for k in args.kappas.split(","))
            text = coefficient_csv_text(coefficient_table(kappas=kappas))
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return EXIT_CLEAN
        if args.command == "run":
            from .harness import run

            scenario = _load_scenario(args.config, args.seed, args.stride,
                                      args.epsilon)
            for w in scenario.warnings:
                sys.stderr.write(f"warning: {w}\n")
            report = run(scenario, args.level, out_dir=args.out)
            sys.stdout.write(
                f"level={args.level} frames={len(report.frames)} "
                f"follower_residual={report.audit['follower_residual']} "
                f"leader_residual={report.audit['leader_residual']}\n")
            return EXIT_CLEAN
        if args.command == "compare":
            from .harness import compare

            levels = tuple(p.strip() for p in args.levels.split(","))
            if len(levels) != 2:
                raise ConfigError("--levels must name exactly two levels")
            scenario = _load_scenario(args.config, args.seed,
                                      epsilon=args.epsilon)
            result = compare(scenario, levels[0], levels[1],
                             out_dir=args.out)
            for row in result["rows"]:
                sys.stdout.write(
                    f"t={row['t']:g} l1={row['l1']:.6e} "
                    f"linf={row['linf']:.6e}\n")
            return EXIT_CLEAN
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except AuditError as exc:
        sys.stderr.write(f"audit failure: {exc}\n")
        return EXIT_AUDIT
    except (SolverError, CFLError) as exc:
        sys.stderr.write(f"solver abort: {exc}\n")
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    return EXIT_CLEAN


if __name__ == "__main__":
    sys.exit(main())
