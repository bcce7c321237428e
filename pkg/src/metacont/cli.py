"""Command-line interface.

Exit status is 0 on full success, 2 when some points failed (their rows are
marked in the output) and 1 when the configuration is invalid, in which
case nothing is written.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__, io
from .config import load_config
from .errors import ConfigError, MetacontError

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _common(p):
    p.add_argument("config", help="run configuration (YAML or JSON)")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="simulation seed (overrides simulate.seed)")
    p.add_argument("--tol", type=float, help="Lyapunov solver tolerance (overrides solver.tol)")
    p.add_argument("--h", type=float, help="confidence level h (overrides confidence)")
    p.add_argument("--sigma", type=float, help="noise level (overrides noise.sigma)")
    p.add_argument("--format", choices=("csv", "json"), help="table format")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.add_argument("--workers", type=int, help="threads for path simulation")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="metacont",
        description="Equilibrium continuation with noise-induced neighbourhoods and switching diagnostics.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "pipeline": "continuation, covariances and distances (plus simulate/kramers if configured)",
        "continue": "equilibrium continuation only",
        "analyze": "covariances and distances for branch files of an earlier run",
        "simulate": "continuation, then Monte-Carlo passage counts",
        "kramers": "continuation, then Eyring-Kramers exit-time estimates",
        "bench-lyapunov": "compare Lyapunov solvers over a range of tolerances",
        "bench-distance": "compare warm- and cold-started distance sweeps",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "analyze":
            p.add_argument("--branches", metavar="DIR",
                           help="directory with branch_<name>.csv files (default: output directory)")
    return ap


def _overrides(args, data_has_simulate):
    ov = {
        "output.directory": args.out,
        "solver.tol": args.tol,
        "confidence": args.h,
        "noise.sigma": args.sigma,
        "output.format": args.format,
        "output.figures": True if args.figures else None,
    }
    if data_has_simulate:
        ov["simulate.seed"] = args.seed
        ov["simulate.workers"] = args.workers
    return ov


def _load(args):
    import yaml

    try:
        with open(args.config) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError):
        raw = None  # load_config reports the problem
    has_sim = isinstance(raw, dict) and isinstance(raw.get("simulate"), dict)
    return load_config(args.config, _overrides(args, has_sim))


def _print_table(cols, rows, out):
    out.write("  ".join(f"{c:>18}" for c in cols) + "\n")
    for r in rows:
        out.write("  ".join(f"{io.format_value(v) if not isinstance(v, float) else f'{v:.6g}':>18}"
                            for v in r) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = _load(args)
        from . import pipeline as pl

        cmd = args.command
        if cmd in ("pipeline", "continue", "analyze", "simulate", "kramers"):
            stages = {
                "pipeline": pl.STAGES,
                "continue": ("continue",),
                "analyze": ("covariance", "distance"),
                "simulate": ("continue", "simulate"),
                "kramers": ("continue", "kramers"),
            }[cmd]
            branches = None
            if cmd == "analyze":
                system = pl.build_system(cfg)
                branches = pl.read_branches(args.branches or cfg.output.directory, system)
            result = pl.run_pipeline(cfg, stages=stages, branches=branches, log=log)
            for f in result.failures[:20]:
                log(f"failed: {f}")
            if len(result.failures) > 20:
                log(f"... {len(result.failures) - 20} more failures (see summary.json)")
            log(f"wrote {len(result.files)} files to {cfg.output.directory}")
            return result.status
        if cmd == "bench-lyapunov":
            res = pl.run_pipeline(cfg, stages=("continue",), write=False, log=log)
            branches = {k: r.branch for k, r in res.branches.items()}
            cols, rows = pl.benchmark_solvers(cfg, branches)
            path = io.write_table(f"{cfg.output.directory}/bench_lyapunov.csv", cols, rows,
                                  fmt=cfg.output.format)
        else:
            res = pl.run_pipeline(cfg, stages=("continue", "covariance"), write=False, log=log)
            cols, rows = pl.benchmark_distance(cfg, res.branches)
            path = io.write_table(f"{cfg.output.directory}/bench_distance.csv", cols, rows,
                                  fmt=cfg.output.format)
        _print_table(cols, rows, sys.stdout)
        log(f"wrote {path}")
        # failed benchmark cells are data; only pipeline failures count
        return EXIT_PARTIAL if res.failures else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetacontError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
