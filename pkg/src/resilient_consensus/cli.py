"""Command-line front end: ``run``, ``monte-carlo`` and ``compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, reporting
from .adversary import StochasticErrorModel
from .config import ExperimentConfig, load
from .engine import AssumptionError, ConfigError, compare, prepare, run_monte_carlo, run_single

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION = 0, 2, 3

log = logging.getLogger("resilient_consensus")


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else (cfg.out_dir or Path("out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_run(args, cfg: ExperimentConfig) -> int:
    rc = cfg.run
    setup = prepare(rc)
    out = _out_dir(args, cfg)
    res = run_single(rc, 0, record=True, setup=setup)
    s = res.summary
    if cfg.trace:
        reporting.write_trace_csv(res.trace, out / "trace.csv")
    reporting.write_detections_csv(res.trace, out / "detections.csv")
    reporting.write_key_values(reporting.summary_items(s), out / "summary.txt")
    rep = analysis.analyze_run(s, rc, wasserstein=cfg.wasserstein, bounds=cfg.bounds)
    reporting.write_key_values(rep.items, out / "analysis.txt")
    if cfg.wasserstein and rc.algorithm == "sdcc":
        for m in rc.misbehaving:
            M = analysis.malicious_M(s, m.node)
            if isinstance(m.model, StochasticErrorModel) and M:
                reporting.write_cdf_grid(analysis.cdf_grid(m.model, M), out / f"cdf_node{m.node}.csv")
    if not s.residual_connected:
        print("warning: residual graph is disconnected after isolation", file=sys.stderr)
    _say(args, f"{rc.algorithm}: final {s.final_value:.6f} target {s.target:.6f} error {s.error:.3e} isolated {s.isolation_rounds}")
    for k, v in rep.items:
        if "wasserstein" in k and not k.endswith("within_bound"):
            _say(args, f"  {k} = {reporting.fmt(v)}")
    _say(args, f"outputs in {out}")
    return EXIT_OK


def cmd_monte_carlo(args, cfg: ExperimentConfig) -> int:
    rc = cfg.run
    setup = prepare(rc)
    out = _out_dir(args, cfg)
    batch = run_monte_carlo(rc, setup=setup)
    reporting.write_runs_csv(batch, out / "runs.csv", [m.node for m in rc.misbehaving])
    reporting.write_key_values(reporting.batch_items(batch), out / "summary.txt")
    rep = analysis.analyze_batch(batch, rc, bounds=cfg.bounds)
    reporting.write_key_values(rep.items, out / "analysis.txt")
    _say(
        args,
        f"{rc.algorithm} x{batch.count}: mean {batch.mean:.6f} target {batch.target:.6f} variance {batch.variance:.6g}",
    )
    _say(args, f"outputs in {out}")
    return EXIT_OK


def cmd_compare(args, cfg: ExperimentConfig) -> int:
    algos = tuple(args.algorithms.split(",")) if args.algorithms else cfg.compare
    if not algos:
        raise ConfigError("nothing to compare: set [compare] algorithms or pass --algorithms")
    rc = cfg.run
    setup = prepare(rc)
    out = _out_dir(args, cfg)
    rows = compare(rc, algos, setup=setup)
    reporting.write_comparison_csv(rows, out / "comparison.csv")
    for s in rows:
        _say(args, f"{s.algorithm:>6}: final {s.final_value:.6f}  error {s.error:.3e}  isolated {s.isolation_rounds}")
    _say(args, f"outputs in {out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "monte-carlo": cmd_monte_carlo, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-consensus", description="Resilient average consensus experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "one seeded run with trace, summary and analysis"),
        ("monte-carlo", "a batch of independent runs with shared topology and initial states"),
        ("compare", "several algorithms on identical inputs"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="recipe file, or a bundled recipe name")
        sp.add_argument("--out", help="output directory (default: [output] dir, else ./out)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--quiet", action="store_true", help="no console output")
        if name == "monte-carlo":
            sp.add_argument("--runs", type=int, help="override the run count")
        if name == "compare":
            sp.add_argument("--algorithms", help="comma-separated list overriding [compare] algorithms")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if getattr(args, "runs", None) is not None:
            cfg = replace(cfg, run=replace(cfg.run, runs=args.runs))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
