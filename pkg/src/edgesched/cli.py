"""Command-line front end: run, sweep, compare and validate scenarios."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .experiments import (
    execute,
    parse_grid,
    parse_schedulers,
    render_summary,
    run_jobs,
    summary_path,
    sweep_jobs,
    write_csv,
)
from .scenario import ConfigError, ScenarioConfig, load_scenario, parse_override

log = logging.getLogger("edgesched")

EXIT_CONFIG = 2


def _setup_logging() -> None:
    level = os.environ.get("MTEC_LOG", "").strip().upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING) if level else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(args: argparse.Namespace) -> ScenarioConfig:
    overrides = dict(parse_override(s) for s in (args.set or []))
    return load_scenario(args.scenario, overrides)


def _write(path: str, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, rows)
    log.info("wrote %d rows to %s", len(rows), path)


def cmd_run(args: argparse.Namespace) -> int:
    sc = _load(args)
    kinds = parse_schedulers(args.scheduler) if args.scheduler else None
    rows = execute(run_jobs(sc, args.seed, kinds), args.jobs)
    _write(args.out, rows)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    sc = _load(args)
    kinds = parse_schedulers(args.schedulers) if args.schedulers else None
    jobs = sweep_jobs(sc, args.param, parse_grid(args.grid), fixed=args.fixed, seeds=args.seed, schedulers=kinds)
    _write(args.out, execute(jobs, args.jobs))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    sc = _load(args)
    kinds = parse_schedulers(args.schedulers)
    if len(kinds) < 2:
        raise ConfigError("compare needs at least two schedulers")
    seeds = list(sc.seeds if args.seed is None else args.seed)
    rows = execute(run_jobs(sc, seeds, kinds), args.jobs)
    _write(args.out, rows)
    groups = [rows[i * len(seeds) : (i + 1) * len(seeds)] for i in range(len(kinds))]
    side = summary_path(args.out)
    side.write_text(render_summary(groups), encoding="utf-8")
    log.info("wrote summary to %s", side)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    sc = _load(args)
    staged = sc.staged
    print(f"scenario {sc.scenario_id}: ok")
    print(f"  dag {sc.dag.app_id}: {len(sc.dag.tasks)} tasks, {staged.num_stages} stages")
    print(f"  initiators: {', '.join(sc.initiators)}")
    print(f"  participators: {len(sc.participator_ids)}")
    w = sc.weights
    print(f"  weights: alpha={w.alpha} beta={w.beta} gamma={w.gamma} phi={w.phi} kappa={w.kappa}")
    print(f"  eta={sc.eta} seeds={len(sc.seeds)} instances={sc.arrivals.instance_count}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seeds: bool = True) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario field, e.g. weights.beta=0.5 (repeatable)")
        if seeds:
            p.add_argument("--seed", type=int, nargs="+", help="seeds to run (default: the scenario's list)")
            p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("run", help="simulate a scenario for each seed")
    common(p)
    p.add_argument("--scheduler", help="comma-separated scheduler kinds (default: the scenario's)")
    p.add_argument("--out", default="results.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep a weight, eta or the device count")
    common(p)
    p.add_argument("--param", required=True,
                   help="gamma_at_alpha_fixed, beta_at_gamma_fixed, gamma_at_beta_fixed, eta or device_count")
    p.add_argument("--grid", required=True, help="start:stop:step (inclusive) or a comma list")
    p.add_argument("--fixed", type=float, help="held weight for weight sweeps (default 0.1)")
    p.add_argument("--schedulers", help="comma-separated scheduler kinds (default: the scenario's)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="paired comparison of schedulers on identical seeds")
    common(p)
    p.add_argument("--schedulers", default="mtec,round_robin,random,latency_only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="load and check a scenario without running it")
    common(p, seeds=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
