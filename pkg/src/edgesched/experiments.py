"""Batch runs, parameter sweeps and scheduler comparisons that produce CSV rows."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .rng import stream
from .scenario import ConfigError, ScenarioConfig
from .scheduler import SchedulerKind, WeightConfig
from .simulator import SimReport, run_simulation

log = logging.getLogger(__name__)


class SweepParam(str, Enum):
    GAMMA_AT_ALPHA_FIXED = "gamma_at_alpha_fixed"
    BETA_AT_GAMMA_FIXED = "beta_at_gamma_fixed"
    GAMMA_AT_BETA_FIXED = "gamma_at_beta_fixed"
    ETA = "eta"
    DEVICE_COUNT = "device_count"


# value held constant by each weight sweep unless overridden
DEFAULT_FIXED = {
    SweepParam.GAMMA_AT_ALPHA_FIXED: 0.1,
    SweepParam.BETA_AT_GAMMA_FIXED: 0.1,
    SweepParam.GAMMA_AT_BETA_FIXED: 0.1,
}


def fmt(value: float | int | str | None) -> str:
    """Fixed 9-significant-digit rendering; integers and text pass through."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, int)):
        return str(int(value))
    if math.isnan(value):
        return ""
    out = format(value, ".9g")
    return "0" if out == "-0" else out


@dataclass(frozen=True, slots=True)
class ResultRow:
    """One (scenario, scheduler, seed, sweep point) outcome; column order is the CSV header."""

    scenario_id: str
    scheduler: str
    seed: int
    sweep_param: str
    sweep_value: float | None
    alpha: float
    beta: float
    gamma: float
    eta: float
    device_count: int
    instances: int
    successes: int
    mean_latency: float  # nan (written empty) when no instance succeeded
    empirical_pf: float
    mean_cost: float
    max_load_share: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def cells(self) -> list[str]:
        return [fmt(getattr(self, name)) for name in self.header()]


def row_from_report(
    report: SimReport, scenario: ScenarioConfig, sweep_param: str = "", sweep_value: float | None = None
) -> ResultRow:
    w = scenario.weights
    return ResultRow(
        scenario_id=report.scenario_id,
        scheduler=report.scheduler,
        seed=report.seed,
        sweep_param=sweep_param,
        sweep_value=sweep_value,
        alpha=w.alpha,
        beta=w.beta,
        gamma=w.gamma,
        eta=scenario.eta,
        device_count=len(scenario.participator_ids),
        instances=report.total,
        successes=report.successes,
        mean_latency=report.mean_latency,
        empirical_pf=report.empirical_pf,
        mean_cost=report.mean_cost,
        max_load_share=report.max_load_share,
    )


def render_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ResultRow.header())
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[ResultRow]) -> None:
    Path(path).write_text(render_csv(rows), encoding="utf-8")


# --- job execution ---------------------------------------------------------


@dataclass(frozen=True)
class Job:
    order: tuple
    scenario: ScenarioConfig
    scheduler: SchedulerKind
    seed: int
    sweep_param: str = ""
    sweep_value: float | None = None


def _execute(job: Job) -> tuple[tuple, ResultRow]:
    log.debug("run %s %s seed=%d %s=%s", job.scenario.scenario_id, job.scheduler.value, job.seed,
              job.sweep_param, job.sweep_value)
    report = run_simulation(job.scenario, job.scheduler, job.seed)
    return job.order, row_from_report(report, job.scenario, job.sweep_param, job.sweep_value)


def execute(jobs: Sequence[Job], n_jobs: int = 1) -> list[ResultRow]:
    """Run jobs serially or in worker processes; rows come back in job order either way."""
    if n_jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if n_jobs == 1 or len(jobs) <= 1:
        done = [_execute(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            done = list(pool.map(_execute, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    done.sort(key=lambda pair: pair[0])
    return [row for _, row in done]


def parse_schedulers(spec: str | Sequence[str]) -> list[SchedulerKind]:
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    out = []
    for name in names:
        name = name.strip()
        try:
            out.append(SchedulerKind(name))
        except ValueError:
            valid = ", ".join(k.value for k in SchedulerKind)
            raise ConfigError(f"unknown scheduler {name!r} (expected one of: {valid})") from None
    if not out:
        raise ConfigError("no schedulers given")
    return out


def run_jobs(
    scenario: ScenarioConfig,
    seeds: Sequence[int] | None = None,
    schedulers: Sequence[SchedulerKind] | None = None,
) -> list[Job]:
    seeds = list(scenario.seeds if seeds is None else seeds)
    kinds = list(schedulers or [scenario.scheduler])
    return [Job((k_i, s), scenario, kind, s) for k_i, kind in enumerate(kinds) for s in seeds]


# --- sweeps ----------------------------------------------------------------


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` (stop included) or a comma list."""
    spec = spec.strip()
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if not step > 0 or stop < start:
                raise ConfigError(f"grid {spec!r} needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 10) for i in range(n)]
        else:
            values = [float(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {spec!r}; use start:stop:step or a comma list") from None
    if not values:
        raise ConfigError("grid is empty")
    return values


def sweep_weights(param: SweepParam, value: float, fixed: float, base: WeightConfig) -> WeightConfig:
    """Weights for one grid point; the third weight is whatever keeps the sum at 1."""
    derived = round(1.0 - fixed - value, 12)
    if param is SweepParam.GAMMA_AT_ALPHA_FIXED:
        alpha, beta, gamma = fixed, derived, value
    elif param is SweepParam.BETA_AT_GAMMA_FIXED:
        alpha, beta, gamma = derived, value, fixed
    elif param is SweepParam.GAMMA_AT_BETA_FIXED:
        alpha, beta, gamma = derived, fixed, value
    else:
        raise ValueError(f"{param.value} is not a weight sweep")
    try:
        return WeightConfig(alpha, beta, gamma, phi=base.phi, kappa=base.kappa, normalize=base.normalize)
    except ValueError as exc:
        raise ConfigError(f"grid point {param.value}={value} with fixed {fixed}: {exc}") from None


def device_subset(participators: Sequence[str], count: int, seed: int) -> list[str]:
    """First ``count`` devices of a seeded permutation, so smaller subsets nest in larger ones."""
    ids = sorted(participators)
    if not 1 <= count <= len(ids):
        raise ConfigError(f"device_count {count} outside 1..{len(ids)}")
    perm = stream(seed, "device_subset").permutation(len(ids))
    return sorted(ids[i] for i in perm[:count])


def sweep_jobs(
    scenario: ScenarioConfig,
    param: SweepParam | str,
    grid: Sequence[float],
    *,
    fixed: float | None = None,
    seeds: Sequence[int] | None = None,
    schedulers: Sequence[SchedulerKind] | None = None,
) -> list[Job]:
    """Every (grid point, scheduler, seed) job; invalid grid points fail before anything runs."""
    try:
        param = SweepParam(param)
    except ValueError:
        valid = ", ".join(p.value for p in SweepParam)
        raise ConfigError(f"unknown sweep parameter {param!r} (expected one of: {valid})") from None
    seeds = list(scenario.seeds if seeds is None else seeds)
    kinds = list(schedulers or [scenario.scheduler])
    if fixed is None:
        fixed = DEFAULT_FIXED.get(param)

    points: list[tuple[float, object]] = []
    for value in grid:
        if param is SweepParam.ETA:
            if not value >= 1:
                raise ConfigError(f"eta grid point {value} must be >= 1")
            points.append((value, scenario.with_eta(value)))
        elif param is SweepParam.DEVICE_COUNT:
            if value != int(value):
                raise ConfigError(f"device_count grid point {value} is not an integer")
            device_subset(scenario.participator_ids, int(value), 0)  # range check
            points.append((value, None))
        else:
            points.append((value, scenario.with_weights(sweep_weights(param, value, fixed, scenario.weights))))

    jobs = []
    for p_i, (value, cfg) in enumerate(points):
        for k_i, kind in enumerate(kinds):
            for s in seeds:
                sc = cfg
                if sc is None:
                    sc = scenario.with_participators(device_subset(scenario.participator_ids, int(value), s))
                jobs.append(Job((p_i, k_i, s), sc, kind, s, param.value, value))
    return jobs


# --- comparison summary ----------------------------------------------------


SUMMARY_HEADER = ["kind", "scheduler", "reference", "runs", "instances", "successes",
                  "mean_latency", "empirical_pf", "mean_cost", "max_load_share"]


@dataclass(frozen=True)
class Aggregate:
    scheduler: str
    runs: int
    instances: int
    successes: int
    mean_latency: float
    empirical_pf: float
    mean_cost: float
    max_load_share: float


def aggregate(rows: Sequence[ResultRow], scheduler: str | None = None) -> Aggregate:
    """Pool rows, weighting by instances (latency by successful instances)."""
    if not rows:
        raise ValueError("nothing to aggregate")
    n = sum(r.instances for r in rows)
    ok = sum(r.successes for r in rows)
    lat = math.fsum(r.mean_latency * r.successes for r in rows if r.successes) / ok if ok else math.nan
    return Aggregate(
        scheduler=scheduler or rows[0].scheduler,
        runs=len(rows),
        instances=n,
        successes=ok,
        mean_latency=lat,
        empirical_pf=(n - ok) / n if n else 0.0,
        mean_cost=math.fsum(r.mean_cost * r.instances for r in rows) / n if n else 0.0,
        max_load_share=max(r.max_load_share for r in rows),
    )


def improvement_pct(candidate: float, reference: float) -> float:
    """Percent by which ``candidate`` is lower than ``reference`` (positive is better)."""
    if math.isnan(candidate) or math.isnan(reference):
        return math.nan
    if reference == 0:
        return 0.0 if candidate == 0 else -math.inf
    return 100.0 * (reference - candidate) / reference


def render_summary(groups: Sequence[Sequence[ResultRow]]) -> str:
    """Aggregate block per group, then pairwise improvement of each group over every other."""
    aggs = [aggregate(g) for g in groups]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for a in aggs:
        w.writerow(["aggregate", a.scheduler, "", a.runs, a.instances, a.successes,
                    fmt(a.mean_latency), fmt(a.empirical_pf), fmt(a.mean_cost), fmt(a.max_load_share)])
    for i, a in enumerate(aggs):
        for j, b in enumerate(aggs):
            if i == j:
                continue
            w.writerow(["improvement_pct", a.scheduler, b.scheduler, "", "", "",
                        fmt(improvement_pct(a.mean_latency, b.mean_latency)),
                        fmt(improvement_pct(a.empirical_pf, b.empirical_pf)),
                        fmt(improvement_pct(a.mean_cost, b.mean_cost)),
                        fmt(improvement_pct(a.max_load_share, b.max_load_share))])
    return buf.getvalue()


def summary_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.csv")


__all__ = [
    "Aggregate",
    "Job",
    "ResultRow",
    "SweepParam",
    "aggregate",
    "device_subset",
    "execute",
    "fmt",
    "improvement_pct",
    "parse_grid",
    "parse_schedulers",
    "render_csv",
    "render_summary",
    "row_from_report",
    "run_jobs",
    "summary_path",
    "sweep_jobs",
    "sweep_weights",
    "write_csv",
]
