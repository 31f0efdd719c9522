"""Initiator-side placement: latency ranking, replication, and baselines."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cluster import (
    DeviceProfile,
    DeviceState,
    LinkTable,
    SizeRegression,
    UnprofiledDevice,
    device_failure_prob,
    estimate_exec_time,
    predict_output_size,
)
from .dag import StagedDag, TaskSpec

WEIGHT_TOLERANCE = 1e-9


class NoEligibleDevice(LookupError):
    """No alive, profiled device has enough free memory for the task."""

    def __init__(self, task_id: str) -> None:
        super().__init__(f"no eligible device for task {task_id!r}")
        self.task_id = task_id


class SchedulerKind(str, enum.Enum):
    MTEC = "mtec"
    ROUND_ROBIN = "round_robin"
    RANDOM = "random"
    LATENCY_ONLY = "latency_only"


BASELINE_KINDS = (SchedulerKind.ROUND_ROBIN, SchedulerKind.RANDOM, SchedulerKind.LATENCY_ONLY)


@dataclass(frozen=True, slots=True)
class WeightConfig:
    alpha: float = 0.4
    beta: float = 0.4
    gamma: float = 0.2
    phi: float = 0.01
    kappa: int = 3
    # score on latency / cost relative to the queue head instead of raw units
    normalize: bool = True

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"weight {name} must be a finite value >= 0, got {v}")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(
                f"weights must lie on the simplex: alpha + beta + gamma = {total:.12g}, expected 1"
            )
        if not 0 < self.phi <= 1:
            raise ValueError(f"phi must be in (0, 1], got {self.phi}")
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ValueError(f"kappa must be an integer >= 1, got {self.kappa}")


@dataclass(frozen=True, slots=True)
class CandidateEntry:
    device_id: str
    est_exec: float
    est_model_dl: float
    est_data_in: float
    est_total: float


@dataclass(frozen=True, slots=True)
class TaskInput:
    """One input of a task: its (predicted) size and the devices holding it."""

    size: float
    sources: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ReplicationStep:
    candidate: str
    score_before: float
    score_new: float
    failure_before: float
    failure_new: float
    accepted: bool


@dataclass(frozen=True)
class TaskPlacement:
    task_id: str
    primary_device: str
    replicas: tuple[str, ...]
    est_latency: float
    est_failure: float
    est_cost: float
    entries: tuple[CandidateEntry, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if not 1 <= len(self.replicas) or self.replicas[0] != self.primary_device:
            raise ValueError("replicas must start with the primary device")
        if len(set(self.replicas)) != len(self.replicas):
            raise ValueError("replica devices must be distinct")


@dataclass(frozen=True)
class Placement:
    staged: StagedDag
    tasks: Mapping[str, TaskPlacement]
    est_app_latency: float
    est_app_failure: float
    est_app_cost: float
    scheduler: SchedulerKind = SchedulerKind.MTEC

    def replica_count(self) -> int:
        return sum(len(tp.replicas) for tp in self.tasks.values())


class RoundRobin:
    """Cursor over devices in id order, shared across tasks and instances."""

    def __init__(self, position: int = 0) -> None:
        self.position = position


# --- per-task estimates ----------------------------------------------------


def _is_eligible(device: DeviceState, task: TaskSpec) -> bool:
    return (
        device.alive
        and task.task_type in device.profile.interference_model
        and device.mem_free >= task.mem_required
    )


def pick_source(sources: Sequence[str], dst: str, links: LinkTable) -> str:
    """Replica of an input with the fastest link to ``dst``; ties by id."""
    return min(sources, key=lambda s: (-links.speed_between(s, dst), s))


def candidate_entry(
    task: TaskSpec,
    device: DeviceState,
    links: LinkTable,
    inputs: Sequence[TaskInput] = (),
    model_source: str | None = None,
) -> CandidateEntry | None:
    """Latency decomposition of ``task`` on ``device``, or None if ineligible."""
    if not _is_eligible(device, task):
        return None
    dev = device.device_id
    est_exec = estimate_exec_time(device, task)
    est_model = 0.0
    if task.model_id is not None and task.model_id not in device.profile.cached_models:
        if model_source is None:
            raise ValueError(f"task {task.task_id!r} needs a model source for {task.model_id!r}")
        est_model = links.transfer_time(task.model_size, model_source, dev)
    est_data = 0.0
    for inp in inputs:
        if dev in inp.sources or inp.size <= 0:
            continue
        src = pick_source(inp.sources, dev, links)
        est_data += links.transfer_time(inp.size, src, dev)
    return CandidateEntry(dev, est_exec, est_model, est_data, est_exec + est_model + est_data)


def min_latency_queue(
    task: TaskSpec,
    fleet: Iterable[DeviceState],
    links: LinkTable,
    inputs: Sequence[TaskInput] = (),
    model_source: str | None = None,
) -> list[CandidateEntry]:
    """Rank eligible devices by estimated end-to-end task latency, ascending."""
    entries = []
    for device in fleet:
        entry = candidate_entry(task, device, links, inputs, model_source)
        if entry is not None:
            entries.append(entry)
    if not entries:
        raise NoEligibleDevice(task.task_id)
    entries.sort(key=lambda e: (e.est_total, e.device_id))
    return entries


def task_failure_prob(replicas: Iterable[tuple[float, float]]) -> float:
    """Probability that every replica's device fails within its window.

    ``replicas`` holds (failure_rate, window_seconds) pairs; devices fail
    independently, so the task only fails if all of them do.
    """
    prob = 1.0
    empty = True
    for rate, window in replicas:
        prob *= device_failure_prob(rate, window)
        empty = False
    if empty:
        raise ValueError("at least one replica is required")
    return prob


def task_cost(replicas: Iterable[tuple[float, float]]) -> float:
    """Dollar cost of a task: sum of cost_rate * execution seconds over replicas."""
    total = 0.0
    empty = True
    for rate, exec_seconds in replicas:
        total += rate * exec_seconds
        empty = False
    if empty:
        raise ValueError("at least one replica is required")
    return total


def pf_cost_reduction(
    queue: Sequence[CandidateEntry],
    task: TaskSpec,
    weights: WeightConfig,
    profiles: Mapping[str, DeviceProfile],
    trace: list[ReplicationStep] | None = None,
) -> TaskPlacement:
    """Seed from the queue head and add replicas while the weighted score allows.

    A replica is tried only while the combined failure probability is at
    least ``phi`` and fewer than ``kappa`` devices hold the task. The score of
    a candidate set uses the latency of the newly added replica, the product
    failure probability and the summed cost; the first rejection ends the loop.
    """
    if not queue:
        raise NoEligibleDevice(task.task_id)
    head = queue[0]
    head_prof = profiles[head.device_id]
    failure = device_failure_prob(head_prof.failure_rate, head.est_total)
    cost = head_prof.cost_rate * head.est_exec

    if weights.normalize:
        lat_scale = head.est_total if head.est_total > 0 else 1.0
        cost_scale = cost if cost > 0 else 1.0
    else:
        lat_scale = cost_scale = 1.0

    def score(latency: float, f: float, c: float) -> float:
        return weights.alpha * latency / lat_scale + weights.beta * f + weights.gamma * c / cost_scale

    current = score(head.est_total, failure, cost)
    chosen = [head]
    nxt = 1
    while failure >= weights.phi and len(chosen) < weights.kappa and nxt < len(queue):
        cand = queue[nxt]
        nxt += 1
        prof = profiles[cand.device_id]
        f_new = failure * device_failure_prob(prof.failure_rate, cand.est_total)
        c_new = cost + prof.cost_rate * cand.est_exec
        s_new = score(cand.est_total, f_new, c_new)
        # a replica that cannot lower F (its device is certain to fail) is never worth it
        accepted = s_new <= current and f_new < failure
        if trace is not None:
            trace.append(ReplicationStep(cand.device_id, current, s_new, failure, f_new, accepted))
        if not accepted:
            break
        chosen.append(cand)
        failure, cost, current = f_new, c_new, s_new

    return TaskPlacement(
        task_id=task.task_id,
        primary_device=head.device_id,
        replicas=tuple(e.device_id for e in chosen),
        est_latency=head.est_total,
        est_failure=failure,
        est_cost=cost,
        entries=tuple(chosen),
    )


def _single(entry: CandidateEntry, task: TaskSpec, profiles: Mapping[str, DeviceProfile]) -> TaskPlacement:
    prof = profiles[entry.device_id]
    return TaskPlacement(
        task_id=task.task_id,
        primary_device=entry.device_id,
        replicas=(entry.device_id,),
        est_latency=entry.est_total,
        est_failure=device_failure_prob(prof.failure_rate, entry.est_total),
        est_cost=prof.cost_rate * entry.est_exec,
        entries=(entry,),
    )


# --- whole application -----------------------------------------------------


def _plan(
    kind: SchedulerKind,
    staged: StagedDag,
    fleet: Sequence[DeviceState],
    links: LinkTable,
    weights: WeightConfig | None,
    sizes: SizeRegression,
    initiator: str | None,
    model_source: str | None,
    rng: np.random.Generator | None,
    rr: RoundRobin | None,
    traces: dict[str, list[ReplicationStep]] | None,
) -> Placement:
    dag = staged.dag
    tasks = dag.task_map
    profiles = {d.device_id: d.profile for d in fleet}
    order = sorted(fleet, key=lambda d: d.device_id)
    plan_mem = {d.device_id: d.mem_free for d in order}
    if model_source is None:
        model_source = initiator

    placed: dict[str, TaskPlacement] = {}
    pred_out: dict[str, float] = {}

    for stage in staged.stages:
        # Only this stage's placements count as co-located: earlier stages are
        # finished by the time this stage runs in the stage-sum latency model.
        stage_types = {d.device_id: Counter(d.running_task_types) for d in order}
        for tid in sorted(stage):
            task = tasks[tid]
            inputs: list[TaskInput] = []
            in_bytes = float(task.base_input_size)
            if task.base_input_size > 0:
                if initiator is None:
                    raise ValueError(f"task {tid!r} has external input but no initiator is set")
                inputs.append(TaskInput(float(task.base_input_size), (initiator,)))
            for p in staged.preds[tid]:
                inputs.append(TaskInput(pred_out[p], placed[p].replicas))
                in_bytes += pred_out[p]
            pred_out[tid] = predict_output_size(sizes, task.task_type, in_bytes, task.output_size_hint)

            view = [
                DeviceState(d.profile, plan_mem[d.device_id], stage_types[d.device_id], d.alive)
                for d in order
            ]
            if kind is SchedulerKind.MTEC:
                queue = min_latency_queue(task, view, links, inputs, model_source)
                trace = None
                if traces is not None:
                    trace = traces.setdefault(tid, [])
                assert weights is not None
                tp = pf_cost_reduction(queue, task, weights, profiles, trace)
            elif kind is SchedulerKind.LATENCY_ONLY:
                queue = min_latency_queue(task, view, links, inputs, model_source)
                tp = _single(queue[0], task, profiles)
            else:
                eligible = [d for d in view if _is_eligible(d, task)]
                if not eligible:
                    raise NoEligibleDevice(tid)
                if kind is SchedulerKind.ROUND_ROBIN:
                    assert rr is not None
                    n = len(view)
                    for step in range(n):
                        cand = view[(rr.position + step) % n]
                        if _is_eligible(cand, task):
                            rr.position = (rr.position + step + 1) % n
                            break
                    chosen = cand
                else:
                    assert rng is not None
                    chosen = eligible[int(rng.integers(len(eligible)))]
                entry = candidate_entry(task, chosen, links, inputs, model_source)
                assert entry is not None
                tp = _single(entry, task, profiles)

            placed[tid] = tp
            for dev in tp.replicas:
                plan_mem[dev] -= task.mem_required
                stage_types[dev][task.task_type] += 1

    app_latency = sum(max(placed[t].est_latency for t in stage) for stage in staged.stages)
    app_cost = sum(tp.est_cost for tp in placed.values())
    survive = 1.0
    for tp in placed.values():
        survive *= 1.0 - tp.est_failure
    return Placement(
        staged=staged,
        tasks=placed,
        est_app_latency=app_latency,
        est_app_failure=1.0 - survive,
        est_app_cost=app_cost,
        scheduler=kind,
    )


def schedule_application(
    staged: StagedDag,
    fleet: Sequence[DeviceState],
    links: LinkTable,
    weights: WeightConfig,
    sizes: SizeRegression | None = None,
    *,
    initiator: str | None = None,
    model_source: str | None = None,
    traces: dict[str, list[ReplicationStep]] | None = None,
) -> Placement:
    """Place every task stage by stage, task id order within a stage.

    Raises NoEligibleDevice if any task cannot be placed.
    """
    return _plan(
        SchedulerKind.MTEC, staged, fleet, links, weights, sizes or SizeRegression(),
        initiator, model_source, None, None, traces,
    )


def baseline_schedule(
    kind: SchedulerKind | str,
    staged: StagedDag,
    fleet: Sequence[DeviceState],
    links: LinkTable,
    seed: int | np.random.Generator | None = 0,
    sizes: SizeRegression | None = None,
    *,
    initiator: str | None = None,
    model_source: str | None = None,
    rr: RoundRobin | None = None,
) -> Placement:
    kind = SchedulerKind(kind)
    if kind is SchedulerKind.MTEC:
        raise ValueError("use schedule_application for the weighted scheduler")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _plan(
        kind, staged, fleet, links, None, sizes or SizeRegression(),
        initiator, model_source, rng, rr if rr is not None else RoundRobin(), None,
    )


__all__ = [
    "BASELINE_KINDS",
    "CandidateEntry",
    "NoEligibleDevice",
    "Placement",
    "ReplicationStep",
    "RoundRobin",
    "SchedulerKind",
    "TaskInput",
    "TaskPlacement",
    "UnprofiledDevice",
    "WeightConfig",
    "baseline_schedule",
    "candidate_entry",
    "min_latency_queue",
    "pf_cost_reduction",
    "pick_source",
    "schedule_application",
    "task_cost",
    "task_failure_prob",
]
