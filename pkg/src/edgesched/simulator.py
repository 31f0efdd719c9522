"""Seeded discrete-event simulation of initiators dispatching DAG instances to participators."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cluster import DeviceProfile, DeviceState, LinkTable, SizeRegression, update_size_regression
from .dag import TaskSpec
from .rng import stream
from .scenario import ConfigError, ScenarioConfig
from .scheduler import (
    NoEligibleDevice,
    Placement,
    RoundRobin,
    SchedulerKind,
    baseline_schedule,
    pick_source,
    schedule_application,
)
from .traffic import TrafficModel, apply_traffic

log = logging.getLogger(__name__)


class EventKind(enum.IntEnum):
    # value doubles as the tie-break rank for simultaneous events
    LINK_UPDATE = 0
    PROBE_TICK = 1
    DEVICE_FAILURE = 2
    TRANSFER_COMPLETE = 3
    EXEC_COMPLETE = 4
    INSTANCE_ARRIVAL = 5


@dataclass(order=True, slots=True)
class SimEvent:
    time: float
    kind: EventKind
    seq: int
    payload: object = field(compare=False, default=None)


def inject_failures(
    fleet: Iterable[DeviceProfile], seed: int, horizon: float = math.inf
) -> list[tuple[str, float]]:
    """Exponential failure time per device; only draws within ``horizon`` are returned.

    Each device draws from its own sub-stream, so the result for a device does
    not depend on which other devices are present.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    out = []
    for prof in sorted(fleet, key=lambda p: p.device_id):
        if prof.failure_rate <= 0:
            continue
        t = float(stream(seed, "failures", prof.device_id).exponential(1.0 / prof.failure_rate))
        if t <= horizon:
            out.append((prof.device_id, t))
    out.sort(key=lambda x: (x[1], x[0]))
    return out


def draw_arrivals(count: int, horizon: float, seed: int) -> list[float]:
    return sorted(float(t) for t in stream(seed, "arrivals").uniform(0.0, horizon, count))


# --- run-time bookkeeping ----------------------------------------------------

WAITING, FETCHING, EXECUTING, DONE, DEAD = range(5)


@dataclass(slots=True, eq=False)
class _Replica:
    task: _TaskRun
    device: str
    status: int = WAITING
    exec_start: float = 0.0
    exec_time: float = 0.0
    ready_at: float = 0.0


@dataclass(slots=True, eq=False)
class _TaskRun:
    inst: _Instance
    spec: TaskSpec
    waiting_on: int
    replicas: list[_Replica] = field(default_factory=list)
    done: bool = False
    input_bytes: float = 0.0
    output_bytes: float = 0.0


@dataclass(slots=True, eq=False)
class _Instance:
    index: int
    arrival: float
    initiator: str
    tasks: dict[str, _TaskRun] = field(default_factory=dict)
    remaining: int = 0
    failed: bool = False
    finished: bool = False
    end: float = math.nan
    cost: float = 0.0
    reason: str = ""
    placement: Placement | None = None


@dataclass(frozen=True)
class InstanceResult:
    index: int
    arrival: float
    initiator: str
    success: bool
    latency: float | None
    cost: float
    est_latency: float | None = None
    est_failure: float | None = None
    est_cost: float | None = None
    replicas: int = 0
    failure_reason: str = ""


@dataclass(frozen=True)
class SimReport:
    scenario_id: str
    scheduler: str
    seed: int
    instances: tuple[InstanceResult, ...]
    dispatched: dict[str, int]
    device_failures: tuple[tuple[str, float], ...] = ()

    @property
    def total(self) -> int:
        return len(self.instances)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.instances if r.success)

    @property
    def empirical_pf(self) -> float:
        return (self.total - self.successes) / self.total if self.total else 0.0

    @property
    def mean_latency(self) -> float:
        """Mean end-to-end latency over successful instances (nan when none)."""
        lats = [r.latency for r in self.instances if r.success and r.latency is not None]
        return math.fsum(lats) / len(lats) if lats else math.nan

    @property
    def mean_cost(self) -> float:
        return math.fsum(r.cost for r in self.instances) / self.total if self.total else 0.0

    @property
    def total_cost(self) -> float:
        return math.fsum(r.cost for r in self.instances)

    @property
    def max_load_share(self) -> float:
        n = sum(self.dispatched.values())
        return max(self.dispatched.values()) / n if n else 0.0

    @property
    def arrival_times(self) -> list[float]:
        return [r.arrival for r in self.instances]


class _Engine:
    def __init__(self, scenario: ScenarioConfig, kind: SchedulerKind, seed: int) -> None:
        self.sc = scenario
        self.kind = kind
        self.seed = seed
        self.staged = scenario.staged
        self.dag_tasks = scenario.dag.task_map
        self.model_sizes = scenario.model_sizes
        profiles = scenario.fleet.by_id
        self.devices: dict[str, DeviceState] = {
            d: DeviceState.fresh(profiles[d], self.model_sizes) for d in scenario.participator_ids
        }
        self.hosted: dict[str, set[_Replica]] = {d: set() for d in self.devices}
        # task types dispatched to each device and not yet finished
        self.assigned: dict[str, Counter[str]] = {d: Counter() for d in self.devices}
        self.networks = scenario.networks
        self.base_links = scenario.base_links
        self.traffic: TrafficModel = scenario.traffic
        self.actual: LinkTable = apply_traffic(self.base_links, self.traffic, 0.0)
        self.snapshot: LinkTable = self.actual
        self.sizes = SizeRegression()
        self.dispatched: Counter[str] = Counter({d: 0 for d in self.devices})
        self.rng_baseline = stream(seed, "baseline")
        self.rr = {i: RoundRobin() for i in scenario.initiators}
        self.heap: list[SimEvent] = []
        self.seq = itertools.count()
        self.now = 0.0
        self.instances: list[_Instance] = []
        self.unresolved = 0
        self.active_replicas = 0
        self.failure_log: list[tuple[str, float]] = []

    # -- event plumbing --
    def push(self, time: float, kind: EventKind, payload: object = None) -> None:
        heapq.heappush(self.heap, SimEvent(time, kind, next(self.seq), payload))

    def run(self) -> SimReport:
        sc = self.sc
        arrivals = draw_arrivals(sc.arrivals.instance_count, sc.arrivals.horizon, self.seed)
        inits = sc.initiators
        for i, t in enumerate(arrivals):
            inst = _Instance(i, t, inits[i % len(inits)])
            self.instances.append(inst)
            self.push(t, EventKind.INSTANCE_ARRIVAL, inst)
        self.unresolved = len(arrivals)

        failures: list[tuple[str, float]] = []
        if sc.failures:
            failures.extend(inject_failures((self.devices[d].profile for d in self.devices), self.seed))
        failures.extend((d, t) for d, t in sc.scripted_failures if d in self.devices)
        for dev, t in sorted(failures, key=lambda x: (x[1], x[0])):
            self.push(t, EventKind.DEVICE_FAILURE, dev)

        if not self.traffic.is_static:
            for t in self.traffic.change_times():
                if t > 0:
                    self.push(t, EventKind.LINK_UPDATE, None)
            if self.traffic.jitter_sigma > 0:
                self.push(self.traffic.jitter_interval, EventKind.LINK_UPDATE, "jitter")
            self.push(sc.probe_interval_seconds, EventKind.PROBE_TICK, None)

        handlers = {
            EventKind.INSTANCE_ARRIVAL: self.on_arrival,
            EventKind.TRANSFER_COMPLETE: self.on_transfer_complete,
            EventKind.EXEC_COMPLETE: self.on_exec_complete,
            EventKind.DEVICE_FAILURE: self.on_device_failure,
            EventKind.LINK_UPDATE: self.on_link_update,
            EventKind.PROBE_TICK: self.on_probe_tick,
        }
        while self.heap:
            if self.unresolved == 0 and self.active_replicas == 0:
                break
            ev = heapq.heappop(self.heap)
            assert ev.time >= self.now, "event processed out of time order"
            self.now = ev.time
            handlers[ev.kind](ev.payload)
        return self.report()

    # -- network --
    def on_link_update(self, payload: object) -> None:
        self.actual = apply_traffic(self.base_links, self.traffic, self.now)
        if payload == "jitter" and self.unresolved:
            self.push(self.now + self.traffic.jitter_interval, EventKind.LINK_UPDATE, "jitter")

    def on_probe_tick(self, payload: object) -> None:
        # participators re-probe: the initiator's view catches up with the network
        self.snapshot = self.actual
        if self.unresolved:
            self.push(self.now + self.sc.probe_interval_seconds, EventKind.PROBE_TICK, None)

    # -- instances --
    def on_arrival(self, inst: _Instance) -> None:
        # the initiator plans against every task already handed to a device,
        # not only the ones executing right now
        fleet = []
        for d in self.networks[inst.initiator]:
            st = self.devices[d]
            fleet.append(DeviceState(st.profile, st.mem_free, +self.assigned[d], st.alive))
        kw = dict(initiator=inst.initiator, model_source=self.sc.model_source)
        try:
            if self.kind is SchedulerKind.MTEC:
                placement = schedule_application(
                    self.staged, fleet, self.snapshot, self.sc.weights, self.sizes, **kw
                )
            else:
                placement = baseline_schedule(
                    self.kind, self.staged, fleet, self.snapshot, self.rng_baseline, self.sizes,
                    rr=self.rr[inst.initiator], **kw,
                )
        except NoEligibleDevice as exc:
            log.debug("t=%.3f instance %d unschedulable: %s", self.now, inst.index, exc)
            self.fail_instance(inst, "unschedulable")
            return
        inst.placement = placement
        preds = self.staged.preds
        for tid in self.staged.ordered_tasks():
            spec = self.dag_tasks[tid]
            run = _TaskRun(inst, spec, waiting_on=len(preds[tid]))
            inst.tasks[tid] = run
            for dev in placement.tasks[tid].replicas:
                rep = _Replica(run, dev)
                run.replicas.append(rep)
                self.devices[dev].mem_free -= spec.mem_required
                self.hosted[dev].add(rep)
                self.assigned[dev][spec.task_type] += 1
                self.dispatched[dev] += 1
                self.active_replicas += 1
        inst.remaining = len(inst.tasks)
        for tid in self.staged.ordered_tasks():
            if not preds[tid]:
                self.activate(inst.tasks[tid])

    def activate(self, run: _TaskRun) -> None:
        """All producers finished: start fetching model and inputs on every live replica."""
        inst = run.inst
        spec = run.spec
        inputs: list[tuple[float, tuple[str, ...]]] = []
        in_bytes = float(spec.base_input_size)
        if spec.base_input_size > 0:
            inputs.append((float(spec.base_input_size), (inst.initiator,)))
        for p in self.staged.preds[spec.task_id]:
            prod = inst.tasks[p]
            holders = tuple(
                r.device for r in prod.replicas if r.status == DONE and self.devices[r.device].alive
            )
            if not holders:
                self.fail_instance(inst, f"lost output of {p}")
                return
            inputs.append((prod.output_bytes, holders))
            in_bytes += prod.output_bytes
        run.input_bytes = in_bytes
        model_src = self.sc.model_source or inst.initiator
        for rep in run.replicas:
            if rep.status != WAITING:
                continue
            dev = rep.device
            fetch = 0.0
            if spec.model_id is not None and spec.model_id not in self.devices[dev].profile.cached_models:
                fetch += self.actual.transfer_time(spec.model_size, model_src, dev)
            for size, holders in inputs:
                if dev in holders or size <= 0:
                    continue
                src = pick_source(holders, dev, self.actual)
                fetch += self.actual.transfer_time(size, src, dev)
            rep.status = FETCHING
            if fetch > 0:
                rep.ready_at = self.now + fetch
                self.push(rep.ready_at, EventKind.TRANSFER_COMPLETE, rep)
            else:
                self.start_exec(rep)

    def on_transfer_complete(self, rep: _Replica) -> None:
        if rep.status == FETCHING:
            self.start_exec(rep)

    def start_exec(self, rep: _Replica) -> None:
        state = self.devices[rep.device]
        base, slope = state.profile.interference_model[rep.task.spec.task_type]
        rep.exec_time = base + slope * state.distinct_running_types()
        rep.exec_start = self.now
        rep.status = EXECUTING
        state.running_task_types[rep.task.spec.task_type] += 1
        self.push(self.now + rep.exec_time, EventKind.EXEC_COMPLETE, rep)

    def release(self, rep: _Replica, status: int) -> None:
        """Take a replica off its device, charging the execution time it consumed."""
        state = self.devices[rep.device]
        if rep.status == EXECUTING:
            ttype = rep.task.spec.task_type
            state.running_task_types[ttype] -= 1
            if state.running_task_types[ttype] <= 0:
                del state.running_task_types[ttype]
            used = rep.exec_time if status == DONE else self.now - rep.exec_start
            rep.task.inst.cost += state.profile.cost_rate * used
        state.mem_free += rep.task.spec.mem_required
        self.hosted[rep.device].discard(rep)
        self.assigned[rep.device][rep.task.spec.task_type] -= 1
        rep.status = status
        self.active_replicas -= 1

    def on_exec_complete(self, rep: _Replica) -> None:
        if rep.status != EXECUTING:
            return
        self.release(rep, DONE)
        run = rep.task
        inst = run.inst
        if run.done or inst.failed:
            return
        run.done = True
        spec = run.spec
        run.output_bytes = float(spec.output_size_hint) if spec.output_size_hint is not None else run.input_bytes
        self.sizes = update_size_regression(self.sizes, spec.task_type, run.input_bytes, run.output_bytes)
        inst.remaining -= 1
        if inst.remaining == 0:
            inst.finished = True
            inst.end = self.now
            self.unresolved -= 1
            return
        for succ in self.staged.succs[spec.task_id]:
            nxt = inst.tasks[succ]
            nxt.waiting_on -= 1
            if nxt.waiting_on == 0:
                self.activate(nxt)
                if inst.failed:
                    return

    def on_device_failure(self, dev: str) -> None:
        state = self.devices.get(dev)
        if state is None or not state.alive:
            return
        state.alive = False
        self.failure_log.append((dev, self.now))
        log.debug("t=%.3f device %s failed", self.now, dev)
        victims = sorted(self.hosted[dev], key=lambda r: (r.task.inst.index, r.task.spec.task_id))
        for rep in victims:
            self.release(rep, DEAD)
        for rep in victims:
            run = rep.task
            if run.done or run.inst.failed or run.inst.finished:
                continue
            if all(r.status == DEAD for r in run.replicas):
                self.fail_instance(run.inst, f"all replicas of {run.spec.task_id} lost")

    def fail_instance(self, inst: _Instance, reason: str) -> None:
        if inst.failed or inst.finished:
            return
        inst.failed = True
        inst.reason = reason
        self.unresolved -= 1
        for run in inst.tasks.values():
            for rep in run.replicas:
                if rep.status in (WAITING, FETCHING, EXECUTING):
                    self.release(rep, DEAD)

    def report(self) -> SimReport:
        results = []
        for inst in self.instances:
            pl = inst.placement
            results.append(
                InstanceResult(
                    index=inst.index,
                    arrival=inst.arrival,
                    initiator=inst.initiator,
                    success=inst.finished and not inst.failed,
                    latency=(inst.end - inst.arrival) if inst.finished else None,
                    cost=inst.cost,
                    est_latency=None if pl is None else pl.est_app_latency,
                    est_failure=None if pl is None else pl.est_app_failure,
                    est_cost=None if pl is None else pl.est_app_cost,
                    replicas=0 if pl is None else pl.replica_count(),
                    failure_reason=inst.reason,
                )
            )
        return SimReport(
            scenario_id=self.sc.scenario_id,
            scheduler=self.kind.value,
            seed=self.seed,
            instances=tuple(results),
            dispatched=dict(sorted(self.dispatched.items())),
            device_failures=tuple(self.failure_log),
        )


def run_simulation(
    scenario: ScenarioConfig, scheduler_kind: SchedulerKind | str | None = None, seed: int | None = None
) -> SimReport:
    """Simulate every instance arrival of ``scenario`` under one scheduler and seed.

    Identical arguments give identical reports. Raises ConfigError for an
    unusable scenario; modelled failures are outcomes, never exceptions.
    """
    if not isinstance(scenario, ScenarioConfig):
        raise ConfigError("run_simulation expects a ScenarioConfig")
    try:
        kind = SchedulerKind(scheduler_kind if scheduler_kind is not None else scenario.scheduler)
    except ValueError:
        raise ConfigError(f"unknown scheduler {scheduler_kind!r}") from None
    if seed is None:
        seed = scenario.seeds[0]
    return _Engine(scenario, kind, int(seed)).run()


__all__ = [
    "EventKind",
    "InstanceResult",
    "SimEvent",
    "SimReport",
    "TrafficModel",
    "apply_traffic",
    "draw_arrivals",
    "inject_failures",
    "run_simulation",
]
