"""Builders and independent oracles shared by the test modules.

The oracles here deliberately avoid the package's own algorithms: stage
depths come from enumerating every path, latencies are recomputed from the
raw profile numbers, and so on.
"""

from __future__ import annotations

import math
import random
from itertools import product
from typing import Iterable, Mapping, Sequence

from edgesched.cluster import DeviceProfile, DeviceState, LinkTable, Tier
from edgesched.dag import ApplicationDag, TaskSpec
from edgesched.scenario import ScenarioConfig, scenario_from_dict

GB = 1024**3


def task(tid: str, ttype: str = "job", mem: int = 1, **kw) -> TaskSpec:
    return TaskSpec(task_id=tid, task_type=ttype, mem_required=mem, **kw)


def dag(edges: Iterable[tuple[str, str]], nodes: Iterable[str] = (), app_id: str = "app") -> ApplicationDag:
    edges = list(edges)
    ids = list(dict.fromkeys([*nodes, *(u for u, _ in edges), *(v for _, v in edges)]))
    return ApplicationDag(app_id, tuple(task(t) for t in ids), tuple(edges))


def profile(
    dev: str,
    base: float = 1.0,
    slope: float = 0.0,
    *,
    types: Sequence[str] = ("job",),
    mem: int = 8 * GB,
    cost: float = 0.0,
    lam: float = 0.0,
    cached: Iterable[str] = (),
    initiator: bool = False,
    tier: Tier = Tier.EDGE_CLOUD,
) -> DeviceProfile:
    return DeviceProfile(
        device_id=dev,
        tier=tier,
        mem_total=mem,
        cost_rate=cost,
        failure_rate=lam,
        cached_models=frozenset(cached),
        interference_model={t: (base, slope) for t in types},
        is_initiator_capable=initiator,
    )


def state(p: DeviceProfile, running: Mapping[str, int] | None = None, mem_free: int | None = None) -> DeviceState:
    from collections import Counter

    return DeviceState(p, p.mem_total if mem_free is None else mem_free, Counter(running or {}))


def links_from_speeds(speeds: Mapping[tuple[str, str], float]) -> LinkTable:
    return LinkTable(speed=dict(speeds), rtt={}, eta=1.0)


# --- random DAGs -----------------------------------------------------------


def random_dag(rng: random.Random, max_nodes: int = 12) -> ApplicationDag:
    """Random DAG: edges only go from lower to higher index, then ids are shuffled."""
    n = rng.randint(1, max_nodes)
    density = rng.random()
    ids = [f"t{i}" for i in range(n)]
    rng.shuffle(ids)
    edges = [(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < density * 0.5]
    return ApplicationDag("rand", tuple(task(t) for t in sorted(ids)), tuple(edges))


def longest_path_by_enumeration(d: ApplicationDag) -> dict[str, int]:
    """Depth of each node = max edge count over every path from a start node (exhaustive DFS)."""
    succs: dict[str, list[str]] = {t.task_id: [] for t in d.tasks}
    indeg = {t.task_id: 0 for t in d.tasks}
    for u, v in d.edges:
        succs[u].append(v)
        indeg[v] += 1
    depth = {t: 0 for t in succs}

    def walk(node: str, length: int) -> None:
        depth[node] = max(depth[node], length)
        for nxt in succs[node]:
            walk(nxt, length + 1)

    for start in (t for t, k in indeg.items() if k == 0):
        walk(start, 0)
    return depth


# --- latency oracle --------------------------------------------------------


def latency_by_hand(
    p: DeviceProfile,
    running: Mapping[str, int],
    t: TaskSpec,
    speeds: Mapping[tuple[str, str], float],
    inputs: Sequence[tuple[float, Sequence[str]]],
    model_source: str | None,
) -> float:
    """exec + model download + data-in, recomputed from first principles."""
    base, slope = p.interference_model[t.task_type]
    k = len({ty for ty, n in running.items() if n > 0})
    exec_time = base + slope * k
    dev = p.device_id
    download = 0.0
    if t.model_id is not None and t.model_id not in p.cached_models and model_source != dev:
        download = t.model_size / speeds[(model_source, dev)]
    data = 0.0
    for size, sources in inputs:
        if dev in sources or size <= 0:
            continue
        data += size / max(speeds[(s, dev)] for s in sources)
    # same grouping as the three terms of the latency sum, so results compare exactly
    return exec_time + download + data


# --- scenarios -------------------------------------------------------------


def single_task_scenario(
    lams: Sequence[float],
    exec_seconds: float = 1.0,
    *,
    kappa: int | None = None,
    weights: Mapping[str, float] | None = None,
    failures: bool = True,
    count: int = 1,
    horizon: float = 1e-9,
) -> ScenarioConfig:
    """One zero-byte task on len(lams) identical participators, plus an initiator."""
    devices = [
        {
            "device_id": f"p{i}",
            "tier": "edge_cloud",
            "mem_total": GB,
            "cost_rate": 0.001,
            "failure_rate": lam,
            "cached_models": [],
            "interference": {"job": [exec_seconds, 0.0]},
            "initiator_capable": False,
        }
        for i, lam in enumerate(lams)
    ]
    devices.append(
        {
            "device_id": "init",
            "tier": "cell_site",
            "mem_total": GB,
            "cost_rate": 0.0,
            "failure_rate": 0.0,
            "cached_models": [],
            "interference": {},
            "initiator_capable": True,
        }
    )
    w = {"alpha": 0.0, "beta": 1.0, "gamma": 0.0, "phi": 1e-12, "kappa": kappa or len(lams)}
    w.update(weights or {})
    doc = {
        "scenario_id": "single",
        "fleet": {"devices": devices, "links": []},
        "dag": {"app_id": "one", "tasks": [{"task_id": "t", "task_type": "job", "mem_required": 1}], "edges": []},
        "initiators": ["init"],
        "arrivals": {"count": count, "horizon": horizon},
        "failures": failures,
        "weights": w,
    }
    return scenario_from_dict(doc)


def all_assignments(tasks: Sequence[str], devices: Sequence[str]) -> Iterable[dict[str, str]]:
    for combo in product(devices, repeat=len(tasks)):
        yield dict(zip(tasks, combo))


def isclose(a: float, b: float, rel: float = 1e-12) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)
