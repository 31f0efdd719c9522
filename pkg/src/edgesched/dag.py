"""DAG applications: task descriptors, validation and stage assignment."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping


class DagError(ValueError):
    """Raised when a DAG cannot be staged or parsed."""


@dataclass(frozen=True, slots=True)
class TaskSpec:
    task_id: str
    task_type: str
    mem_required: int
    model_id: str | None = None
    model_size: int = 0
    base_input_size: int = 0
    output_size_hint: int | None = None

    def __post_init__(self) -> None:
        if self.mem_required <= 0:
            raise DagError(f"task {self.task_id!r}: mem_required must be > 0")
        if self.model_size < 0 or self.base_input_size < 0:
            raise DagError(f"task {self.task_id!r}: sizes must be >= 0")
        if (self.model_size > 0) != (self.model_id is not None):
            raise DagError(f"task {self.task_id!r}: model_size > 0 iff model_id is set")
        if self.output_size_hint is not None and self.output_size_hint < 0:
            raise DagError(f"task {self.task_id!r}: output_size_hint must be >= 0")


@dataclass(frozen=True, slots=True)
class ApplicationDag:
    app_id: str
    tasks: tuple[TaskSpec, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "edges", tuple((u, v) for u, v in self.edges))

    @property
    def task_map(self) -> dict[str, TaskSpec]:
        return {t.task_id: t for t in self.tasks}

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {t.task_id: [] for t in self.tasks}
        for u, v in self.edges:
            preds[v].append(u)
        for lst in preds.values():
            lst.sort()
        return preds

    def successors(self) -> dict[str, list[str]]:
        succs: dict[str, list[str]] = {t.task_id: [] for t in self.tasks}
        for u, v in self.edges:
            succs[u].append(v)
        for lst in succs.values():
            lst.sort()
        return succs

    def renamed(self, mapping: Mapping[str, str]) -> ApplicationDag:
        """Return a copy with task ids replaced through ``mapping``."""
        tasks = tuple(
            TaskSpec(
                task_id=mapping[t.task_id],
                task_type=t.task_type,
                mem_required=t.mem_required,
                model_id=t.model_id,
                model_size=t.model_size,
                base_input_size=t.base_input_size,
                output_size_hint=t.output_size_hint,
            )
            for t in self.tasks
        )
        edges = tuple((mapping[u], mapping[v]) for u, v in self.edges)
        return ApplicationDag(self.app_id, tasks, edges)


@dataclass(frozen=True, slots=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class StagedDag:
    dag: ApplicationDag
    stage_of: Mapping[str, int]
    stages: tuple[frozenset[str], ...]
    # cached adjacency, derived from ``dag``
    preds: Mapping[str, tuple[str, ...]] = field(default_factory=dict, compare=False, repr=False)
    succs: Mapping[str, tuple[str, ...]] = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def ordered_tasks(self) -> list[str]:
        """Task ids by stage, then by id within a stage."""
        return [tid for stage in self.stages for tid in sorted(stage)]


def _find_cycle(nodes: Iterable[str], succs: Mapping[str, list[str]]) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n: WHITE for n in nodes}
    for root in sorted(colour):
        if colour[root] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        path = [root]
        colour[root] = GREY
        while stack:
            node, idx = stack[-1]
            children = succs.get(node, [])
            if idx < len(children):
                stack[-1] = (node, idx + 1)
                child = children[idx]
                if colour[child] == GREY:
                    return path[path.index(child):] + [child]
                if colour[child] == WHITE:
                    colour[child] = GREY
                    stack.append((child, 0))
                    path.append(child)
            else:
                colour[node] = BLACK
                stack.pop()
                path.pop()
    return None


def validate_dag(dag: ApplicationDag) -> ValidationResult:
    """Check every structural invariant and report all violations found."""
    violations: list[str] = []
    if not dag.tasks:
        return ValidationResult(("empty graph: no tasks",))

    counts = Counter(t.task_id for t in dag.tasks)
    for tid, n in sorted(counts.items()):
        if n > 1:
            violations.append(f"duplicate task_id: {tid!r} appears {n} times")

    ids = set(counts)
    seen_edges: set[tuple[str, str]] = set()
    succs: dict[str, list[str]] = {tid: [] for tid in ids}
    indegree = {tid: 0 for tid in ids}
    for u, v in dag.edges:
        if u not in ids or v not in ids:
            missing = [x for x in (u, v) if x not in ids]
            violations.append(f"dangling edge: {u!r} -> {v!r} references unknown task {missing[0]!r}")
            continue
        if u == v:
            violations.append(f"self-edge on {u!r}")
            continue
        if (u, v) in seen_edges:
            violations.append(f"duplicate edge: {u!r} -> {v!r}")
            continue
        seen_edges.add((u, v))
        succs[u].append(v)
        indegree[v] += 1

    if all(d > 0 for d in indegree.values()):
        violations.append("no start node: every task has an incoming edge")
    for lst in succs.values():
        lst.sort()
    cycle = _find_cycle(ids, succs)
    if cycle is not None:
        violations.append("cycle: " + " -> ".join(cycle))
    return ValidationResult(tuple(violations))


def assign_stages(dag: ApplicationDag) -> StagedDag:
    """Split ``dag`` into stages by longest-path depth from any start node.

    Depths come from a DP over Kahn's topological order, so every edge points
    to a strictly later stage and tasks sharing a stage are independent.
    """
    result = validate_dag(dag)
    if not result.ok:
        raise DagError(f"invalid DAG {dag.app_id!r}: " + "; ".join(result.violations))

    preds = dag.predecessors()
    succs = dag.successors()
    indegree = {tid: len(p) for tid, p in preds.items()}
    depth = {tid: 0 for tid in preds}
    frontier = sorted(tid for tid, d in indegree.items() if d == 0)
    visited = 0
    while frontier:
        nxt: list[str] = []
        for u in frontier:
            visited += 1
            for v in succs[u]:
                depth[v] = max(depth[v], depth[u] + 1)
                indegree[v] -= 1
                if indegree[v] == 0:
                    nxt.append(v)
        frontier = sorted(nxt)
    if visited != len(depth):
        raise DagError(f"cycle detected in {dag.app_id!r}")

    n_stages = max(depth.values()) + 1
    buckets: list[set[str]] = [set() for _ in range(n_stages)]
    for tid, d in depth.items():
        buckets[d].add(tid)
    return StagedDag(
        dag=dag,
        stage_of=dict(depth),
        stages=tuple(frozenset(b) for b in buckets),
        preds={k: tuple(v) for k, v in preds.items()},
        succs={k: tuple(v) for k, v in succs.items()},
    )


def dag_from_dict(doc: Mapping[str, Any]) -> ApplicationDag:
    try:
        tasks = tuple(
            TaskSpec(
                task_id=str(t["task_id"]),
                task_type=str(t["task_type"]),
                mem_required=int(t["mem_required"]),
                model_id=t.get("model_id"),
                model_size=int(t.get("model_size", 0)),
                base_input_size=int(t.get("base_input_size", 0)),
                output_size_hint=None if t.get("output_size_hint") is None else int(t["output_size_hint"]),
            )
            for t in doc["tasks"]
        )
        edges = tuple((str(u), str(v)) for u, v in doc.get("edges", []))
        return ApplicationDag(app_id=str(doc["app_id"]), tasks=tasks, edges=edges)
    except KeyError as exc:
        raise DagError(f"DAG document missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DagError):
            raise
        raise DagError(f"malformed DAG document: {exc}") from None


def dag_to_dict(dag: ApplicationDag) -> dict[str, Any]:
    tasks = []
    for t in dag.tasks:
        entry: dict[str, Any] = {
            "task_id": t.task_id,
            "task_type": t.task_type,
            "mem_required": t.mem_required,
            "base_input_size": t.base_input_size,
        }
        if t.model_id is not None:
            entry["model_id"] = t.model_id
            entry["model_size"] = t.model_size
        if t.output_size_hint is not None:
            entry["output_size_hint"] = t.output_size_hint
        tasks.append(entry)
    return {"app_id": dag.app_id, "tasks": tasks, "edges": [list(e) for e in dag.edges]}


def load_dag(path: str | Path) -> ApplicationDag:
    with open(path, encoding="utf-8") as fh:
        return dag_from_dict(json.load(fh))
