"""Scenario configuration: loading, validation and overrides."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

from .cluster import (
    DEFAULT_PROBE_PACKET_BYTES,
    DEFAULT_RTT_SECONDS,
    Fleet,
    FleetError,
    LinkTable,
    fleet_from_dict,
    partition_networks,
)
from .dag import ApplicationDag, DagError, StagedDag, assign_stages, dag_from_dict, validate_dag
from .scheduler import SchedulerKind, WeightConfig
from .traffic import TrafficModel, traffic_from_dict


class ConfigError(ValueError):
    """A scenario is missing, malformed or violates an invariant."""


@dataclass(frozen=True)
class ArrivalProcess:
    instance_count: int = 100
    horizon: float = 250.0

    def __post_init__(self) -> None:
        if int(self.instance_count) != self.instance_count or self.instance_count < 1:
            raise ConfigError(f"arrivals.count must be an integer >= 1, got {self.instance_count}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError(f"arrivals.horizon must be > 0, got {self.horizon}")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    fleet: Fleet
    dag: ApplicationDag
    initiators: tuple[str, ...]
    arrivals: ArrivalProcess = ArrivalProcess()
    weights: WeightConfig = WeightConfig()
    eta: float = 1.5
    probe_packet_bytes: float = DEFAULT_PROBE_PACKET_BYTES
    probe_interval_seconds: float = 5.0
    traffic: TrafficModel = TrafficModel()
    failures: bool = False
    scripted_failures: tuple[tuple[str, float], ...] = ()
    scheduler: SchedulerKind = SchedulerKind.MTEC
    seeds: tuple[int, ...] = (0,)
    model_source: str | None = None
    # participators used in a run; None means all non-initiator devices
    participators: tuple[str, ...] | None = None
    fleet_path: str | None = None
    dag_path: str | None = None

    def __post_init__(self) -> None:
        ids = set(self.fleet.by_id)
        if not self.initiators:
            raise ConfigError("at least one initiator is required")
        for i in self.initiators:
            if i not in ids:
                raise ConfigError(f"initiator {i!r} is not in the fleet")
            if not self.fleet.by_id[i].is_initiator_capable:
                raise ConfigError(f"device {i!r} is not initiator capable")
        if self.participators is not None:
            unknown = sorted(set(self.participators) - ids)
            if unknown:
                raise ConfigError(f"unknown participator ids: {unknown}")
            clash = sorted(set(self.participators) & set(self.initiators))
            if clash:
                raise ConfigError(f"devices cannot be both initiator and participator: {clash}")
        if not self.participator_ids:
            raise ConfigError("the scenario has no participators")
        if self.model_source is not None and self.model_source not in ids:
            raise ConfigError(f"model_source {self.model_source!r} is not in the fleet")
        if not self.eta >= 1:
            raise ConfigError(f"eta must be >= 1, got {self.eta}")
        if not self.probe_packet_bytes > 0:
            raise ConfigError("probe_packet_bytes must be > 0")
        if not self.probe_interval_seconds > 0:
            raise ConfigError("probe_interval_seconds must be > 0")
        for dev, t in self.scripted_failures:
            if dev not in ids:
                raise ConfigError(f"scripted failure names unknown device {dev!r}")
            if t < 0:
                raise ConfigError("scripted failure times must be >= 0")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        result = validate_dag(self.dag)
        if not result.ok:
            raise ConfigError(f"DAG {self.dag.app_id!r} is invalid: " + "; ".join(result.violations))

    @cached_property
    def participator_ids(self) -> tuple[str, ...]:
        if self.participators is not None:
            return tuple(sorted(self.participators))
        inits = set(self.initiators)
        return tuple(sorted(d.device_id for d in self.fleet.devices if d.device_id not in inits))

    @cached_property
    def staged(self) -> StagedDag:
        return assign_stages(self.dag)

    @cached_property
    def model_sizes(self) -> dict[str, int]:
        return {t.model_id: t.model_size for t in self.dag.tasks if t.model_id is not None}

    @cached_property
    def base_links(self) -> LinkTable:
        """eta-adjusted speeds for every ordered pair of scenario devices."""
        ids = sorted(set(self.participator_ids) | set(self.initiators) | self._extra_sources())
        rtts = {}
        for a in ids:
            for b in ids:
                if a != b:
                    rtts[(a, b)] = self.fleet.rtts.get((a, b), self.fleet.default_rtt_seconds)
        return LinkTable.from_rtts(rtts, eta=self.eta, packet_bytes=self.probe_packet_bytes)

    def _extra_sources(self) -> set[str]:
        return {self.model_source} if self.model_source is not None else set()

    @cached_property
    def networks(self) -> dict[str, tuple[str, ...]]:
        """Disjoint participator set for each initiator."""
        parts = partition_networks(
            self.initiators, self.participator_ids, self.fleet.rtts, self.fleet.default_rtt_seconds
        )
        return {i: tuple(sorted(p)) for i, p in parts.items()}

    def with_participators(self, ids: Sequence[str]) -> ScenarioConfig:
        return _rebuild(self, participators=tuple(sorted(ids)))

    def with_weights(self, weights: WeightConfig) -> ScenarioConfig:
        return _rebuild(self, weights=weights)

    def with_eta(self, eta: float) -> ScenarioConfig:
        return _rebuild(self, eta=eta)


def _rebuild(cfg: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    # dataclasses.replace re-runs __post_init__ and drops cached properties
    return replace(cfg, **changes)


# --- loading ---------------------------------------------------------------

_TOP_LEVEL_KEYS = {
    "scenario_id", "fleet", "dag", "initiators", "arrivals", "weights", "eta",
    "probe_packet_bytes", "probe_interval_seconds", "traffic", "failures",
    "scripted_failures", "scheduler", "seeds", "model_source", "participators",
    "default_rtt_seconds", "description",
}


def apply_overrides(doc: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Set dotted keys (``weights.beta``) on a copy of a scenario document."""
    out = copy.deepcopy(doc)
    for key, value in overrides.items():
        parts = key.split(".")
        if parts[0] not in _TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown scenario key {parts[0]!r} in override {key!r}")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if not isinstance(nxt, dict):
                nxt = {}
                node[p] = nxt
            node = nxt
        node[parts[-1]] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _read_json(path: Path, what: str) -> Any:
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def _weights_from(doc: Mapping[str, Any]) -> WeightConfig:
    try:
        return WeightConfig(
            alpha=float(doc.get("alpha", 0.4)),
            beta=float(doc.get("beta", 0.4)),
            gamma=float(doc.get("gamma", 0.2)),
            phi=float(doc.get("phi", 0.01)),
            kappa=int(doc.get("kappa", 3)),
            normalize=bool(doc.get("normalize", True)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid weights: {exc}") from None


def scenario_from_dict(doc: Mapping[str, Any], base_dir: str | Path = ".") -> ScenarioConfig:
    base = Path(base_dir)
    unknown = sorted(set(doc) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {unknown}")
    for key in ("fleet", "dag"):
        if key not in doc:
            raise ConfigError(f"scenario is missing required key {key!r}")

    fleet_doc, fleet_path = doc["fleet"], None
    if isinstance(fleet_doc, str):
        fleet_path = str(base / fleet_doc)
        fleet_doc = _read_json(base / doc["fleet"], "fleet")
    dag_doc, dag_path = doc["dag"], None
    if isinstance(dag_doc, str):
        dag_path = str(base / dag_doc)
        dag_doc = _read_json(base / doc["dag"], "DAG")

    try:
        default_rtt = doc.get("default_rtt_seconds")
        fleet = fleet_from_dict(fleet_doc, None if default_rtt is None else float(default_rtt))
    except FleetError as exc:
        raise ConfigError(f"fleet schema violation: {exc}") from None
    try:
        dag = dag_from_dict(dag_doc)
    except DagError as exc:
        raise ConfigError(f"DAG schema violation: {exc}") from None

    initiators = doc.get("initiators")
    if initiators is None:
        capable = sorted(d.device_id for d in fleet.devices if d.is_initiator_capable)
        if not capable:
            raise ConfigError("no initiator given and no initiator-capable device in the fleet")
        initiators = capable[:1]

    arr = doc.get("arrivals", {})
    try:
        arrivals = ArrivalProcess(int(arr.get("count", 100)), float(arr.get("horizon", 250.0)))
        scheduler = SchedulerKind(doc.get("scheduler", "mtec"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        traffic = traffic_from_dict(doc.get("traffic") or {})
    except ValueError as exc:
        raise ConfigError(f"invalid traffic model: {exc}") from None

    seeds = doc.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    try:
        return ScenarioConfig(
            scenario_id=str(doc.get("scenario_id", dag.app_id)),
            fleet=fleet,
            dag=dag,
            initiators=tuple(str(i) for i in initiators),
            arrivals=arrivals,
            weights=_weights_from(doc.get("weights", {})),
            eta=float(doc.get("eta", fleet.eta)),
            probe_packet_bytes=float(doc.get("probe_packet_bytes", DEFAULT_PROBE_PACKET_BYTES)),
            probe_interval_seconds=float(doc.get("probe_interval_seconds", 5.0)),
            traffic=traffic,
            failures=bool(doc.get("failures", False)),
            scripted_failures=tuple((str(f["device_id"]), float(f["time"])) for f in doc.get("scripted_failures", [])),
            scheduler=scheduler,
            seeds=tuple(int(s) for s in seeds),
            model_source=doc.get("model_source"),
            participators=None if doc.get("participators") is None else tuple(doc["participators"]),
            fleet_path=fleet_path,
            dag_path=dag_path,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


def load_scenario(path: str | Path, overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    path = Path(path)
    doc = _read_json(path, "scenario")
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario file {path} must hold a JSON object")
    if overrides:
        doc = apply_overrides(doc, overrides)
    return scenario_from_dict(doc, path.parent)


__all__ = [
    "ArrivalProcess",
    "ConfigError",
    "ScenarioConfig",
    "apply_overrides",
    "load_scenario",
    "parse_override",
    "scenario_from_dict",
]
