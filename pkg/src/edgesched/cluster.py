"""Device fleet, network links, interference, failure and size models."""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .dag import TaskSpec

DEFAULT_ETA = 1.5
DEFAULT_RTT_SECONDS = 0.05
DEFAULT_PROBE_PACKET_BYTES = 65_536


class FleetError(ValueError):
    """Invalid device or link description."""


class UnprofiledDevice(LookupError):
    """The device has no interference profile for the task type."""

    def __init__(self, device_id: str, task_type: str) -> None:
        super().__init__(f"device {device_id!r} is not profiled for task type {task_type!r}")
        self.device_id = device_id
        self.task_type = task_type


class Tier(str, enum.Enum):
    CLOUD = "cloud"
    EDGE_CLOUD = "edge_cloud"
    CELL_SITE = "cell_site"


@dataclass(frozen=True, slots=True)
class DeviceProfile:
    device_id: str
    tier: Tier
    mem_total: int
    cost_rate: float
    failure_rate: float
    cached_models: frozenset[str] = frozenset()
    # task_type -> (base_seconds, slope_seconds)
    interference_model: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    is_initiator_capable: bool = False

    def __post_init__(self) -> None:
        if self.mem_total <= 0:
            raise FleetError(f"{self.device_id}: mem_total must be > 0")
        if self.cost_rate < 0:
            raise FleetError(f"{self.device_id}: cost_rate must be >= 0")
        if self.failure_rate < 0:
            raise FleetError(f"{self.device_id}: failure_rate must be >= 0")
        for ttype, (base, slope) in self.interference_model.items():
            if not base > 0 or slope < 0:
                raise FleetError(f"{self.device_id}: bad interference entry for {ttype!r}")

    def cache_bytes(self, model_sizes: Mapping[str, int]) -> int:
        return sum(model_sizes.get(m, 0) for m in self.cached_models)


@dataclass(slots=True)
class DeviceState:
    """Mutable view of a device; the simulator owns the live instances."""

    profile: DeviceProfile
    mem_free: int
    running_task_types: Counter[str] = field(default_factory=Counter)
    alive: bool = True

    @classmethod
    def fresh(cls, profile: DeviceProfile, model_sizes: Mapping[str, int] | None = None) -> DeviceState:
        # cached models are charged against free memory
        held = profile.cache_bytes(model_sizes or {})
        return cls(profile, max(profile.mem_total - held, 0))

    @property
    def device_id(self) -> str:
        return self.profile.device_id

    def copy(self) -> DeviceState:
        return DeviceState(self.profile, self.mem_free, Counter(self.running_task_types), self.alive)

    def distinct_running_types(self) -> int:
        return sum(1 for n in self.running_task_types.values() if n > 0)


def estimate_exec_time(device: DeviceState, task: TaskSpec) -> float:
    """Linear interference predictor: base + slope * (#distinct co-located types)."""
    try:
        base, slope = device.profile.interference_model[task.task_type]
    except KeyError:
        raise UnprofiledDevice(device.device_id, task.task_type) from None
    return base + slope * device.distinct_running_types()


def probe_speed(rtt: float, packet_size: float, eta: float) -> float:
    """Two-way probe estimate of transmission speed, divided by the over-provision eta."""
    if not rtt > 0:
        raise ValueError("rtt must be > 0")
    if not packet_size > 0:
        raise ValueError("packet_size must be > 0")
    if not eta >= 1:
        raise ValueError(f"eta must be >= 1, got {eta}")
    return 2.0 * packet_size / (rtt * eta)


def device_failure_prob(failure_rate: float, window: float) -> float:
    if failure_rate < 0 or window < 0:
        raise ValueError("failure_rate and window must be >= 0")
    return -math.expm1(-failure_rate * window)


@dataclass(frozen=True)
class LinkTable:
    """Directed eta-adjusted speeds (bytes/s) with the rtts they came from."""

    speed: Mapping[tuple[str, str], float]
    rtt: Mapping[tuple[str, str], float]
    eta: float = DEFAULT_ETA
    default_speed: float | None = None

    def speed_between(self, src: str, dst: str) -> float:
        if src == dst:
            return math.inf
        s = self.speed.get((src, dst))
        if s is None:
            if self.default_speed is None:
                raise KeyError(f"no link {src!r} -> {dst!r}")
            return self.default_speed
        return s

    def transfer_time(self, nbytes: float, src: str, dst: str) -> float:
        if nbytes <= 0 or src == dst:
            return 0.0
        return nbytes / self.speed_between(src, dst)

    @classmethod
    def from_rtts(
        cls,
        rtts: Mapping[tuple[str, str], float],
        *,
        eta: float = DEFAULT_ETA,
        packet_bytes: float = DEFAULT_PROBE_PACKET_BYTES,
        default_rtt: float | None = None,
    ) -> LinkTable:
        speed = {pair: probe_speed(r, packet_bytes, eta) for pair, r in rtts.items() if pair[0] != pair[1]}
        default_speed = None if default_rtt is None else probe_speed(default_rtt, packet_bytes, eta)
        return cls(speed=speed, rtt=dict(rtts), eta=eta, default_speed=default_speed)

    def scaled(self, factors: Mapping[tuple[str, str], float]) -> LinkTable:
        """Return a copy with selected link speeds multiplied by a factor."""
        if not factors:
            return self
        speed = dict(self.speed)
        for pair, f in factors.items():
            speed[pair] = self.speed_between(*pair) * f
        return replace(self, speed=speed)


@dataclass(frozen=True, slots=True)
class _SizeStats:
    n: int = 0
    mean_x: float = 0.0
    mean_y: float = 0.0
    m2x: float = 0.0
    cxy: float = 0.0

    def add(self, x: float, y: float) -> _SizeStats:
        n = self.n + 1
        dx = x - self.mean_x
        mean_x = self.mean_x + dx / n
        mean_y = self.mean_y + (y - self.mean_y) / n
        return _SizeStats(
            n=n,
            mean_x=mean_x,
            mean_y=mean_y,
            m2x=self.m2x + dx * (x - mean_x),
            cxy=self.cxy + dx * (y - mean_y),
        )

    def line(self) -> tuple[float, float]:
        """(slope, intercept); flat at the mean when inputs never varied."""
        if self.n < 2 or self.m2x <= 1e-12 * max(self.mean_x * self.mean_x, 1.0):
            return 0.0, self.mean_y
        slope = self.cxy / self.m2x
        return slope, self.mean_y - slope * self.mean_x


@dataclass(frozen=True)
class SizeRegression:
    """Per task-type online least-squares map from input bytes to output bytes."""

    stats: Mapping[str, _SizeStats] = field(default_factory=dict)

    def count(self, task_type: str) -> int:
        s = self.stats.get(task_type)
        return 0 if s is None else s.n

    def coefficients(self, task_type: str) -> tuple[float, float] | None:
        s = self.stats.get(task_type)
        if s is None or s.n == 0:
            return None
        return s.line()


def predict_output_size(
    reg: SizeRegression,
    task_type: str,
    input_bytes: float,
    output_size_hint: float | None = None,
) -> float:
    coef = reg.coefficients(task_type)
    if coef is None:
        return float(output_size_hint) if output_size_hint is not None else float(max(input_bytes, 0))
    slope, intercept = coef
    return max(slope * input_bytes + intercept, 0.0)


def update_size_regression(
    reg: SizeRegression, task_type: str, input_bytes: float, output_bytes: float
) -> SizeRegression:
    if input_bytes < 0 or output_bytes < 0:
        raise ValueError("sizes must be >= 0")
    stats = dict(reg.stats)
    stats[task_type] = stats.get(task_type, _SizeStats()).add(float(input_bytes), float(output_bytes))
    return SizeRegression(stats)


def partition_networks(
    initiators: Iterable[str],
    participators: Iterable[str],
    rtt: LinkTable | Mapping[tuple[str, str], float],
    default_rtt: float = DEFAULT_RTT_SECONDS,
) -> dict[str, set[str]]:
    """Attach each participator to its closest initiator by rtt.

    Ties go to the lexicographically smaller initiator id.
    """
    inits = sorted(set(initiators))
    parts = sorted(set(participators))
    if not inits:
        raise ValueError("at least one initiator is required")
    overlap = set(inits) & set(parts)
    if overlap:
        raise ValueError(f"initiator and participator sets overlap: {sorted(overlap)}")
    table = rtt.rtt if isinstance(rtt, LinkTable) else rtt

    def dist(i: str, p: str) -> float:
        r = table.get((i, p))
        if r is None:
            r = table.get((p, i), default_rtt)
        return r

    out: dict[str, set[str]] = {i: set() for i in inits}
    for p in parts:
        best = min(inits, key=lambda i: (dist(i, p), i))
        out[best].add(p)
    return out


# --- fleet file ------------------------------------------------------------


@dataclass(frozen=True)
class Fleet:
    devices: tuple[DeviceProfile, ...]
    rtts: Mapping[tuple[str, str], float]
    eta: float = DEFAULT_ETA
    default_rtt_seconds: float = DEFAULT_RTT_SECONDS

    @property
    def by_id(self) -> dict[str, DeviceProfile]:
        return {d.device_id: d for d in self.devices}

    def links(self, packet_bytes: float = DEFAULT_PROBE_PACKET_BYTES, eta: float | None = None) -> LinkTable:
        return LinkTable.from_rtts(
            self.rtts,
            eta=self.eta if eta is None else eta,
            packet_bytes=packet_bytes,
            default_rtt=self.default_rtt_seconds,
        )

    def subset(self, keep: Iterable[str]) -> Fleet:
        keep = set(keep)
        devices = tuple(d for d in self.devices if d.device_id in keep)
        rtts = {k: v for k, v in self.rtts.items() if k[0] in keep and k[1] in keep}
        return Fleet(devices, rtts, self.eta, self.default_rtt_seconds)


def fleet_from_dict(doc: Mapping[str, Any], default_rtt_seconds: float | None = None) -> Fleet:
    try:
        devices = []
        for d in doc["devices"]:
            interference = {k: (float(v[0]), float(v[1])) for k, v in d.get("interference", {}).items()}
            devices.append(
                DeviceProfile(
                    device_id=str(d["device_id"]),
                    tier=Tier(d["tier"]),
                    mem_total=int(d["mem_total"]),
                    cost_rate=float(d["cost_rate"]),
                    failure_rate=float(d["failure_rate"]),
                    cached_models=frozenset(d.get("cached_models", [])),
                    interference_model=interference,
                    is_initiator_capable=bool(d.get("initiator_capable", False)),
                )
            )
    except KeyError as exc:
        raise FleetError(f"device entry missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FleetError):
            raise
        raise FleetError(f"malformed device entry: {exc}") from None

    ids = [d.device_id for d in devices]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise FleetError(f"duplicate device_id: {dup}")
    known = set(ids)
    rtts: dict[tuple[str, str], float] = {}
    explicit: set[tuple[str, str]] = set()
    for link in doc.get("links", []):
        src, dst, r = str(link["src"]), str(link["dst"]), float(link["rtt_seconds"])
        if src not in known or dst not in known:
            raise FleetError(f"link {src!r} -> {dst!r} references an unknown device")
        if not r > 0:
            raise FleetError(f"link {src!r} -> {dst!r}: rtt_seconds must be > 0")
        rtts[(src, dst)] = r
        explicit.add((src, dst))
        # links are symmetric unless the reverse direction is listed too
        if (dst, src) not in explicit:
            rtts[(dst, src)] = r
    eta = float(doc.get("eta", DEFAULT_ETA))
    if eta < 1:
        raise FleetError(f"eta must be >= 1, got {eta}")
    if default_rtt_seconds is None:
        default_rtt_seconds = float(doc.get("default_rtt_seconds", DEFAULT_RTT_SECONDS))
    return Fleet(tuple(devices), rtts, eta, default_rtt_seconds)


def load_fleet(path: str | Path, default_rtt_seconds: float | None = None) -> Fleet:
    with open(path, encoding="utf-8") as fh:
        return fleet_from_dict(json.load(fh), default_rtt_seconds)
