"""Background-traffic model: scheduled speed factors plus optional lognormal jitter."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Mapping

import numpy as np

from .cluster import LinkTable
from .rng import stream

ALL_LINKS = "*"

Schedule = tuple[tuple[float, float], ...]


def _check_schedule(sched: Schedule, where: str) -> None:
    last = -math.inf
    for start, factor in sched:
        if start < last:
            raise ValueError(f"{where}: schedule times must be nondecreasing")
        if not 0 < factor <= 1:
            raise ValueError(f"{where}: factor must be in (0, 1], got {factor}")
        last = start


@dataclass(frozen=True)
class TrafficModel:
    """Per-link multiplicative speed factors over time.

    ``schedules`` maps a directed (src, dst) pair, or ``"*"`` for every link,
    to (start_time, factor) steps; a factor holds until the next step and is
    1.0 before the first. Jitter multiplies each link by exp(sigma * z) with
    z redrawn every ``jitter_interval`` seconds.
    """

    schedules: Mapping[tuple[str, str] | str, Schedule] = field(default_factory=dict)
    jitter_sigma: float = 0.0
    jitter_interval: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        for key, sched in self.schedules.items():
            _check_schedule(sched, f"traffic schedule {key!r}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if not self.jitter_interval > 0:
            raise ValueError("jitter_interval must be > 0")

    def __hash__(self) -> int:
        return hash((tuple(sorted(map(str, self.schedules))), self.jitter_sigma, self.jitter_interval, self.seed))

    @property
    def is_static(self) -> bool:
        return self.jitter_sigma == 0 and all(
            all(f == 1.0 for _, f in sched) for sched in self.schedules.values()
        )

    def factor(self, pair: tuple[str, str], time: float) -> float:
        f = 1.0
        for key in (ALL_LINKS, pair):
            sched = self.schedules.get(key)
            if sched:
                idx = bisect.bisect_right([s for s, _ in sched], time) - 1
                if idx >= 0:
                    f *= sched[idx][1]
        return f

    def change_times(self) -> list[float]:
        """Sorted distinct instants where a scheduled factor changes."""
        return sorted({s for sched in self.schedules.values() for s, _ in sched})

    def epoch(self, time: float) -> int:
        return int(math.floor(time / self.jitter_interval))


@lru_cache(maxsize=256)
def _jitter(seed: int, sigma: float, n: int, epoch: int) -> np.ndarray:
    rng = stream(seed, "jitter", epoch)
    return np.exp(sigma * rng.standard_normal(n))


def apply_traffic(links: LinkTable, model: TrafficModel, time: float) -> LinkTable:
    """Snapshot of ``links`` under the traffic active at ``time``; ``links`` is untouched."""
    if model.is_static:
        return links
    pairs = sorted(links.speed)
    mult = None
    if model.jitter_sigma > 0:
        mult = _jitter(model.seed, model.jitter_sigma, len(pairs), model.epoch(time))
    factors = {}
    for i, pair in enumerate(pairs):
        f = model.factor(pair, time)
        if mult is not None:
            f *= float(mult[i])
        if f != 1.0:
            factors[pair] = f
    return links.scaled(factors)


def traffic_from_dict(doc: Mapping[str, Any]) -> TrafficModel:
    schedules: dict[tuple[str, str] | str, Schedule] = {}
    for entry in doc.get("links", []):
        sched = tuple((float(s), float(f)) for s, f in entry["schedule"])
        if entry.get("src") in (None, ALL_LINKS) and entry.get("dst") in (None, ALL_LINKS):
            key: tuple[str, str] | str = ALL_LINKS
        else:
            key = (str(entry["src"]), str(entry["dst"]))
        schedules[key] = sched
        if key != ALL_LINKS and entry.get("symmetric", True):
            schedules.setdefault((key[1], key[0]), sched)
    return TrafficModel(
        schedules=schedules,
        jitter_sigma=float(doc.get("jitter_sigma", 0.0)),
        jitter_interval=float(doc.get("jitter_interval", 1.0)),
        seed=int(doc.get("seed", 0)),
    )
