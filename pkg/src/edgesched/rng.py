"""Labelled random sub-streams so that independent draws never share state."""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str | int) -> int:
    if isinstance(label, int):
        return label & 0xFFFFFFFF
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, *labels: str | int) -> np.random.Generator:
    """Generator for (seed, labels...); equal inputs give identical streams."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_key(lab) for lab in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
