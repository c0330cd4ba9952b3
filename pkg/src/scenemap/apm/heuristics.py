"""Orientation and vertical-attribute baselines that need no learned weights."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import ConfigError, DataError
from ..layout import VOID, SemanticMap

KINDS = ("random", "majority", "inward")


@dataclass
class OrientationStats:
    """Orientation class counts per category plus the pooled counts."""

    per_category: dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, category: int, r: int) -> None:
        self.per_category.setdefault(int(category), np.zeros(4, dtype=np.int64))[int(r)] += 1

    @property
    def overall(self) -> np.ndarray:
        if not self.per_category:
            return np.zeros(4, dtype=np.int64)
        return np.sum(list(self.per_category.values()), axis=0)

    def majority(self, category: int) -> int:
        counts = self.per_category.get(int(category))
        if counts is None or counts.sum() == 0:
            counts = self.overall
        return int(np.argmax(counts))

    @classmethod
    def from_scenes(cls, scenes: Iterable) -> "OrientationStats":
        st = cls()
        for sc in scenes:
            for inst in sc.layout.instances:
                st.add(inst.category, inst.orientation)
        return st


def _mask_of(mask) -> np.ndarray:
    return np.asarray(mask.mask if hasattr(mask, "mask") else mask, dtype=bool)


def inward_orientation(mask, smap: SemanticMap) -> int:
    """Face from the instance centroid toward the floor-region centroid."""
    m = _mask_of(mask)
    room = smap.cells != VOID
    if not m.any() or not room.any():
        raise DataError("inward heuristic needs a non-empty instance and room")
    rows, cols = np.nonzero(m)
    rr, rc = np.nonzero(room)
    dz = rr.mean() - rows.mean()
    dx = rc.mean() - cols.mean()
    # candidates ordered by class index: 0 (+z), 1 (+x), 2 (-z), 3 (-x)
    score = np.array([dz, dx, -dz, -dx])
    best = np.flatnonzero(np.isclose(score, score.max(), rtol=0, atol=1e-9))
    return int(best[0])


def heuristic_orientation(kind: str, mask, smap: SemanticMap, stats: OrientationStats | None = None,
                          rng: np.random.Generator | None = None, category: int | None = None) -> int:
    if kind == "random":
        if rng is None:
            raise ConfigError("random orientation needs a generator")
        return int(rng.integers(0, 4))
    if kind == "majority":
        if stats is None:
            raise ConfigError("majority orientation needs class frequencies")
        cat = category if category is not None else getattr(mask, "category", None)
        return stats.majority(-1 if cat is None else cat)
    if kind == "inward":
        return inward_orientation(mask, smap)
    raise ConfigError(f"unknown orientation heuristic {kind!r}; choose from {KINDS}")


class VerticalPriors:
    """Per-category mean vertical size and bottom offset in meters."""

    def __init__(self, means: dict[int, tuple[float, float]], global_mean: tuple[float, float] | None = None):
        if not means:
            raise ConfigError("vertical priors table is empty")
        self.means = {int(k): (float(v[0]), float(v[1])) for k, v in means.items()}
        if global_mean is None:
            arr = np.array(list(self.means.values()))
            global_mean = tuple(arr.mean(axis=0))
        self.global_mean = (float(global_mean[0]), float(global_mean[1]))

    @classmethod
    def from_scenes(cls, scenes: Iterable) -> "VerticalPriors":
        acc: dict[int, list[tuple[float, float]]] = {}
        for sc in scenes:
            for inst in sc.layout.instances:
                acc.setdefault(inst.category, []).append((inst.size[1], inst.position[1]))
        if not acc:
            raise ConfigError("no instances to build vertical priors from")
        allv = np.array([v for vs in acc.values() for v in vs])
        return cls({k: tuple(np.mean(v, axis=0)) for k, v in acc.items()}, tuple(allv.mean(axis=0)))

    def to_dict(self) -> dict:
        return {
            "format": "scenemap-vertical-priors",
            "version": 1,
            "global": list(self.global_mean),
            "categories": {str(k): list(v) for k, v in sorted(self.means.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerticalPriors":
        return cls({int(k): tuple(v) for k, v in d.get("categories", {}).items()}, tuple(d["global"]) if "global" in d else None)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "VerticalPriors":
        return cls.from_dict(json.loads(Path(path).read_text()))


def heuristic_vertical(category: int, priors: VerticalPriors) -> tuple[float, float]:
    if priors is None or not priors.means:
        raise ConfigError("vertical priors table is empty")
    return priors.means.get(int(category), priors.global_mean)
