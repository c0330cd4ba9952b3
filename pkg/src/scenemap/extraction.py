"""Split a semantic map into object instances."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import CategoryError, DataError
from .layout import FIRST_OBJECT, VOID, SemanticMap

FALLBACK_THRESHOLD = 0.001
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class InstanceMask:
    mask: np.ndarray  # H x W bool
    category: int

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    def bbox(self) -> tuple[int, int, int, int]:
        """(r0, c0, r1, c1) with exclusive upper bounds."""
        rows = np.flatnonzero(self.mask.any(axis=1))
        cols = np.flatnonzero(self.mask.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


@dataclass(frozen=True)
class ExtractedInstance:
    mask: InstanceMask
    center: tuple[float, float]  # world (x, z)
    footprint: tuple[float, float]  # (extent along x, extent along z)

    @property
    def category(self) -> int:
        return self.mask.category


def connected_components(smap: SemanticMap, category: int) -> list[InstanceMask]:
    """Maximal 4-connected regions of ``category`` ordered by (min row, min col)."""
    if category < FIRST_OBJECT:
        raise CategoryError(f"connected components are only taken for object categories, got {category}")
    labels, n = ndimage.label(smap.cells == category, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    comps = [InstanceMask(labels == k, category) for k in range(1, n + 1)]
    comps.sort(key=lambda m: m.bbox()[:2])
    return comps


def room_pixel_count(smap: SemanticMap) -> int:
    return int((smap.cells != VOID).sum())


class ThresholdTable:
    def __init__(self, ratios: dict[int, float] | None = None, fallback: float = FALLBACK_THRESHOLD):
        ratios = {int(k): float(v) for k, v in (ratios or {}).items()}
        for k, v in ratios.items():
            if not 0 < v <= 1:
                raise DataError(f"threshold for category {k} must lie in (0, 1], got {v}")
        self.ratios = ratios
        self.fallback = fallback

    def __getitem__(self, category: int) -> float:
        return self.ratios.get(int(category), self.fallback)

    def to_dict(self) -> dict:
        return {"fallback": self.fallback, "ratios": {str(k): v for k, v in sorted(self.ratios.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdTable":
        return cls({int(k): v for k, v in d["ratios"].items()}, d.get("fallback", FALLBACK_THRESHOLD))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ThresholdTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def compute_thresholds(layouts: Iterable, fallback: float = FALLBACK_THRESHOLD) -> ThresholdTable:
    """Per category, the smallest instance-to-room pixel ratio seen in the data.

    Items are anything with ``.layout.map`` plus ``.instance_mask(i)`` (generated
    scenes) or a ``(SemanticMap, [InstanceMask, ...])`` pair.
    """
    ratios: dict[int, float] = {}
    seen = False
    for item in layouts:
        seen = True
        if isinstance(item, tuple):
            smap, masks = item
        else:
            smap = item.layout.map
            masks = [InstanceMask(item.instance_mask(i), inst.category) for i, inst in enumerate(item.layout.instances)]
        room = room_pixel_count(smap)
        for m in masks:
            r = m.pixel_count / room
            ratios[m.category] = min(r, ratios.get(m.category, np.inf))
    if not seen:
        raise DataError("cannot compute thresholds from an empty dataset")
    return ThresholdTable(ratios, fallback)


def describe_instance(mask: InstanceMask, scale: float) -> ExtractedInstance:
    r0, c0, r1, c1 = mask.bbox()
    center = ((c0 + c1) / 2 * scale, (r0 + r1) / 2 * scale)
    footprint = ((c1 - c0) * scale, (r1 - r0) * scale)
    return ExtractedInstance(mask, center, footprint)


def extract_instances(smap: SemanticMap, thresholds: ThresholdTable, categories: Iterable[int] | None = None) -> list[ExtractedInstance]:
    """Connected components per object category, dropping those below the category threshold."""
    room = room_pixel_count(smap)
    if room == 0:
        return []
    if categories is None:
        present = np.unique(smap.cells)
        categories = [int(c) for c in present if c >= FIRST_OBJECT]
    out = []
    for cat in sorted(categories):
        for m in connected_components(smap, cat):
            if m.pixel_count / room >= thresholds[cat]:
                out.append(describe_instance(m, smap.scale))
    return out


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths starting with a run of zeros."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return runs


def rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos, val = 0, False
    for r in runs:
        if val:
            flat[pos:pos + r] = True
        pos += r
        val = not val
    return flat.reshape(shape)


def extraction_report(instances: list[ExtractedInstance], smap: SemanticMap) -> dict:
    return {
        "format": "scenemap-extraction",
        "version": 1,
        "H": smap.height,
        "W": smap.width,
        "scale": smap.scale,
        "instances": [
            {
                "category": e.category,
                "pixels": e.mask.pixel_count,
                "mask_rle": rle_encode(e.mask.mask),
                "center": list(e.center),
                "footprint": list(e.footprint),
            }
            for e in instances
        ],
    }


def instances_from_report(report: dict) -> list[ExtractedInstance]:
    shape = (report["H"], report["W"])
    out = []
    for e in report["instances"]:
        m = InstanceMask(rle_decode(e["mask_rle"], shape), e["category"])
        out.append(ExtractedInstance(m, tuple(e["center"]), tuple(e["footprint"])))
    return out
