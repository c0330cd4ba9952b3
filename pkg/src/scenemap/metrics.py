"""Plausibility and distribution metrics for generated scenes."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .assembly.geometry import point_in_polygon
from .assembly.scene import Placement, Scene3D, footprint_corners, footprint_extent
from .errors import MetricError
from .layout import FIRST_OBJECT, ROOM_TYPES

log = logging.getLogger(__name__)

CKL_EPS = 1e-6
OOB_TOL = 1e-6
COL_TOL = 1e-9
NAV_CELL = 0.1
OBSTACLE_CUTOFF = 2.0
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class CategoryHistogram:
    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.float64)
        if counts.ndim != 1 or (counts < 0).any():
            raise MetricError("histogram counts must be a non-negative vector")
        self.counts = counts

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        t = self.total
        return self.counts / t if t > 0 else np.zeros_like(self.counts)

    @classmethod
    def from_maps(cls, maps, K: int) -> "CategoryHistogram":
        """Object-category pixel counts over semantic maps (reserved indices excluded)."""
        counts = np.zeros(K - FIRST_OBJECT)
        for m in maps:
            cells = np.asarray(getattr(m, "cells", m)).ravel()
            counts += np.bincount(cells, minlength=K)[FIRST_OBJECT:K]
        return cls(counts)

    @classmethod
    def from_instances(cls, categories, K: int) -> "CategoryHistogram":
        cats = np.asarray(list(categories), dtype=np.int64) - FIRST_OBJECT
        return cls(np.bincount(cats, minlength=K - FIRST_OBJECT).astype(np.float64))


def ckl(p: CategoryHistogram, q: CategoryHistogram, eps: float = CKL_EPS) -> float:
    """sum_c p(c) log((p(c)+eps)/(q(c)+eps)) on normalized frequencies (multiply by 100 to report)."""
    if p.total == 0 and q.total == 0:
        raise MetricError("both histograms are empty")
    if p.counts.shape != q.counts.shape:
        raise MetricError("histograms cover different category sets")
    pf, qf = p.frequencies(), q.frequencies()
    return float(np.sum(pf * np.log((pf + eps) / (qf + eps))))


def oob(scene: Scene3D, tol: float = OOB_TOL) -> tuple[list[bool], float, bool]:
    """Per-object flags, object ratio and scene flag: any footprint corner outside the floor polygon."""
    flags = []
    for p in scene.placements:
        inside = point_in_polygon(footprint_corners(p), scene.room.polygon, tol=tol)
        flags.append(not bool(inside.all()))
    ratio = float(np.mean(flags)) if flags else 0.0
    return flags, ratio, any(flags)


def collides(a: Placement, b: Placement, tol: float = COL_TOL) -> bool:
    ax0, az0, ax1, az1 = footprint_extent(a)
    bx0, bz0, bx1, bz1 = footprint_extent(b)
    ox = min(ax1, bx1) - max(ax0, bx0)
    oz = min(az1, bz1) - max(az0, bz0)
    oy = min(a.position[1] + a.size[1], b.position[1] + b.size[1]) - max(a.position[1], b.position[1])
    return ox > tol and oz > tol and oy > tol


def collision_flags(placements: Sequence[Placement], tol: float = COL_TOL) -> np.ndarray:
    n = len(placements)
    hit = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if collides(placements[i], placements[j], tol):
                hit[i] = hit[j] = True
    return hit


def collision_rate(scene: Scene3D) -> float:
    if not scene.placements:
        return 0.0
    return 100.0 * float(collision_flags(scene.placements).mean())


def navigability(scene: Scene3D, cell: float = NAV_CELL, obstacle_cutoff: float = OBSTACLE_CUTOFF) -> float:
    """Largest 4-connected free floor region as a percentage of all free floor cells."""
    poly = scene.room.polygon
    x0, z0 = poly.min(axis=0)
    x1, z1 = poly.max(axis=0)
    nx = max(int(np.ceil((x1 - x0) / cell - 1e-9)), 1)
    nz = max(int(np.ceil((z1 - z0) / cell - 1e-9)), 1)
    cx = x0 + (np.arange(nx) + 0.5) * cell
    cz = z0 + (np.arange(nz) + 0.5) * cell
    gx, gz = np.meshgrid(cx, cz)
    pts = np.stack([gx.ravel(), gz.ravel()], axis=1)
    floor = point_in_polygon(pts, poly, tol=0.0).reshape(nz, nx)
    blocked = np.zeros_like(floor)
    for p in scene.placements:
        if p.position[1] >= obstacle_cutoff:
            continue
        ex0, ez0, ex1, ez1 = footprint_extent(p)
        blocked |= (gx >= ex0) & (gx <= ex1) & (gz >= ez0) & (gz <= ez1)
    free = floor & ~blocked
    total = int(free.sum())
    if total == 0:
        log.warning("no free floor cells; navigability is 0")
        return 0.0
    labels, n = ndimage.label(free, structure=FOUR_CONNECTED)
    largest = int(np.bincount(labels.ravel())[1:].max())
    return 100.0 * largest / total


@dataclass
class MetricRow:
    group: str
    scenes: int
    CKL: float  # x 100
    OOB_S: float
    OOB_O: float
    COL: float
    NAV: float
    objects: float


@dataclass
class MetricReport:
    rows: list[MetricRow]

    def row(self, group: str) -> MetricRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    @property
    def overall(self) -> MetricRow:
        return self.row("overall")

    def to_dict(self) -> dict:
        return {"format": "scenemap-metrics", "version": 1, "rows": [asdict(r) for r in self.rows]}

    def write(self, csv_path=None, json_path=None) -> None:
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=1))
        if csv_path is not None:
            fields = list(MetricRow.__dataclass_fields__)
            with open(csv_path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
                w.writeheader()
                for r in self.rows:
                    d = asdict(r)
                    w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in d.items()})


def _group_row(name: str, scenes: Sequence[Scene3D], gt: CategoryHistogram | None, K: int) -> MetricRow:
    n_obj, n_oob, n_col = 0, 0, 0
    scene_oob, navs, counts = [], [], []
    for s in scenes:
        flags, _, sflag = oob(s)
        n_obj += len(flags)
        n_oob += sum(flags)
        n_col += int(collision_flags(s.placements).sum())
        scene_oob.append(sflag)
        navs.append(navigability(s))
        counts.append(len(s.placements))
    if gt is not None:
        q = CategoryHistogram.from_instances([p.category for s in scenes for p in s.placements], K)
        ckl_v = 100.0 * ckl(gt, q) if (gt.total or q.total) else 0.0
    else:
        ckl_v = float("nan")
    return MetricRow(
        group=name,
        scenes=len(scenes),
        CKL=ckl_v,
        OOB_S=100.0 * float(np.mean(scene_oob)),
        OOB_O=100.0 * n_oob / n_obj if n_obj else 0.0,
        COL=100.0 * n_col / n_obj if n_obj else 0.0,
        NAV=float(np.mean(navs)),
        objects=float(np.mean(counts)),
    )


def evaluate_corpus(scenes: Sequence[Scene3D], K: int, gt_histograms: dict[int, CategoryHistogram] | None = None,
                    csv_path=None, json_path=None) -> MetricReport:
    """Metrics per room type and their unweighted mean as the ``overall`` row.

    ``gt_histograms`` maps room-type index to the ground-truth object-instance
    histogram used for CKL. Room types with no scenes are left out.
    """
    if not scenes:
        raise MetricError("cannot evaluate an empty corpus")
    rows = []
    for rt, name in enumerate(ROOM_TYPES):
        group = [s for s in scenes if s.room_type == rt]
        if group:
            gt = gt_histograms.get(rt) if gt_histograms else None
            rows.append(_group_row(name, group, gt, K))
    fields = ("CKL", "OOB_S", "OOB_O", "COL", "NAV", "objects")
    overall = MetricRow("overall", sum(r.scenes for r in rows),
                        *[float(np.mean([getattr(r, f) for r in rows])) for f in fields])
    report = MetricReport(rows + [overall])
    report.write(csv_path, json_path)
    return report
