from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..layout import SemanticMap
from ..optim import Adam
from .model import ApmConfig, ApmModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ApmTrainConfig:
    grid: int = 8
    d: int = 32
    hidden: int = 64
    readout: str = "mask"
    residual: bool = True
    lr: float = 3e-3
    weight_decay: float = 1e-3
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InstanceSet:
    """Pooled encoder inputs and targets for a flat list of instances."""

    Lp: np.ndarray  # N, G, K
    Mp: np.ndarray  # N, G, 1
    s_y: np.ndarray
    p_y: np.ndarray
    r: np.ndarray
    category: np.ndarray

    def __len__(self):
        return len(self.r)

    def subset(self, idx) -> "InstanceSet":
        return InstanceSet(self.Lp[idx], self.Mp[idx], self.s_y[idx], self.p_y[idx], self.r[idx], self.category[idx])


def scene_examples(scene) -> list[tuple[SemanticMap, np.ndarray, tuple[float, float, int], int]]:
    """(map, instance mask, (s_y, p_y, r), category) for each placed object of a generated scene."""
    smap = scene.layout.map
    return [
        (smap, scene.instance_mask(i), (inst.size[1], inst.position[1], inst.orientation), inst.category)
        for i, inst in enumerate(scene.layout.instances)
    ]


def build_instance_set(model: ApmModel, examples: Sequence) -> InstanceSet:
    if not examples:
        raise DataError("no instances to encode")
    layout_cache: dict[int, np.ndarray] = {}
    Lp, Mp, s, p, r, cat = [], [], [], [], [], []
    for smap, mask, (s_y, p_y, rr), c in examples:
        key = id(smap)
        if key not in layout_cache:
            layout_cache[key] = model.encode_layout(smap)
        Lp.append(layout_cache[key])
        Mp.append(model.encode_mask(mask))
        s.append(s_y)
        p.append(p_y)
        r.append(rr)
        cat.append(c)
    return InstanceSet(np.stack(Lp), np.stack(Mp), np.array(s, float), np.array(p, float),
                       np.array(r, dtype=np.int64), np.array(cat, dtype=np.int64))


def train_apm(scenes: Sequence, config: ApmTrainConfig, K: int, log_path=None) -> tuple[ApmModel, list[dict]]:
    """Fit an :class:`ApmModel` on every ground-truth instance of ``scenes``.

    ``scenes`` holds generated scenes or ready-made example tuples
    ``(map, mask, (s_y, p_y, r), category)``.
    """
    examples = []
    for sc in scenes:
        examples.extend(scene_examples(sc) if hasattr(sc, "layout") else [sc])
    if not examples:
        raise DataError("cannot train the attribute model on an empty dataset")
    model = ApmModel(ApmConfig(K=K, grid=config.grid, d=config.d, hidden=config.hidden,
                               readout=config.readout, residual=config.residual), seed=config.seed)
    data = build_instance_set(model, examples)
    rng = np.random.default_rng([config.seed, 2])
    opt = Adam(model.params, lr=config.lr, weight_decay=config.weight_decay)
    rows = []
    n = len(data)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        tot = np.zeros(3)
        for start in range(0, n, config.batch_size):
            b = data.subset(order[start:start + config.batch_size])
            loss, grads = model.loss_and_grads(b.Lp, b.Mp, b.s_y, b.p_y, b.r)
            opt.step(grads)
            tot += np.array([loss.L_s, loss.L_p, loss.L_r]) * len(b)
        tot /= n
        rows.append({"epoch": epoch, "L_s": tot[0], "L_p": tot[1], "L_r": tot[2], "total": tot.sum()})
        log.info("epoch %d loss %.4f", epoch, tot.sum())
    if log_path is not None:
        write_apm_log(rows, log_path)
    return model, rows


def write_apm_log(rows: list[dict], path) -> None:
    fields = ["epoch", "L_s", "L_p", "L_r", "total"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] if k == "epoch" else f"{r[k]:.6f}" for k in fields})


def predict_orientations(model: ApmModel, data: InstanceSet, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(data), batch_size):
        _, _, logits, _ = model.forward(data.Lp[start:start + batch_size], data.Mp[start:start + batch_size])
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out)


def orientation_accuracy(pred, truth) -> float:
    """Share of exact class matches; with four axis-aligned classes this is accuracy below 5 degrees."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise DataError("need matching non-empty prediction and truth arrays")
    return float(np.mean(pred == truth))
