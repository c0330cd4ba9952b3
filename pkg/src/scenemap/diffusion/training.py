from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..layout import ArchMask, ConditionKind, SemanticMap
from ..optim import Adam
from .denoiser import MODES, DenoiserConfig, ReferenceDenoiser, softmax
from .loss import Batch, loss_mdm, noisy_sample
from .schedule import NoiseSchedule, build_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiffusionTrainConfig:
    T: int = 100
    schedule: str = "cosine"
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 16
    mode: str = "mixed"
    seed: int = 0
    d: int = 16
    radius: int = 2
    hidden: int = 128
    pool: int = 4
    coarse_radius: int = 2
    global_context: bool = True
    lr_decay: str = "cosine"  # or "none"
    aux_weight: float = 0.0
    self_cond: bool = False
    dtype: str = "float32"
    log_every: int = 50
    t_buckets: int = 10

    def to_dict(self) -> dict:
        return asdict(self)


def mask_for_kind(arch: np.ndarray, kind: int) -> np.ndarray:
    if kind == ConditionKind.NONE:
        return np.zeros_like(arch)
    if kind == ConditionKind.FLOOR:
        return (arch != 0).astype(arch.dtype)
    return arch


def _stack_dataset(dataset: Sequence[tuple[SemanticMap, int]]):
    maps = np.stack([m.cells for m, _ in dataset])
    arch = np.stack([ArchMask.from_map(m).cells for m, _ in dataset])
    rooms = np.array([int(r) for _, r in dataset])
    return maps, arch, rooms


def train_denoiser(
    dataset: Sequence[tuple[SemanticMap, int]],
    config: DiffusionTrainConfig,
    K: int,
    log_path=None,
    on_checkpoint: Callable[[int, ReferenceDenoiser], None] | None = None,
    checkpoint_every: int = 0,
) -> tuple[ReferenceDenoiser, NoiseSchedule, list[dict]]:
    """Fit a :class:`ReferenceDenoiser` with Adam on the multinomial loss.

    In ``mixed`` mode every sample draws its condition kind uniformly from
    none / floor / arch; otherwise the kind is fixed to ``config.mode``.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    if config.mode not in MODES:
        raise ConfigError(f"unknown training mode {config.mode!r}")
    if config.lr_decay not in ("none", "cosine"):
        raise ConfigError(f"unknown lr decay {config.lr_decay!r}")
    sched = build_schedule(config.T, config.schedule)
    model = ReferenceDenoiser(
        DenoiserConfig(K=K, d=config.d, radius=config.radius, hidden=config.hidden, T=config.T,
                       mode=config.mode, dtype=config.dtype, pool=config.pool, coarse_radius=config.coarse_radius,
                       global_context=config.global_context, self_cond=config.self_cond),
        seed=config.seed,
    )
    maps, arch, rooms = _stack_dataset(dataset)
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(model.params, lr=config.lr)
    fixed_kind = None if config.mode == "mixed" else int(ConditionKind.parse(config.mode))

    rows: list[dict] = []
    bucket_sum = np.zeros(config.t_buckets)
    bucket_n = np.zeros(config.t_buckets)
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, len(maps), size=config.batch_size)
        t = rng.integers(1, config.T + 1, size=config.batch_size)
        if fixed_kind is None:
            kinds = rng.integers(0, 3, size=config.batch_size)
        else:
            kinds = np.full(config.batch_size, fixed_kind)
        masks = np.stack([mask_for_kind(arch[i], k) for i, k in zip(idx, kinds)])
        batch = Batch(x0=maps[idx], mask=masks, room=rooms[idx], kind=kinds)
        x_t = noisy_sample(batch.x0, t, K, sched, rng)
        x0_prev = None
        if config.self_cond and rng.random() < 0.5:
            # half the batches learn to refine a first-pass estimate
            logits, _ = model.forward(x_t, t, batch.mask, batch.room, batch.kind)
            x0_prev = softmax(logits.astype(np.float64))
        loss, grads, rowloss = loss_mdm(model, batch, t, None, sched, x_t=x_t, per_sample=True,
                                       aux_weight=config.aux_weight, x0_prev=x0_prev)
        if config.lr_decay == "cosine":
            opt.lr = config.lr * 0.5 * (1.0 + np.cos(np.pi * (step - 1) / config.steps))
        opt.step(grads)

        b = np.minimum((t - 1) * config.t_buckets // config.T, config.t_buckets - 1)
        np.add.at(bucket_sum, b, rowloss)
        np.add.at(bucket_n, b, 1)
        if step % config.log_every == 0 or step == config.steps:
            for k in range(config.t_buckets):
                if bucket_n[k]:
                    rows.append({"step": step, "t_bucket": k, "loss": bucket_sum[k] / bucket_n[k]})
            log.info("step %d loss %.4f", step, loss)
            bucket_sum[:] = 0
            bucket_n[:] = 0
        if on_checkpoint and checkpoint_every and step % checkpoint_every == 0:
            on_checkpoint(step, model)

    if log_path is not None:
        write_loss_log(rows, log_path)
    return model, sched, rows


def write_loss_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "t_bucket", "loss"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"step": r["step"], "t_bucket": r["t_bucket"], "loss": f"{r['loss']:.6f}"})
