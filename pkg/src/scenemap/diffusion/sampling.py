from __future__ import annotations

from typing import Sequence

import numpy as np

from ..layout import ConditionSpec, SemanticMap
from .kernels import posterior
from .schedule import NoiseSchedule


def _draw(probs: np.ndarray, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """Inverse-CDF draw with one generator per chain (row of the batch)."""
    cdf = np.cumsum(probs, axis=-1)
    u = np.stack([g.random(probs.shape[1:-1]) for g in rngs])[..., None]
    idx = (u * cdf[..., -1:] > cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_layouts(
    denoiser,
    conds: Sequence[ConditionSpec],
    sched: NoiseSchedule,
    rngs: Sequence[np.random.Generator],
    scale: float,
    batch_size: int = 64,
) -> list[SemanticMap]:
    """Run one ancestral chain per condition, ``batch_size`` chains at a time.

    Each chain consumes only its own generator, so results do not depend on
    how chains are grouped into batches.
    """
    if len(rngs) != len(conds):
        raise ValueError("need one generator per chain")
    for c in conds:
        denoiser.check_kind(c.kind)
    K = denoiser.config.K
    out: list[SemanticMap] = []
    for start in range(0, len(conds), batch_size):
        cs, gs = conds[start:start + batch_size], rngs[start:start + batch_size]
        mask = np.stack([c.mask.cells for c in cs])
        room = np.array([c.room_type for c in cs])
        kind = np.array([int(c.kind) for c in cs])
        B, (H, W) = len(cs), mask.shape[1:]
        eye = np.eye(K)

        # self-conditioning feeds each step the previous x0 estimate
        sc = getattr(denoiser.config, "self_cond", False)
        x = _draw(np.full((B, H, W, K), 1.0 / K), gs)
        x0_hat = None
        for t in range(sched.T, 1, -1):
            tt = np.full(B, t)
            args = (x, tt, mask, room, kind) + ((x0_hat,) if sc else ())
            x0_hat = denoiser.predict_indices(*args)
            x = _draw(posterior(eye[x], x0_hat, tt, sched), gs)
        args = (x, np.ones(B, dtype=np.int64), mask, room, kind) + ((x0_hat,) if sc else ())
        x0_hat = denoiser.predict_indices(*args)
        out.extend(SemanticMap(m, scale) for m in x0_hat.argmax(axis=-1))
    return out


def sample_layout(denoiser, cond: ConditionSpec, sched: NoiseSchedule, rng: np.random.Generator, scale: float = 1.0) -> SemanticMap:
    return sample_layouts(denoiser, [cond], sched, [rng], scale)[0]
