from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..layout import ConditionSpec, SemanticMap
from .denoiser import softmax
from .kernels import LOG_FLOOR, forward_marginal, posterior, sample_indices
from .schedule import NoiseSchedule


@dataclass
class Batch:
    """Index-encoded training batch; every array has leading size B."""

    x0: np.ndarray  # B,H,W category indices
    mask: np.ndarray  # B,H,W room-mask values
    room: np.ndarray  # B
    kind: np.ndarray  # B

    @classmethod
    def from_conditions(cls, maps: Sequence, conds: Sequence[ConditionSpec]) -> "Batch":
        x0 = np.stack([m.cells if isinstance(m, SemanticMap) else np.asarray(m) for m in maps])
        return cls(
            x0=x0,
            mask=np.stack([c.mask.cells for c in conds]),
            room=np.array([c.room_type for c in conds]),
            kind=np.array([int(c.kind) for c in conds]),
        )


def noisy_sample(x0_idx: np.ndarray, t: np.ndarray, K: int, sched: NoiseSchedule, rng) -> np.ndarray:
    probs = forward_marginal(np.eye(K)[x0_idx], t, sched)
    return sample_indices(probs, rng)


def loss_mdm(denoiser, x0, t, cond, sched: NoiseSchedule, rng=None, *, x_t=None, need_grad: bool = True,
             per_sample: bool = False, aux_weight: float = 0.0, x0_prev=None):
    """Pixel-mean KL between the true and predicted reverse posteriors.

    ``x0``/``cond`` may be a single map and ConditionSpec or a :class:`Batch`.
    Rows with ``t == 1`` contribute the negative log-likelihood of x0 under the
    predicted x0 distribution instead. Returns ``(loss, grads)`` where
    ``grads`` maps parameter names to arrays (``None`` if not requested);
    ``per_sample=True`` appends the per-row pixel-mean losses.
    ``aux_weight`` adds that multiple of the x0 cross-entropy on t >= 2 rows,
    which keeps x0 predictions sharp at large t where the KL is nearly flat.
    ``x0_prev`` is passed to the denoiser as its self-conditioning input.
    """
    if isinstance(x0, Batch):
        batch = x0
    else:
        batch = Batch.from_conditions([x0], [cond])
    K = denoiser.config.K
    B = batch.x0.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,)).copy()
    sched.check_step(t)
    if x_t is None:
        x_t = noisy_sample(batch.x0, t, K, sched, rng)
    x_t = np.asarray(x_t).reshape(batch.x0.shape)

    if x0_prev is None:
        logits, cache = denoiser.forward(x_t, t, batch.mask, batch.room, batch.kind)
    else:
        logits, cache = denoiser.forward(x_t, t, batch.mask, batch.room, batch.kind, x0_prev)
    x0_hat = softmax(logits.astype(np.float64))
    eye = np.eye(K)
    x0_oh, xt_oh = eye[batch.x0], eye[x_t]
    npix = batch.x0[0].size
    weight = 1.0 / (B * npix)

    first = t == 1
    shape = (B, 1, 1, 1)
    a = sched.alpha[t].reshape(shape)
    ab_prev = sched.alpha_bar[t - 1].reshape(shape)
    left = a * xt_oh + (1.0 - a) / K
    u = left * (ab_prev * x0_hat + (1.0 - ab_prev) / K)
    S = u.sum(axis=-1, keepdims=True)
    p_pred = u / S
    safe_t = np.where(first, 2, t) if sched.T >= 2 else t
    q_true = posterior(xt_oh, x0_oh, safe_t, sched)

    logq = np.log(np.maximum(q_true, LOG_FLOOR))
    logp = np.log(np.maximum(p_pred, LOG_FLOOR))
    kl = np.where(q_true > 0, q_true * (logq - logp), 0.0).sum(axis=-1)  # B,H,W
    p_true_class = (x0_hat * x0_oh).sum(axis=-1)
    nll = -np.log(np.maximum(p_true_class, LOG_FLOOR))
    per_pix = np.where(first[:, None, None], nll, kl)
    if aux_weight:
        per_pix = per_pix + np.where(first[:, None, None], 0.0, aux_weight * nll)
    loss = float(per_pix.sum() * weight)
    extra = (per_pix.reshape(B, -1).mean(axis=1),) if per_sample else ()
    if not need_grad:
        return (loss, None) + extra

    # d kl / d x0_hat, floors assumed inactive
    active = p_pred > LOG_FLOOR
    du = np.where(active, -q_true / u, 0.0) + 1.0 / S
    g_kl = du * left * ab_prev
    g_kl = x0_hat * (g_kl - (g_kl * x0_hat).sum(axis=-1, keepdims=True))
    g_nll = x0_hat - x0_oh
    if aux_weight:
        g_kl = g_kl + aux_weight * g_nll
    dlogits = np.where(first[:, None, None, None], g_nll, g_kl) * weight
    grads = denoiser.backward(dlogits, cache)
    return (loss, grads) + extra
