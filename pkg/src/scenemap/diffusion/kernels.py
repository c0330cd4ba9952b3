"""Exact categorical kernels of the multinomial forward process.

All functions take arrays whose last axis is the category axis K and
broadcast over any leading (batch, row, col) axes. Timesteps may be a
scalar or an array matching the leading batch axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import DistributionError
from .schedule import NoiseSchedule

LOG_FLOOR = 1e-12


def _per_item(values: np.ndarray, t, ndim: int) -> np.ndarray:
    """Gather schedule values at ``t`` shaped to broadcast against a (..., K) array."""
    v = np.asarray(values[np.asarray(t)], dtype=np.float64)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


def forward_marginal(x0: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """q(x_t | x_0) = Cat(abar_t * x0 + (1 - abar_t) / K)."""
    t = sched.check_step(t)
    K = x0.shape[-1]
    ab = _per_item(sched.alpha_bar, t, x0.ndim)
    return ab * x0 + (1.0 - ab) / K


def one_step(x_prev: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """q(x_t | x_{t-1}) = Cat(alpha_t * x_{t-1} + (1 - alpha_t) / K)."""
    t = sched.check_step(t)
    K = x_prev.shape[-1]
    a = _per_item(sched.alpha, t, x_prev.ndim)
    return a * x_prev + (1.0 - a) / K


def posterior(x_t: np.ndarray, x0_dist: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """q(x_{t-1} | x_t, x0) with a (possibly soft) x0 vector.

    At t = 1 the reverse step lands on x0 itself, so ``x0_dist`` is returned.
    With an array ``t`` the t = 1 rows are handled the same way.
    """
    t = sched.check_step(t)
    K = x_t.shape[-1]
    a = _per_item(sched.alpha, t, x_t.ndim)
    ab_prev = _per_item(sched.alpha_bar, t - 1, x_t.ndim)
    theta = (a * x_t + (1.0 - a) / K) * (ab_prev * x0_dist + (1.0 - ab_prev) / K)
    theta = theta / theta.sum(axis=-1, keepdims=True)
    is_first = _per_item(np.arange(sched.T + 1) == 1, t, x_t.ndim).astype(bool)
    if is_first.any():
        theta = np.where(is_first, x0_dist, theta)
    return theta


def sample_indices(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one category per leading position by inverse-CDF sampling."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    idx = (u * cdf[..., -1:] > cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_from(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent categorical draw per pixel, returned one-hot."""
    K = probs.shape[-1]
    return np.eye(K, dtype=probs.dtype)[sample_indices(probs, rng)]


def check_distribution(p: np.ndarray, tol: float = 1e-6) -> None:
    p = np.asarray(p)
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise DistributionError("input is not a normalized probability vector")


def kl_categorical(p: np.ndarray, q: np.ndarray, validate: bool = True) -> np.ndarray:
    """KL(p || q) along the last axis; 0 log 0 = 0 and q floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if validate:
        check_distribution(p)
        check_distribution(q)
    logp = np.log(np.maximum(p, LOG_FLOOR))
    logq = np.log(np.maximum(q, LOG_FLOOR))
    terms = np.where(p > 0, p * (logp - logq), 0.0)
    return terms.sum(axis=-1)
