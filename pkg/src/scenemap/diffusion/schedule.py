from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, StepError

COSINE_OFFSET = 0.008
BETA_MIN, BETA_MAX = 1e-8, 0.999
TERMINAL_ALPHA_BAR = 0.01


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step retention tables.

    ``beta`` and ``alpha`` are indexed 1..T (entry 0 is a dummy zero/one),
    ``alpha_bar`` is indexed 0..T with ``alpha_bar[0] == 1``.
    """

    kind: str
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alpha_bar) - 1

    def check_step(self, t, low: int = 1) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < low) or np.any(t > self.T):
            raise StepError(f"timestep outside [{low}, {self.T}]: {t}")
        return t

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T}


def _cosine_alpha_bar(t: np.ndarray, T: int, s: float = COSINE_OFFSET) -> np.ndarray:
    return np.cos((t / T + s) / (1 + s) * np.pi / 2) ** 2


def build_schedule(T: int, kind: str = "cosine", beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise ConfigError(f"need at least 2 diffusion steps, got {T}")
    T = int(T)
    if kind == "cosine":
        f = _cosine_alpha_bar(np.arange(T + 1, dtype=np.float64), T)
        betas = np.clip(1.0 - f[1:] / f[:-1], BETA_MIN, BETA_MAX)
    elif kind == "linear":
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        if betas.min() <= 0 or betas.max() >= 1:
            raise ConfigError("linear betas must lie in (0, 1)")
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")

    beta = np.concatenate([[0.0], betas])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    if alpha_bar[-1] >= TERMINAL_ALPHA_BAR:
        raise ConfigError(
            f"{kind} schedule with T={T} ends at alpha_bar={alpha_bar[-1]:.4f}; "
            f"the sampler starts from uniform noise, so it must end below {TERMINAL_ALPHA_BAR}"
        )
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return NoiseSchedule(kind, beta, alpha, alpha_bar)
