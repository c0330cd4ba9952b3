"""Neighborhood-perceptron denoiser predicting x0 from a noisy one-hot map.

Each pixel sees a (2*radius+1)^2 window of embeddings. A pixel's
embedding is the sum of its noisy-category embedding and its room-mask
embedding. A second, coarse window averages the same embeddings over
pool x pool blocks and looks (2*coarse_radius+1)^2 blocks around the
pixel's block, so objects can form from wider context. A global term
projects the map-wide mean embedding, which tells every pixel how much of
each category is already present. All three feed the same hidden layer.
With self-conditioning on, the previous x0 estimate (K probabilities per
pixel) is projected and added to every pixel embedding. The global conditioning vector is the sinusoidal timestep
embedding plus the room-type and condition-kind embeddings; it is
projected and added to the hidden pre-activation of a two-layer
perceptron that emits K logits per pixel.

Gradients are written out by hand so they can be checked against finite
differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..checkpoint import read_checkpoint, write_checkpoint
from ..errors import DimensionError, ModeMismatchError
from ..layout import ROOM_TYPES, ConditionKind, ConditionSpec

CHECKPOINT_FORMAT = "scenemap-denoiser"
CHECKPOINT_VERSION = 1
N_MASK_CLASSES = 4
MODES = ("mixed", "none", "floor", "arch")


@dataclass(frozen=True)
class DenoiserConfig:
    K: int
    d: int = 16
    radius: int = 2
    hidden: int = 128
    T: int = 100
    n_room_types: int = len(ROOM_TYPES)
    mode: str = "mixed"
    dtype: str = "float32"
    pool: int = 4  # 0 disables the coarse window
    coarse_radius: int = 2
    global_context: bool = True
    self_cond: bool = False

    @property
    def window(self) -> int:
        return 2 * self.radius + 1

    @property
    def coarse_window(self) -> int:
        return 2 * self.coarse_radius + 1

    def to_dict(self) -> dict:
        return asdict(self)


def timestep_embedding(t, d: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = d // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if d % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ReferenceDenoiser:
    def __init__(self, config: DenoiserConfig, params: dict | None = None, seed: int = 0):
        if config.mode not in MODES:
            raise ModeMismatchError(f"unknown denoiser mode {config.mode!r}")
        self.config = config
        self.params = params if params is not None else self._init_params(seed)

    def _init_params(self, seed: int) -> dict:
        c = self.config
        rng = np.random.default_rng(seed)
        dt = np.dtype(c.dtype)
        fan_in = c.window ** 2 * c.d

        def normal(shape, std):
            return (rng.standard_normal(shape) * std).astype(dt)

        return {
            "emb_cat": normal((c.K, c.d), 1.0),
            "emb_mask": normal((N_MASK_CLASSES, c.d), 1.0),
            "emb_room": normal((c.n_room_types, c.d), 0.5),
            "emb_kind": normal((len(ConditionKind), c.d), 0.5),
            "W1": normal((fan_in, c.hidden), 1.0 / np.sqrt(fan_in)),
            "b1": np.zeros(c.hidden, dtype=dt),
            "Wc": normal((c.d, c.hidden), 1.0 / np.sqrt(c.d)),
            "W2": normal((c.hidden, c.K), 1.0 / np.sqrt(c.hidden)),
            "b2": np.zeros(c.K, dtype=dt),
        } | ({"W1c": normal((c.coarse_window ** 2 * c.d, c.hidden), 1.0 / np.sqrt(c.coarse_window ** 2 * c.d))}
             if c.pool else {}) | ({"Wg": normal((c.d, c.hidden), 1.0 / np.sqrt(c.d))} if c.global_context else {}) \
            | ({"emb_sc": normal((c.K, c.d), 1.0 / np.sqrt(c.K))} if c.self_cond else {})

    # -- mode contract ----------------------------------------------------

    def check_kind(self, kind) -> None:
        kind = ConditionKind.parse(kind)
        if self.config.mode != "mixed" and kind.name.lower() != self.config.mode:
            raise ModeMismatchError(
                f"denoiser trained for '{self.config.mode}' conditioning cannot serve '{kind.name.lower()}'"
            )

    # -- forward / backward -------------------------------------------------

    def forward(self, x_idx, t, mask_idx, room, kind, x0_prev=None):
        """Logits (B, H, W, K) and a cache for :meth:`backward`.

        ``x0_prev`` is the previous x0 estimate for self-conditioning (zeros
        when omitted); it is ignored when self-conditioning is off.
        """
        p, c = self.params, self.config
        dt = np.dtype(c.dtype)
        x_idx = np.asarray(x_idx)
        B, H, W = x_idx.shape
        n, r = c.window, c.radius
        t = np.broadcast_to(np.asarray(t), (B,))
        room = np.broadcast_to(np.asarray(room), (B,))
        kind = np.broadcast_to(np.asarray(kind), (B,))

        e = p["emb_cat"][x_idx] + p["emb_mask"][mask_idx]
        sc = None
        if c.self_cond:
            sc = np.zeros((B, H, W, c.K), dtype=dt) if x0_prev is None else np.asarray(x0_prev, dtype=dt)
            e = e + sc @ p["emb_sc"]
        ep = np.pad(e, ((0, 0), (r, r), (r, r), (0, 0)))
        win = sliding_window_view(ep, (n, n), axis=(1, 2))  # B,H,W,d,n,n
        win = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, n * n * c.d)

        cond = (timestep_embedding(t, c.d).astype(dt) + p["emb_room"][room] + p["emb_kind"][kind]).astype(dt)
        cproj = cond @ p["Wc"]
        ge = e.reshape(B, H * W, c.d).mean(axis=1) if c.global_context else None
        if c.global_context:
            cproj = cproj + ge @ p["Wg"]
        pre = (win @ p["W1"]).reshape(B, H * W, c.hidden) + cproj[:, None, :] + p["b1"]
        cwin = None
        if c.pool:
            P, rc, nc = c.pool, c.coarse_radius, c.coarse_window
            if H % P or W % P:
                raise DimensionError(f"map {H}x{W} is not divisible into {P}x{P} blocks")
            Hc, Wc = H // P, W // P
            ce = e.reshape(B, Hc, P, Wc, P, c.d).mean(axis=(2, 4))
            cp = np.pad(ce, ((0, 0), (rc, rc), (rc, rc), (0, 0)))
            cwin = sliding_window_view(cp, (nc, nc), axis=(1, 2))
            cwin = np.ascontiguousarray(cwin.transpose(0, 1, 2, 4, 5, 3)).reshape(B * Hc * Wc, nc * nc * c.d)
            cpre = (cwin @ p["W1c"]).reshape(B, Hc, 1, Wc, 1, c.hidden)
            pre = pre.reshape(B, Hc, P, Wc, P, c.hidden) + cpre
            pre = pre.reshape(B, H * W, c.hidden)
        sig = _sigmoid(pre)
        hid = pre * sig
        logits = hid.reshape(B * H * W, c.hidden) @ p["W2"] + p["b2"]
        cache = (x_idx, mask_idx, sc, room, kind, win, cwin, ge, cond, pre, sig, hid, (B, H, W))
        return logits.reshape(B, H, W, c.K), cache

    def backward(self, dlogits: np.ndarray, cache) -> dict:
        p, c = self.params, self.config
        x_idx, mask_idx, sc, room, kind, win, cwin, ge, cond, pre, sig, hid, (B, H, W) = cache
        n, r = c.window, c.radius
        dt = np.dtype(c.dtype)
        g = np.asarray(dlogits, dtype=dt).reshape(B * H * W, c.K)
        hid2 = hid.reshape(B * H * W, c.hidden)

        grads = {"W2": hid2.T @ g, "b2": g.sum(axis=0)}
        dhid = (g @ p["W2"].T).reshape(B, H * W, c.hidden)
        dpre = dhid * (sig + pre * sig * (1.0 - sig))
        dpre2 = dpre.reshape(B * H * W, c.hidden)
        grads["W1"] = win.T @ dpre2
        grads["b1"] = dpre2.sum(axis=0)
        dcproj = dpre.sum(axis=1)
        grads["Wc"] = cond.T @ dcproj
        dcond = dcproj @ p["Wc"].T
        demb_room = np.zeros_like(p["emb_room"])
        np.add.at(demb_room, room, dcond)
        demb_kind = np.zeros_like(p["emb_kind"])
        np.add.at(demb_kind, kind, dcond)
        grads["emb_room"], grads["emb_kind"] = demb_room, demb_kind

        dwin = (dpre2 @ p["W1"].T).reshape(B, H, W, n, n, c.d)
        dep = np.zeros((B, H + 2 * r, W + 2 * r, c.d), dtype=dt)
        for i in range(n):
            for j in range(n):
                dep[:, i:i + H, j:j + W] += dwin[:, :, :, i, j]
        de = dep[:, r:r + H, r:r + W]
        if c.pool:
            P, rc, nc = c.pool, c.coarse_radius, c.coarse_window
            Hc, Wc = H // P, W // P
            dcpre = dpre.reshape(B, Hc, P, Wc, P, c.hidden).sum(axis=(2, 4)).reshape(B * Hc * Wc, c.hidden)
            grads["W1c"] = cwin.T @ dcpre
            dcwin = (dcpre @ p["W1c"].T).reshape(B, Hc, Wc, nc, nc, c.d)
            dcp = np.zeros((B, Hc + 2 * rc, Wc + 2 * rc, c.d), dtype=dt)
            for i in range(nc):
                for j in range(nc):
                    dcp[:, i:i + Hc, j:j + Wc] += dcwin[:, :, :, i, j]
            dce = dcp[:, rc:rc + Hc, rc:rc + Wc] / (P * P)
            de = de + np.repeat(np.repeat(dce, P, axis=1), P, axis=2)
        if c.global_context:
            grads["Wg"] = ge.T @ dcproj
            de = de + (dcproj @ p["Wg"].T)[:, None, None, :] / (H * W)
        de = de.reshape(-1, c.d)
        grads["emb_cat"] = np.eye(c.K, dtype=dt)[x_idx.reshape(-1)].T @ de
        grads["emb_mask"] = np.eye(N_MASK_CLASSES, dtype=dt)[np.asarray(mask_idx).reshape(-1)].T @ de
        if c.self_cond:
            grads["emb_sc"] = sc.reshape(-1, c.K).T @ de
        return grads

    def predict_indices(self, x_idx, t, mask_idx, room, kind, x0_prev=None) -> np.ndarray:
        """x0 distribution (B, H, W, K) for a batch of noisy index maps."""
        for k in np.unique(np.asarray(kind)):
            self.check_kind(int(k))
        logits, _ = self.forward(x_idx, t, mask_idx, room, kind, x0_prev)
        return softmax(logits.astype(np.float64))

    def predict(self, x_t: np.ndarray, t: int, cond: ConditionSpec) -> np.ndarray:
        """Single-map interface: one-hot (H, W, K) in, x0 distribution out."""
        x_idx = np.asarray(x_t).argmax(axis=-1)[None]
        out = self.predict_indices(x_idx, [t], cond.mask.cells[None], [cond.room_type], [int(cond.kind)])
        return out[0]

    # -- persistence ------------------------------------------------------

    def save(self, path, schedule_meta: dict | None = None, palette_hash: str = "", extra: dict | None = None) -> None:
        meta = {
            "config": self.config.to_dict(),
            "schedule": schedule_meta or {},
            "palette_hash": palette_hash,
            "extra": extra or {},
        }
        write_checkpoint(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, meta, self.params)

    @classmethod
    def load(cls, path) -> tuple["ReferenceDenoiser", dict]:
        meta, params = read_checkpoint(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)
        config = DenoiserConfig(**meta["config"])
        return cls(config, params=params), meta
