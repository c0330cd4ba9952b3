"""Attribute prediction: vertical size, vertical offset and orientation class.

Layout and instance-mask encoders average-pool their inputs onto a g x g
patch grid and project each patch to d channels (plus a learned position
embedding per patch). Layout tokens query the mask tokens through
single-head scaled dot-product attention. The instance feature is pooled
to one d-vector and fed to a shared two-layer trunk with three heads.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..checkpoint import read_checkpoint, write_checkpoint
from ..errors import ConfigError, DimensionError, InstanceError
from ..layout import SemanticMap, one_hot

CHECKPOINT_FORMAT = "scenemap-apm"
CHECKPOINT_VERSION = 1
MIN_HEIGHT = 0.01
N_ORIENT = 4


@dataclass(frozen=True)
class ApmConfig:
    K: int
    grid: int = 8
    d: int = 32
    hidden: int = 64
    readout: str = "mask"  # "mask": mask-weighted pooling, "mean": plain global average
    residual: bool = True

    def __post_init__(self):
        if self.readout not in ("mask", "mean"):
            raise ConfigError(f"unknown readout {self.readout!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AttributePrediction:
    s_y: float
    p_y: float
    orientation_logits: tuple[float, float, float, float]

    @property
    def orientation(self) -> int:
        return int(np.argmax(self.orientation_logits))


@dataclass(frozen=True)
class ApmLoss:
    L_s: float
    L_p: float
    L_r: float

    @property
    def total(self) -> float:
        return self.L_s + self.L_p + self.L_r


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def patch_pool(grid: np.ndarray, g: int) -> np.ndarray:
    """Average (H, W, C) over non-overlapping patches into (g*g, C) tokens, row-major."""
    H, W, C = grid.shape
    if H % g or W % g:
        raise DimensionError(f"map {H}x{W} is not divisible into a {g}x{g} patch grid")
    ph, pw = H // g, W // g
    return grid.reshape(g, ph, g, pw, C).mean(axis=(1, 3)).reshape(g * g, C)


def cross_attention(query: np.ndarray, kv: np.ndarray, Wq: np.ndarray, Wk: np.ndarray, Wv: np.ndarray,
                    return_weights: bool = False):
    """Single-head attention of query tokens over key/value tokens.

    ``query`` and ``kv`` are (d, g, g) feature grids; the result has the same shape.
    """
    if query.shape != kv.shape or query.ndim != 3:
        raise DimensionError(f"query {query.shape} and key/value {kv.shape} grids must match")
    d = query.shape[0]
    if Wq.shape != (d, d) or Wk.shape != (d, d) or Wv.shape != (d, d):
        raise DimensionError("projections must be d x d")
    q = query.reshape(d, -1).T @ Wq
    k = kv.reshape(d, -1).T @ Wk
    v = kv.reshape(d, -1).T @ Wv
    A = _softmax(q @ k.T / np.sqrt(d))
    out = (A @ v).T.reshape(query.shape)
    return (out, A) if return_weights else out


class ApmModel:
    def __init__(self, config: ApmConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else self._init_params(seed)

    def _init_params(self, seed: int) -> dict:
        c = self.config
        rng = np.random.default_rng(seed)
        G = c.grid * c.grid

        def normal(shape, std):
            return rng.standard_normal(shape) * std

        return {
            "We_l": normal((c.K, c.d), 1.0 / np.sqrt(c.K) * 2),
            "be_l": np.zeros(c.d),
            "pos_l": normal((G, c.d), 0.5),
            "We_m": normal((1, c.d), 1.0),
            "be_m": np.zeros(c.d),
            "pos_m": normal((G, c.d), 0.5),
            "Wq": normal((c.d, c.d), 1.0 / np.sqrt(c.d)),
            "Wk": normal((c.d, c.d), 1.0 / np.sqrt(c.d)),
            "Wv": normal((c.d, c.d), 1.0 / np.sqrt(c.d)),
            "T1": normal((c.d, c.hidden), 1.0 / np.sqrt(c.d)),
            "c1": np.zeros(c.hidden),
            "T2": normal((c.hidden, c.hidden), 1.0 / np.sqrt(c.hidden)),
            "c2": np.zeros(c.hidden),
            "w_s": normal((c.hidden, 1), 0.1),
            "b_s": np.zeros(1),
            "w_p": normal((c.hidden, 1), 0.1),
            "b_p": np.zeros(1),
            "W_r": normal((c.hidden, N_ORIENT), 0.1),
            "b_r": np.zeros(N_ORIENT),
        }

    # -- encoding --------------------------------------------------------

    def encode_layout(self, smap: SemanticMap) -> np.ndarray:
        return patch_pool(one_hot(smap.cells, self.config.K), self.config.grid)

    def encode_mask(self, mask: np.ndarray) -> np.ndarray:
        mask = np.asarray(mask, dtype=np.float64)
        if not mask.any():
            raise InstanceError("instance mask is empty")
        return patch_pool(mask[..., None], self.config.grid)

    # -- forward / backward ------------------------------------------------

    def forward(self, Lp: np.ndarray, Mp: np.ndarray):
        """Lp: (N, G, K) pooled layouts, Mp: (N, G, 1) pooled masks."""
        p, c = self.params, self.config
        FL = Lp @ p["We_l"] + p["be_l"] + p["pos_l"]
        FM = Mp @ p["We_m"] + p["be_m"] + p["pos_m"]
        Q, Kk, V = FL @ p["Wq"], FM @ p["Wk"], FM @ p["Wv"]
        scale = 1.0 / np.sqrt(c.d)
        A = _softmax(Q @ Kk.transpose(0, 2, 1) * scale)
        O = A @ V
        F = O + FL if c.residual else O
        if c.readout == "mask":
            w = Mp[..., 0] / Mp[..., 0].sum(axis=1, keepdims=True)
        else:
            w = np.full(Mp.shape[:2], 1.0 / Mp.shape[1])
        z = np.einsum("ng,ngd->nd", w, F)
        pre1 = z @ p["T1"] + p["c1"]
        sg1 = _sigmoid(pre1)
        h1 = pre1 * sg1
        pre2 = h1 @ p["T2"] + p["c2"]
        sg2 = _sigmoid(pre2)
        h2 = pre2 * sg2
        s = (h2 @ p["w_s"] + p["b_s"])[:, 0]
        py = (h2 @ p["w_p"] + p["b_p"])[:, 0]
        logits = h2 @ p["W_r"] + p["b_r"]
        cache = (Lp, Mp, FL, FM, Q, Kk, V, A, w, z, pre1, sg1, h1, pre2, sg2, h2)
        return s, py, logits, cache

    def backward(self, ds, dpy, dlogits, cache) -> dict:
        p, c = self.params, self.config
        Lp, Mp, FL, FM, Q, Kk, V, A, w, z, pre1, sg1, h1, pre2, sg2, h2 = cache
        g = {
            "w_s": h2.T @ ds[:, None], "b_s": np.array([ds.sum()]),
            "w_p": h2.T @ dpy[:, None], "b_p": np.array([dpy.sum()]),
            "W_r": h2.T @ dlogits, "b_r": dlogits.sum(axis=0),
        }
        dh2 = ds[:, None] * p["w_s"].T + dpy[:, None] * p["w_p"].T + dlogits @ p["W_r"].T
        da2 = dh2 * (sg2 + pre2 * sg2 * (1 - sg2))
        g["T2"], g["c2"] = h1.T @ da2, da2.sum(axis=0)
        dh1 = da2 @ p["T2"].T
        da1 = dh1 * (sg1 + pre1 * sg1 * (1 - sg1))
        g["T1"], g["c1"] = z.T @ da1, da1.sum(axis=0)
        dz = da1 @ p["T1"].T
        dF = w[:, :, None] * dz[:, None, :]

        scale = 1.0 / np.sqrt(c.d)
        dO = dF
        dA = dO @ V.transpose(0, 2, 1)
        dV = A.transpose(0, 2, 1) @ dO
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
        dQ = dS @ Kk * scale
        dK = dS.transpose(0, 2, 1) @ Q * scale
        g["Wq"] = np.einsum("ngd,nge->de", FL, dQ)
        g["Wk"] = np.einsum("ngd,nge->de", FM, dK)
        g["Wv"] = np.einsum("ngd,nge->de", FM, dV)
        dFL = dQ @ p["Wq"].T
        if c.residual:
            dFL = dFL + dF
        dFM = dK @ p["Wk"].T + dV @ p["Wv"].T
        g["We_l"] = np.einsum("ngk,ngd->kd", Lp, dFL)
        g["be_l"] = dFL.sum(axis=(0, 1))
        g["pos_l"] = dFL.sum(axis=0)
        g["We_m"] = np.einsum("ngk,ngd->kd", Mp, dFM)
        g["be_m"] = dFM.sum(axis=(0, 1))
        g["pos_m"] = dFM.sum(axis=0)
        return g

    def loss_and_grads(self, Lp, Mp, s_gt, p_gt, r_gt, need_grad: bool = True):
        s, py, logits, cache = self.forward(Lp, Mp)
        n = len(s)
        probs = _softmax(logits)
        r_gt = np.asarray(r_gt, dtype=np.int64)
        L_s = float(np.mean((s - s_gt) ** 2))
        L_p = float(np.mean((py - p_gt) ** 2))
        L_r = float(np.mean(-np.log(np.maximum(probs[np.arange(n), r_gt], 1e-300))))
        loss = ApmLoss(L_s, L_p, L_r)
        if not need_grad:
            return loss, None
        dlogits = probs.copy()
        dlogits[np.arange(n), r_gt] -= 1.0
        grads = self.backward(2 * (s - s_gt) / n, 2 * (py - p_gt) / n, dlogits / n, cache)
        return loss, grads

    # -- public ops --------------------------------------------------------

    def predict_batch(self, Lp, Mp) -> list[AttributePrediction]:
        s, py, logits, _ = self.forward(Lp, Mp)
        return [
            AttributePrediction(max(float(a), MIN_HEIGHT), float(b), tuple(float(v) for v in lg))
            for a, b, lg in zip(s, py, logits)
        ]

    def save(self, path, palette_hash: str = "", extra: dict | None = None) -> None:
        meta = {"config": self.config.to_dict(), "palette_hash": palette_hash, "extra": extra or {}}
        write_checkpoint(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, meta, self.params)

    @classmethod
    def load(cls, path) -> tuple["ApmModel", dict]:
        meta, params = read_checkpoint(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)
        return cls(ApmConfig(**meta["config"]), params=params), meta


def predict_attributes(model: ApmModel, smap: SemanticMap, mask) -> AttributePrediction:
    m = mask.mask if hasattr(mask, "mask") else mask
    m = np.asarray(m, dtype=bool)
    if not m.any():
        raise InstanceError("instance mask is empty")
    if hasattr(mask, "category") and not np.all(smap.cells[m] == mask.category):
        raise InstanceError("instance mask covers cells of another category")
    Lp = model.encode_layout(smap)[None]
    Mp = model.encode_mask(m)[None]
    return model.predict_batch(Lp, Mp)[0]


def loss_apm(model: ApmModel, smap: SemanticMap, mask, target) -> tuple[ApmLoss, dict]:
    """Loss and gradients for one (map, instance mask, (s_y, p_y, r)) example."""
    m = mask.mask if hasattr(mask, "mask") else mask
    s_gt, p_gt, r_gt = target
    if int(r_gt) not in range(N_ORIENT):
        raise ConfigError(f"orientation target must be in 0..3, got {r_gt}")
    Lp = model.encode_layout(smap)[None]
    Mp = model.encode_mask(m)[None]
    return model.loss_and_grads(Lp, Mp, np.array([s_gt], float), np.array([p_gt], float), np.array([r_gt]))
