"""Versioned JSON checkpoints with base64 array payloads.

JSON keeps the files byte-stable across runs (zip-based ``.npz`` embeds
timestamps), which the determinism checks rely on.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError


def encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    return {
        "dtype": arr.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def write_checkpoint(path, fmt: str, version: int, meta: dict, params: dict) -> None:
    payload = {
        "format": fmt,
        "version": version,
        "meta": meta,
        "params": {k: encode_array(params[k]) for k in sorted(params)},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def read_checkpoint(path, fmt: str, version: int) -> tuple[dict, dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != fmt:
        raise CheckpointError(f"{path} is not a {fmt} checkpoint")
    if payload.get("version") != version:
        raise CheckpointError(f"{path} has version {payload.get('version')}, expected {version}")
    params = {k: decode_array(v) for k, v in payload["params"].items()}
    return payload["meta"], params
