"""Run configuration: JSON file sections with dotted-key overrides."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import fields
from pathlib import Path

from .apm.training import ApmTrainConfig
from .diffusion.training import DiffusionTrainConfig
from .errors import ConfigError
from .layout import CategoryPalette
from .synth import GrammarConfig

OUTPUT_ROOT_ENV = "SCENEMAP_OUTPUT_ROOT"

DEFAULTS = {
    "preset": "desk",
    "palette": "desk",
    "data": {"n_scenes": 2000, "seed": 0, "canvas": [32, 32], "scale": 0.15, "l_shape_prob": 0.3},
    "denoiser": {"T": 100, "schedule": "cosine", "lr": 2e-3, "steps": 4500, "batch_size": 16, "mode": "mixed",
                 "seed": 0, "d": 16, "radius": 2, "hidden": 128, "pool": 4, "coarse_radius": 2,
                 "global_context": True, "lr_decay": "cosine", "aux_weight": 0.01, "self_cond": True},
    "apm": {"grid": 8, "d": 32, "hidden": 64, "readout": "mask", "residual": True, "lr": 3e-3,
            "weight_decay": 1e-3, "epochs": 30, "batch_size": 64, "seed": 0},
    "generate": {"n": 200, "condition": "arch", "seed": 0, "batch_size": 64, "split": "test"},
    "assembly": {"rescale": False, "wall_height": 3.0, "door_height": 2.0, "window_span": [0.5, 2.0]},
    "metrics": {"nav_cell": 0.1, "obstacle_cutoff": 2.0},
}

PRESETS = {
    "desk": {},
    # finer grid at the same room sizes
    "desk64": {"data": {"canvas": [64, 64], "scale": 0.125}, "denoiser": {"radius": 3}},
    # full category palette and the larger attribute encoder
    "paper": {"palette": "full", "data": {"canvas": [64, 64], "scale": 0.125},
              "apm": {"grid": 32, "d": 128, "hidden": 128}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``section.key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(text)


def load_config(path=None, overrides=(), preset: str | None = None) -> dict:
    """Defaults, then a preset, then the config file, then overrides."""
    user = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    name = preset or user.get("preset", DEFAULTS["preset"])
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = _merge(_merge(DEFAULTS, PRESETS[name]), user)
    cfg["preset"] = name
    for item in overrides:
        apply_override(cfg, item)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    for section, cls in (("denoiser", DiffusionTrainConfig), ("apm", ApmTrainConfig)):
        names = {f.name for f in fields(cls)}
        bad = set(cfg[section]) - names
        if bad:
            raise ConfigError(f"unknown {section} keys {sorted(bad)}")
    if cfg["palette"] not in ("desk", "full"):
        raise ConfigError(f"unknown palette preset {cfg['palette']!r}")
    if cfg["generate"]["condition"] not in ("none", "floor", "arch"):
        raise ConfigError(f"unknown condition kind {cfg['generate']['condition']!r}")
    if cfg["data"]["n_scenes"] <= 0:
        raise ConfigError("data.n_scenes must be positive")


def palette_of(cfg: dict) -> CategoryPalette:
    return CategoryPalette.desk() if cfg["palette"] == "desk" else CategoryPalette.full()


def grammar_of(cfg: dict) -> GrammarConfig:
    d = cfg["data"]
    return GrammarConfig(scale=float(d["scale"]), canvas=tuple(d["canvas"]), l_shape_prob=float(d["l_shape_prob"]))


def denoiser_config_of(cfg: dict) -> DiffusionTrainConfig:
    return DiffusionTrainConfig(**cfg["denoiser"])


def apm_config_of(cfg: dict) -> ApmTrainConfig:
    return ApmTrainConfig(**cfg["apm"])


def output_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV, "scenemap_runs"))
