"""Stage functions shared by the command line, demos and acceptance tests.

Every stage reads and writes plain files so that each one can be rerun on
its own; outputs carry the resolved config and seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .apm import (
    ApmModel,
    OrientationStats,
    VerticalPriors,
    build_instance_set,
    heuristic_orientation,
    heuristic_vertical,
    train_apm,
)
from .apm.model import AttributePrediction
from .assembly import (
    AssetCatalog,
    Scene3D,
    assemble_scene,
    export_scene,
    footprint_extent,
    import_scene,
    point_in_polygon,
)
from .diffusion import ReferenceDenoiser, build_schedule, sample_layouts, train_denoiser
from .errors import ConfigError, DataError
from .extraction import (
    ThresholdTable,
    compute_thresholds,
    extract_instances,
    extraction_report,
    instances_from_report,
)
from .layout import (
    DOOR,
    FLOOR,
    VOID,
    WINDOW,
    ArchMask,
    CategoryPalette,
    ConditionKind,
    ConditionSpec,
    SemanticMap,
    load_map_json,
    map_from_dict,
    map_to_dict,
    save_map_png,
)
from .config import apm_config_of, denoiser_config_of, grammar_of, palette_of
from .metrics import CategoryHistogram, MetricReport, evaluate_corpus
from .synth import build_dataset, dataset_palette, load_manifest, load_split

log = logging.getLogger(__name__)

SAMPLE_FORMAT = "scenemap-sample"


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True))


def stamp(out_dir, command: str, cfg: dict, seed: int | None = None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump(out_dir / f"run_{command}.json", {"command": command, "seed": seed, "config": cfg})


# -- synth ----------------------------------------------------------------


def run_synth(cfg: dict, out) -> dict:
    out = Path(out)
    d = cfg["data"]
    manifest = build_dataset(out, int(d["n_scenes"]), int(d["seed"]), grammar_of(cfg), palette_of(cfg))
    write_dataset_stats(out)
    stamp(out, "synth", cfg, int(d["seed"]))
    return manifest


def write_dataset_stats(root) -> None:
    """Thresholds, priors and histograms from the training split, under ``stats/``."""
    root = Path(root)
    manifest = load_manifest(root)
    K = len(manifest["palette"])
    train = load_split(root, "train")
    if not train:
        raise DataError("training split is empty")
    stats = root / "stats"
    stats.mkdir(exist_ok=True)
    compute_thresholds(train).save(stats / "thresholds.json")
    VerticalPriors.from_scenes(train).save(stats / "vertical_priors.json")
    ost = OrientationStats.from_scenes(train)
    _dump(stats / "orientation_stats.json", {str(k): v.tolist() for k, v in sorted(ost.per_category.items())})
    hist = {}
    for rt in range(3):
        cats = [i.category for s in train if s.room_type == rt for i in s.layout.instances]
        hist[str(rt)] = CategoryHistogram.from_instances(cats, K).counts.tolist()
    _dump(stats / "category_histograms.json", hist)


def load_orientation_stats(root) -> OrientationStats:
    d = json.loads((Path(root) / "stats" / "orientation_stats.json").read_text())
    return OrientationStats({int(k): np.array(v, dtype=np.int64) for k, v in d.items()})


def load_gt_histograms(root) -> dict[int, CategoryHistogram]:
    d = json.loads((Path(root) / "stats" / "category_histograms.json").read_text())
    return {int(k): CategoryHistogram(v) for k, v in d.items()}


# -- training -------------------------------------------------------------


def run_train_denoiser(cfg: dict, data_root, ckpt_path, log_path=None) -> ReferenceDenoiser:
    manifest = load_manifest(data_root)
    palette = dataset_palette(manifest)
    train = load_split(data_root, "train")
    tc = denoiser_config_of(cfg)
    model, sched, _ = train_denoiser([(s.layout.map, s.room_type) for s in train], tc, palette.K, log_path=log_path)
    model.save(ckpt_path, {"kind": sched.kind, "T": sched.T}, palette.hash(),
               {"config": cfg, "seed": tc.seed, "scale": manifest["grammar"]["scale"]})
    return model


def run_train_apm(cfg: dict, data_root, ckpt_path, log_path=None) -> ApmModel:
    manifest = load_manifest(data_root)
    palette = dataset_palette(manifest)
    train = load_split(data_root, "train")
    tc = apm_config_of(cfg)
    model, _ = train_apm(train, tc, palette.K, log_path=log_path)
    model.save(ckpt_path, palette.hash(), {"config": cfg, "seed": tc.seed})
    return model


# -- generation -----------------------------------------------------------


def conditions_from_split(data_root, kind, n: int, split: str = "test") -> list[ConditionSpec]:
    """``n`` conditions cycling through the split's rooms (room type always taken from the scene)."""
    scenes = load_split(data_root, split)
    if not scenes:
        raise DataError(f"split {split!r} is empty")
    kind = ConditionKind.parse(kind)
    return [ConditionSpec.from_arch(scenes[i % len(scenes)].arch, kind, scenes[i % len(scenes)].room_type)
            for i in range(n)]


def load_mask_file(path, shape) -> ArchMask:
    """Arch mask from a map JSON, a scene record or a ``.npy`` grid."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"mask file {path} not found")
    if path.suffix == ".npy":
        cells = np.load(path)
    else:
        d = json.loads(path.read_text())
        if "arch_mask" in d:
            cells = np.asarray(d["arch_mask"]).reshape(d["map"]["H"], d["map"]["W"])
        else:
            cells = ArchMask.from_map(map_from_dict(d.get("map", d))).cells
    cells = np.asarray(cells, dtype=np.int64)
    if cells.shape != tuple(shape):
        raise DataError(f"mask shape {cells.shape} does not match the model canvas {tuple(shape)}")
    return ArchMask(cells)


def run_generate(denoiser: ReferenceDenoiser, conds: Sequence[ConditionSpec], scale: float, out_dir, seed: int,
                 palette: CategoryPalette, batch_size: int = 64, schedule_kind: str = "cosine") -> list[SemanticMap]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sched = build_schedule(denoiser.config.T, schedule_kind)
    rngs = [np.random.default_rng([seed, i]) for i in range(len(conds))]
    maps = sample_layouts(denoiser, list(conds), sched, rngs, scale, batch_size)
    for i, (m, c) in enumerate(zip(maps, conds)):
        rec = {
            "format": SAMPLE_FORMAT,
            "version": 1,
            "seed": seed,
            "chain": i,
            "map": map_to_dict(m, palette.K),
            "condition": {"kind": c.kind.name.lower(), "room_type": int(c.room_type), "mask": c.mask.cells.ravel().tolist()},
        }
        _dump(out_dir / f"sample_{i:04d}.json", rec)
        save_map_png(m, palette, out_dir / f"sample_{i:04d}.png")
    return maps


@dataclass
class Sample:
    name: str
    map: SemanticMap
    kind: ConditionKind
    room_type: int
    mask: np.ndarray


def load_samples(sample_dir) -> list[Sample]:
    out = []
    paths = sorted(Path(sample_dir).glob("sample_*.json"))
    if not paths:
        raise DataError(f"no samples in {sample_dir}")
    for p in paths:
        d = json.loads(p.read_text())
        if d.get("format") != SAMPLE_FORMAT:
            raise DataError(f"{p} is not a generated sample")
        m = map_from_dict(d["map"])
        c = d["condition"]
        out.append(Sample(p.stem, m, ConditionKind.parse(c["kind"]), int(c["room_type"]),
                          np.asarray(c["mask"], dtype=np.int64).reshape(m.shape)))
    return out


# -- extraction / assembly ------------------------------------------------


def run_extract(samples: Sequence[Sample], thresholds: ThresholdTable, out_dir) -> list[dict]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for s in samples:
        rep = extraction_report(extract_instances(s.map, thresholds), s.map)
        rep["room_type"] = s.room_type
        _dump(out_dir / f"{s.name.replace('sample', 'extract')}.json", rep)
        reports.append(rep)
    return reports


def room_cells_for(sample: Sample) -> np.ndarray:
    """Cells the room is built from: the input mask when one conditioned the sample.

    A floor-only mask borrows door and window pixels the model placed on it;
    unconditioned samples use the generated map itself.
    """
    gen = sample.map.cells
    if sample.kind == ConditionKind.ARCH:
        return sample.mask
    if sample.kind == ConditionKind.FLOOR:
        opening = np.isin(gen, (DOOR, WINDOW))
        return np.where(sample.mask == FLOOR, np.where(opening, gen, FLOOR), VOID)
    return np.where(gen == VOID, VOID, np.where(np.isin(gen, (DOOR, WINDOW)), gen, FLOOR))


class AttributeSource:
    """Trained attribute model when available, otherwise category priors plus the inward heuristic."""

    def __init__(self, model: ApmModel | None = None, priors: VerticalPriors | None = None):
        if model is None and priors is None:
            raise ConfigError("need an attribute model or vertical priors")
        self.model = model
        self.priors = priors

    def predict(self, smap: SemanticMap, instances) -> list[AttributePrediction]:
        if not instances:
            return []
        if self.model is not None:
            ex = [(smap, e.mask.mask, (0.0, 0.0, 0), e.category) for e in instances]
            data = build_instance_set(self.model, ex)
            return self.model.predict_batch(data.Lp, data.Mp)
        out = []
        for e in instances:
            s_y, p_y = heuristic_vertical(e.category, self.priors)
            r = heuristic_orientation("inward", e.mask, smap)
            logits = tuple(1.0 if k == r else 0.0 for k in range(4))
            out.append(AttributePrediction(s_y, p_y, logits))
        return out


def assemble_samples(samples: Sequence[Sample], reports: Sequence[dict], attrs: AttributeSource,
                     catalog: AssetCatalog, cfg: dict, out_dir=None) -> list[Scene3D]:
    a = cfg["assembly"]
    scenes = []
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    for s, rep in zip(samples, reports):
        insts = instances_from_report(rep)
        preds = attrs.predict(s.map, insts)
        scene = assemble_scene(insts, preds, catalog, room_cells_for(s), s.map.scale, rescale=bool(a["rescale"]),
                               room_type=s.room_type, wall_height=a["wall_height"], door_height=a["door_height"],
                               window_span=tuple(a["window_span"]))
        scenes.append(scene)
        if out_dir is not None:
            base = Path(out_dir) / s.name.replace("sample", "scene")
            export_scene(scene, base.with_suffix(".json"))
            export_scene(scene, base.with_suffix(".obj"))
    return scenes


def load_scenes(scene_dir) -> list[Scene3D]:
    paths = sorted(Path(scene_dir).glob("scene_*.json"))
    if not paths:
        raise DataError(f"no scenes in {scene_dir}")
    return [import_scene(p) for p in paths]


def run_evaluate(scenes: Sequence[Scene3D], K: int, gt: dict[int, CategoryHistogram], out_dir) -> MetricReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return evaluate_corpus(scenes, K, gt, out_dir / "metrics.csv", out_dir / "metrics.json")


# -- rendering ------------------------------------------------------------


def scene_top_down(scene: Scene3D, cell: float, palette: CategoryPalette) -> SemanticMap:
    """Footprints rasterized on a grid anchored at the world origin (floor, then objects by placement order)."""
    poly = scene.room.polygon
    x1, z1 = poly.max(axis=0)
    for p in scene.placements:
        ex = footprint_extent(p)
        x1, z1 = max(x1, ex[2]), max(z1, ex[3])
    W, H = int(np.ceil(x1 / cell - 1e-9)), int(np.ceil(z1 / cell - 1e-9))
    gx, gz = np.meshgrid((np.arange(W) + 0.5) * cell, (np.arange(H) + 0.5) * cell)
    inside = point_in_polygon(np.stack([gx.ravel(), gz.ravel()], 1), poly, tol=0.0).reshape(H, W)
    cells = np.where(inside, FLOOR, VOID).astype(np.int64)
    for p in scene.placements:
        x0, zz0, xx1, zz1 = footprint_extent(p)
        cells[(gx >= x0) & (gx <= xx1) & (gz >= zz0) & (gz <= zz1)] = min(p.category, palette.K - 1)
    return SemanticMap(cells, cell)


def run_render(path, out_png, palette: CategoryPalette, cell: float = 0.05) -> Path:
    path = Path(path)
    d = json.loads(path.read_text())
    fmt = d.get("format", "")
    if fmt == "scenemap-scene":
        smap = scene_top_down(import_scene(path), cell, palette)
    elif fmt == SAMPLE_FORMAT:
        smap = map_from_dict(d["map"])
    elif fmt == "scenemap-scene-record":
        smap = map_from_dict(d["map"])
    else:
        smap = load_map_json(path)
    save_map_png(smap, palette, out_png)
    return Path(out_png)


def read_png_indices(path) -> np.ndarray:
    return np.asarray(Image.open(path))
