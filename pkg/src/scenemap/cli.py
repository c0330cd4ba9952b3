"""Command line entry point: ``scenemap <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 checkpoint or
condition-mode mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import pipeline
from .apm import ApmModel, VerticalPriors
from .assembly import AssetCatalog
from .config import load_config, output_root
from .diffusion import ReferenceDenoiser
from .errors import CheckpointError, ConfigError, DataError, ScenemapError
from .extraction import ThresholdTable
from .layout import CategoryPalette, ConditionKind, ConditionSpec, ROOM_TYPES
from .synth import dataset_palette, load_manifest

log = logging.getLogger("scenemap")


def _paths(args) -> dict[str, Path]:
    root = output_root(args.output_root)
    return {
        "root": root,
        "data": Path(args.data) if getattr(args, "data", None) else root / "data",
        "models": root / "models",
    }


def _config(args) -> dict:
    return load_config(args.config, args.set or (), args.preset)


def _palette_for(manifest_root: Path) -> CategoryPalette:
    return dataset_palette(load_manifest(manifest_root))


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.n is not None:
        cfg["data"]["n_scenes"] = args.n
    if args.seed is not None:
        cfg["data"]["seed"] = args.seed
    out = Path(args.out) if args.out else _paths(args)["data"]
    m = pipeline.run_synth(cfg, out)
    print(f"wrote {sum(m['counts'].values())} scenes to {out} ({m['counts']})")
    return 0


def cmd_train_denoiser(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    if args.mode:
        cfg["denoiser"]["mode"] = args.mode
    if args.steps is not None:
        cfg["denoiser"]["steps"] = args.steps
    if args.seed is not None:
        cfg["denoiser"]["seed"] = args.seed
    out = Path(args.out) if args.out else p["models"] / "denoiser.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_name(out.stem + "_loss.csv")
    pipeline.run_train_denoiser(cfg, p["data"], out, log_path)
    print(f"saved denoiser to {out}; loss log {log_path}")
    return 0


def cmd_train_apm(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    if args.epochs is not None:
        cfg["apm"]["epochs"] = args.epochs
    if args.seed is not None:
        cfg["apm"]["seed"] = args.seed
    out = Path(args.out) if args.out else p["models"] / "apm.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_name(out.stem + "_loss.csv")
    pipeline.run_train_apm(cfg, p["data"], out, log_path)
    print(f"saved attribute model to {out}; loss log {log_path}")
    return 0


def cmd_generate(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    g = cfg["generate"]
    kind = args.condition or g["condition"]
    n = args.n if args.n is not None else int(g["n"])
    seed = args.seed if args.seed is not None else int(g["seed"])
    ckpt = Path(args.checkpoint) if args.checkpoint else p["models"] / "denoiser.json"
    model, meta = ReferenceDenoiser.load(ckpt)
    model.check_kind(kind)
    palette = _palette_for(p["data"]) if (p["data"] / "manifest.json").exists() else None
    if palette is None:
        palette = CategoryPalette.desk() if cfg["palette"] == "desk" else CategoryPalette.full()
    if meta.get("palette_hash") and meta["palette_hash"] != palette.hash():
        raise CheckpointError("checkpoint was trained with a different category palette")
    scale = float(meta.get("extra", {}).get("scale", cfg["data"]["scale"]))
    ckind = ConditionKind.parse(kind)
    if args.mask or args.room_type:
        room = ROOM_TYPES.index(args.room_type or ROOM_TYPES[0])
        shape = tuple(cfg["data"]["canvas"])
        if ckind == ConditionKind.NONE:
            conds = [ConditionSpec.from_arch(pipeline.ArchMask.zeros(shape), ckind, room)] * n
        else:
            if not args.mask:
                raise ConfigError(f"--condition {kind} needs --mask")
            arch = pipeline.load_mask_file(args.mask, shape)
            conds = [ConditionSpec.from_arch(arch, ckind, room)] * n
    else:
        conds = pipeline.conditions_from_split(p["data"], ckind, n, g["split"])
    out = Path(args.out) if args.out else p["root"] / "samples" / kind
    pipeline.run_generate(model, conds, scale, out, seed, palette, int(g["batch_size"]),
                          meta.get("schedule", {}).get("kind", "cosine"))
    # stamp the architecture that actually produced the samples
    used = {k: v for k, v in asdict(model.config).items() if k in cfg["denoiser"]}
    pipeline.stamp(out, "generate", {**cfg, "denoiser": {**cfg["denoiser"], **used}}, seed)
    print(f"wrote {n} samples to {out}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    samples = pipeline.load_samples(args.samples)
    th_path = Path(args.thresholds) if args.thresholds else p["data"] / "stats" / "thresholds.json"
    if not th_path.exists():
        raise DataError(f"threshold table {th_path} not found")
    out = Path(args.out) if args.out else p["root"] / "extracted" / Path(args.samples).name
    reports = pipeline.run_extract(samples, ThresholdTable.load(th_path), out)
    pipeline.stamp(out, "extract", cfg)
    print(f"extracted {sum(len(r['instances']) for r in reports)} instances from {len(reports)} maps into {out}")
    return 0


def cmd_assemble(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    if args.rescale:
        cfg["assembly"]["rescale"] = True
    samples = pipeline.load_samples(args.samples)
    ext_dir = Path(args.extracted)
    reports = []
    for s in samples:
        path = ext_dir / f"{s.name.replace('sample', 'extract')}.json"
        if not path.exists():
            raise DataError(f"missing extraction report {path}")
        reports.append(json.loads(path.read_text()))
    catalog = AssetCatalog.load(Path(args.catalog) if args.catalog else p["data"] / "catalog.json")
    model = None
    if not args.heuristic:
        ckpt = Path(args.apm) if args.apm else p["models"] / "apm.json"
        model, _ = ApmModel.load(ckpt)
    priors = VerticalPriors.load(p["data"] / "stats" / "vertical_priors.json") if model is None else None
    out = Path(args.out) if args.out else p["root"] / "scenes" / Path(args.samples).name
    scenes = pipeline.assemble_samples(samples, reports, pipeline.AttributeSource(model, priors), catalog, cfg, out)
    pipeline.stamp(out, "assemble", cfg)
    failed = sum(len(s.failures) for s in scenes)
    print(f"assembled {len(scenes)} scenes into {out} ({failed} retrieval failures)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    p = _paths(args)
    scenes = pipeline.load_scenes(args.scenes)
    K = len(load_manifest(p["data"])["palette"])
    out = Path(args.out) if args.out else p["root"] / "reports" / Path(args.scenes).name
    report = pipeline.run_evaluate(scenes, K, pipeline.load_gt_histograms(p["data"]), out)
    pipeline.stamp(out, "evaluate", cfg)
    print(f"{'group':<12} {'CKLx100':>8} {'OOB_S':>7} {'OOB_O':>7} {'COL':>7} {'NAV':>7} {'objects':>8}")
    for r in report.rows:
        print(f"{r.group:<12} {r.CKL:8.3f} {r.OOB_S:7.2f} {r.OOB_O:7.2f} {r.COL:7.2f} {r.NAV:7.2f} {r.objects:8.2f}")
    return 0


def cmd_render(args) -> int:
    cfg = _config(args)
    palette = CategoryPalette.desk() if (args.palette or cfg["palette"]) == "desk" else CategoryPalette.full()
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".png")
    pipeline.run_render(args.input, out, palette, args.cell)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--preset", help="config preset (desk, desk64, paper)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry, e.g. denoiser.lr=1e-3")
    common.add_argument("--output-root", help="default location for outputs (else $SCENEMAP_OUTPUT_ROOT)")
    common.add_argument("--data", help="dataset directory (default <root>/data)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="scenemap", description="Semantic-map scene synthesis toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train-denoiser", parents=[common], help="train the layout denoiser")
    s.add_argument("--mode", choices=["mixed", "none", "floor", "arch"])
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--log")
    s.set_defaults(fn=cmd_train_denoiser)

    s = sub.add_parser("train-apm", parents=[common], help="train the attribute model")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--log")
    s.set_defaults(fn=cmd_train_apm)

    s = sub.add_parser("generate", parents=[common], help="sample semantic maps")
    s.add_argument("--checkpoint")
    s.add_argument("--condition", choices=["none", "floor", "arch"])
    s.add_argument("--mask", help="mask file (.npy grid, map JSON or scene record) for floor/arch conditions")
    s.add_argument("--room-type", choices=list(ROOM_TYPES))
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("extract", parents=[common], help="split samples into object instances")
    s.add_argument("--samples", required=True)
    s.add_argument("--thresholds")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_extract)

    s = sub.add_parser("assemble", parents=[common], help="build 3D scenes from extracted instances")
    s.add_argument("--samples", required=True)
    s.add_argument("--extracted", required=True)
    s.add_argument("--apm")
    s.add_argument("--heuristic", action="store_true", help="use category priors and the inward rule instead of the attribute model")
    s.add_argument("--catalog")
    s.add_argument("--rescale", action="store_true", help="scale assets to the predicted size")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_assemble)

    s = sub.add_parser("evaluate", parents=[common], help="compute scene metrics")
    s.add_argument("--scenes", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("render", parents=[common], help="write an indexed-palette PNG of a map or scene")
    s.add_argument("--input", required=True)
    s.add_argument("--palette", choices=["desk", "full"])
    s.add_argument("--cell", type=float, default=0.05, help="meters per pixel for scene top-down renders")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except ScenemapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
