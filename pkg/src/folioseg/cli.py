"""Command-line front end.

Subcommands::

    synth      generate a synthetic manuscript corpus with exact ground truth
    binarize   Sauvola/Niblack ink mask for a page image
    tile       split a page into baseline patches with a CSV manifest
    train      fit the backbone on an annotated corpus
    infer      predict label maps with a trained model
    refine     mask a coarse label map with the Sauvola ink mask
    evaluate   score a predicted map against ground truth
    ablate     run all four toggle combinations and render the study table
    compare    rank a result row against published reference systems

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import binarize as bz
from . import model as mdl
from . import pipeline as pl
from . import synthcorpus as sc
from .errors import (
    ConfigError,
    CropTooLarge,
    DimensionMismatch,
    ModelFileError,
    NotDivisible,
    NumericError,
    UnknownColor,
    UnsupportedImage,
    ZeroFrequency,
)
from .imagecore import (
    decode_labels,
    encode_labels,
    read_png,
    to_grayscale,
    write_png,
)
from .metrics import confusion, weighted_metrics
from .refine import refine
from .sampler import extract, tile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (
    UnknownColor,
    UnsupportedImage,
    DimensionMismatch,
    NotDivisible,
    CropTooLarge,
    ModelFileError,
    ZeroFrequency,
    FileNotFoundError,
)


def _load_gray(path) -> np.ndarray:
    img = read_png(path)
    return img if img.ndim == 2 else to_grayscale(img)


def _config_from_args(args) -> pl.PipelineConfig:
    cfg = pl.load_config(args.config)
    overrides = {}
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    if getattr(args, "seed", None) is not None:
        overrides["train"] = replace(cfg.train, seed=args.seed)
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    return replace(cfg, **overrides) if overrides else cfg


# --------------------------------------------------------------------------
# Subcommand handlers
# --------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    root = Path(args.out)
    images_dir = root / "images"
    labels_dir = root / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    groups = args.groups.split(",") if args.groups else list(sc.RECIPE_VARIANTS)
    manifest = {"schema": 1, "seed": args.seed, "pages": []}
    for gi, group in enumerate(groups):
        base = sc.recipe_variant(group) if group in sc.RECIPE_VARIANTS else sc.PageRecipe()
        base = replace(base, noise=args.noise)
        pages = sc.generate_corpus(args.pages_per_group, base,
                                   seed=args.seed + 1000 * gi)
        for pi, (image, labels) in enumerate(pages):
            name = f"{group}_{pi}.png"
            write_png(images_dir / name, image)
            write_png(labels_dir / name, encode_labels(labels))
            manifest["pages"].append({"image": name, "label": name, "group": group})
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(manifest['pages'])} pages under {root}")
    return EXIT_OK


def _cmd_binarize(args) -> int:
    gray = _load_gray(args.input)
    if args.algorithm == "sauvola":
        params = bz.SauvolaParams(window=args.window,
                                  k=args.k if args.k is not None else 0.1,
                                  r=args.r)
        mask = bz.sauvola_mask(gray, params, path=args.path)
    else:
        k = args.k if args.k is not None else bz.NIBLACK_DEFAULT_K
        mask = bz.niblack_mask(gray, window=args.window, k=k, path=args.path)
    write_png(args.output, bz.mask_to_image(mask))
    print(f"{args.output}: {int(mask.sum())} ink pixels of {mask.size}")
    return EXIT_OK


def _cmd_tile(args) -> int:
    img = read_png(args.image)
    gt = read_png(args.gt) if args.gt else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h, w = img.shape[:2]
    patch_set = tile(w, h, args.side, image_id=Path(args.image).stem)
    lines = ["image_id,x,y,side,kind"]
    dummy_gt = gt if gt is not None else np.zeros(img.shape[:2], dtype=np.uint8)
    for i, spec in enumerate(patch_set.specs):
        patch, gt_patch = extract(img, dummy_gt, spec)
        write_png(out / f"{patch_set.image_id}_{i:04d}.png", patch)
        if gt is not None:
            write_png(out / f"{patch_set.image_id}_{i:04d}_gt.png", gt_patch)
        lines.append(f"{patch_set.image_id},{spec.x},{spec.y},{spec.side},{patch_set.kind}")
    (out / "manifest.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(patch_set.specs)} patches to {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    groups = pl.load_groups(cfg)
    pages = [p for name in sorted(groups) for p in groups[name]]
    grays = [p.gray for p in pages]
    gts = [p.labels for p in pages]
    train_cfg = cfg.train if cfg.dynamic_crops else replace(cfg.train, crops_per_image=0)
    params, log = mdl.train(grays, gts, train_cfg, cfg.patch_side, window=cfg.model_window)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mdl.save_params(out / "model.folio", params)
    mdl.write_log(out / "train_log.jsonl", log)
    final = [e for e in log if e.get("event") == "epoch"][-1]
    print(f"trained {final['epoch']} epochs, last loss {final['loss']:.6f}; "
          f"model at {out / 'model.folio'}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    cfg = _config_from_args(args)
    params = mdl.load_params(args.model)
    groups = pl.load_groups(cfg)
    out = Path(cfg.output_dir)
    maps_dir = out / "maps"
    overlay_dir = out / "overlays"
    maps_dir.mkdir(parents=True, exist_ok=True)
    overlay_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for name in sorted(groups):
        for page in groups[name]:
            labels = pl.predict_page(params, page.gray, cfg.patch_side, cfg.threads)
            if cfg.refinement:
                mask = bz.sauvola_mask(page.gray, cfg.sauvola)
                labels, _ = refine(labels, mask)
            write_png(maps_dir / f"{page.name}.png", encode_labels(labels, cfg.palette))
            write_png(overlay_dir / f"{page.name}.png",
                      pl.overlay(page.gray, labels, cfg.palette))
            count += 1
    print(f"wrote {count} predicted maps to {maps_dir}")
    return EXIT_OK


def _cmd_refine(args) -> int:
    coarse = decode_labels(read_png(args.coarse))
    gray = _load_gray(args.image)
    params = bz.SauvolaParams(window=args.window, k=args.k, r=args.r)
    mask = bz.sauvola_mask(gray, params)
    refined, report = refine(coarse, mask)
    write_png(args.output, encode_labels(refined))
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    print(f"{args.output}: flipped {report.flipped_total} foreground pixels to background")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    gt = decode_labels(read_png(args.gt))
    pred = decode_labels(read_png(args.pred))
    row = weighted_metrics(confusion(gt, pred))
    payload = {"schema": pl.METRICS_SCHEMA, "metrics": row.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    if args.csv:
        pl._write_metrics_csv(args.csv, [(args.corpus, args.label, row)])
    wa = row.weighted_all
    print(f"weighted (all classes): precision={wa.precision:.4f} recall={wa.recall:.4f} "
          f"iou={wa.iou:.4f} f1={wa.f1:.4f}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    result = pl.run_ablation(cfg)
    print(result.table, end="")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.metrics:
        payload = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
        if "configs" in payload:  # ablation metrics: pick one config's mean row
            entry = payload["configs"][args.config_row]["mean"]["weighted_all"]
        elif "pooled" in payload:
            entry = payload["pooled"]["weighted_all"]
        else:
            entry = payload["metrics"]["weighted_all"]
        ours = (entry["precision"], entry["recall"], entry["iou"], entry["f1"])
    else:
        if None in (args.precision, args.recall, args.iou, args.f1):
            raise ConfigError("pass either --metrics or all four metric values")
        ours = (args.precision, args.recall, args.iou, args.f1)
    result = pl.render_comparison(ours)
    print(result.text, end="")
    if args.out:
        Path(args.out).write_text(result.text, encoding="utf-8")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="folioseg",
        description="Few-shot layout segmentation for handwritten document pages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--out", required=True, help="corpus root directory")
    p.add_argument("--pages-per-group", type=int, default=2)
    p.add_argument("--groups", default="",
                   help="comma-separated group names (default: built-in variants)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=int, default=6)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("binarize", help="compute an ink mask for a page")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--algorithm", choices=("sauvola", "niblack"), default="sauvola")
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--k", type=float, default=None,
                   help="sensitivity (default 0.1 sauvola, -0.2 niblack)")
    p.add_argument("--r", type=float, default=128.0)
    p.add_argument("--path", choices=("integral", "naive"), default="integral")
    p.set_defaults(func=_cmd_binarize)

    p = sub.add_parser("tile", help="split a page into baseline patches")
    p.add_argument("--image", required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tile)

    for name, handler in (("train", _cmd_train), ("infer", _cmd_infer),
                          ("ablate", _cmd_ablate)):
        p = sub.add_parser(name, help=f"{name} using a pipeline config file")
        p.add_argument("--config", required=True)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "infer":
            p.add_argument("--model", required=True)
        p.set_defaults(func=handler)

    p = sub.add_parser("refine", help="mask a coarse map with the Sauvola mask")
    p.add_argument("--coarse", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--k", type=float, default=0.1)
    p.add_argument("--r", type=float, default=128.0)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("evaluate", help="score a prediction against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--corpus", default="all")
    p.add_argument("--label", default="run")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="rank a result against published systems")
    p.add_argument("--metrics", default=None, help="metrics.json from a run")
    p.add_argument("--config-row", default="both",
                   help="which ablation row to take from ablation metrics")
    p.add_argument("--precision", type=float, default=None)
    p.add_argument("--recall", type=float, default=None)
    p.add_argument("--iou", type=float, default=None)
    p.add_argument("--f1", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
