"""End-to-end orchestration: train, stitch, refine, evaluate, report.

A :class:`PipelineConfig` carries every knob of the pipeline and round-trips
through a flat ``key = value`` text format.  :func:`run_pipeline` executes one
configuration on one corpus; :func:`run_ablation` executes the four toggle
combinations (baseline, refinement only, dynamic crops only, both) per corpus
group with a shared seed and renders the result table.

Evaluation happens at the resized working resolution.  Metrics files contain
no paths or timestamps, so a rerun with the same config and seed reproduces
them byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .binarize import SauvolaParams, sauvola_mask
from .errors import ConfigError, DimensionMismatch
from .imagecore import (
    CLASS_NAMES,
    ClassPalette,
    decode_labels,
    encode_labels,
    read_png,
    resize,
    to_grayscale,
    write_png,
)
from .metrics import (
    REFERENCE_ABLATION_MEANS,
    REFERENCE_COMPETITORS,
    MetricQuad,
    MetricRow,
    confusion,
    mean_rows,
    weighted_metrics,
)
from .model import (
    BackboneParams,
    TrainConfig,
    class_frequencies,
    class_weights,
    forward,
    save_params,
    train,
    write_log,
)
from .refine import refine
from .sampler import tile

METRICS_SCHEMA = 1

#: Ablation rows in presentation order: (name, dynamic crops on, refinement on).
ABLATION_CONFIGS = (
    ("baseline", False, False),
    ("refinement", False, True),
    ("dynamic_crops", True, False),
    ("both", True, True),
)


@dataclass(frozen=True)
class PipelineConfig:
    """Paths plus every numeric setting of the segmentation pipeline."""

    images_dir: str = ""
    labels_dir: str = ""
    output_dir: str = ""
    palette: ClassPalette = field(default_factory=ClassPalette)
    resize_width: int = 1120
    resize_height: int = 1344
    patch_side: int = 224
    sauvola: SauvolaParams = field(default_factory=SauvolaParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    model_window: int = 7
    dynamic_crops: bool = True
    refinement: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if self.resize_width % self.patch_side or self.resize_height % self.patch_side:
            raise ConfigError(
                f"resize target {self.resize_width}x{self.resize_height} must be "
                f"divisible by patch side {self.patch_side}"
            )
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


# --------------------------------------------------------------------------
# Flat key=value config text format
# --------------------------------------------------------------------------

def serialize_config(cfg: PipelineConfig) -> str:
    """Render a config as documented flat ``key = value`` lines."""
    hexes = cfg.palette.to_hex()
    lines = [
        f"images_dir = {cfg.images_dir}",
        f"labels_dir = {cfg.labels_dir}",
        f"output_dir = {cfg.output_dir}",
        *[f"palette.{name} = {hexes[name]}" for name in CLASS_NAMES],
        f"resize_width = {cfg.resize_width}",
        f"resize_height = {cfg.resize_height}",
        f"patch_side = {cfg.patch_side}",
        f"sauvola.window = {cfg.sauvola.window}",
        f"sauvola.k = {cfg.sauvola.k!r}",
        f"sauvola.r = {cfg.sauvola.r!r}",
        f"train.learning_rate = {cfg.train.learning_rate!r}",
        f"train.weight_decay = {cfg.train.weight_decay!r}",
        f"train.max_epochs = {cfg.train.max_epochs}",
        f"train.early_stop_start = {cfg.train.early_stop_start}",
        f"train.patience = {cfg.train.patience}",
        f"train.crops_per_image = {cfg.train.crops_per_image}",
        f"train.seed = {cfg.train.seed}",
        f"model_window = {cfg.model_window}",
        f"dynamic_crops = {'true' if cfg.dynamic_crops else 'false'}",
        f"refinement = {'true' if cfg.refinement else 'false'}",
        f"threads = {cfg.threads}",
    ]
    return "\n".join(lines) + "\n"


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


_CONFIG_TYPES = {
    "images_dir": str, "labels_dir": str, "output_dir": str,
    **{f"palette.{name}": str for name in CLASS_NAMES},
    "resize_width": int, "resize_height": int, "patch_side": int,
    "sauvola.window": int, "sauvola.k": float, "sauvola.r": float,
    "train.learning_rate": float, "train.weight_decay": float,
    "train.max_epochs": int, "train.early_stop_start": int,
    "train.patience": int, "train.crops_per_image": int, "train.seed": int,
    "model_window": int, "dynamic_crops": _parse_bool,
    "refinement": _parse_bool, "threads": int,
}


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    """Parse the flat config format; unknown keys and bad values are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc

    defaults = PipelineConfig()
    palette_hex = defaults.palette.to_hex()
    for name in CLASS_NAMES:
        palette_hex[name] = values.get(f"palette.{name}", palette_hex[name])
    try:
        palette = ClassPalette.from_hex(palette_hex)
        sauvola = SauvolaParams(
            window=values.get("sauvola.window", defaults.sauvola.window),
            k=values.get("sauvola.k", defaults.sauvola.k),
            r=values.get("sauvola.r", defaults.sauvola.r),
        )
        train_cfg = TrainConfig(
            learning_rate=values.get("train.learning_rate", defaults.train.learning_rate),
            weight_decay=values.get("train.weight_decay", defaults.train.weight_decay),
            max_epochs=values.get("train.max_epochs", defaults.train.max_epochs),
            early_stop_start=values.get("train.early_stop_start", defaults.train.early_stop_start),
            patience=values.get("train.patience", defaults.train.patience),
            crops_per_image=values.get("train.crops_per_image", defaults.train.crops_per_image),
            seed=values.get("train.seed", defaults.train.seed),
        )
        return PipelineConfig(
            images_dir=values.get("images_dir", ""),
            labels_dir=values.get("labels_dir", ""),
            output_dir=values.get("output_dir", ""),
            palette=palette,
            resize_width=values.get("resize_width", defaults.resize_width),
            resize_height=values.get("resize_height", defaults.resize_height),
            patch_side=values.get("patch_side", defaults.patch_side),
            sauvola=sauvola,
            train=train_cfg,
            model_window=values.get("model_window", defaults.model_window),
            dynamic_crops=values.get("dynamic_crops", defaults.dynamic_crops),
            refinement=values.get("refinement", defaults.refinement),
            threads=values.get("threads", defaults.threads),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), source=str(path))


def save_config(path, cfg: PipelineConfig) -> None:
    Path(path).write_text(serialize_config(cfg), encoding="utf-8")


# --------------------------------------------------------------------------
# Corpus loading
# --------------------------------------------------------------------------

@dataclass
class Page:
    """One page at working resolution: grayscale image plus labels."""

    name: str
    gray: np.ndarray
    labels: np.ndarray


def load_page(image_path, label_path, cfg: PipelineConfig) -> Page:
    img = read_png(image_path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    gt = decode_labels(read_png(label_path), cfg.palette)
    if img.shape[:2] != gt.shape:
        raise DimensionMismatch(
            f"{image_path} is {img.shape[1]}x{img.shape[0]} but its ground truth "
            f"is {gt.shape[1]}x{gt.shape[0]}"
        )
    target = (cfg.resize_width, cfg.resize_height)
    if (img.shape[1], img.shape[0]) != target:
        img = resize(img, cfg.resize_width, cfg.resize_height, mode="bilinear")
        gt = resize(gt, cfg.resize_width, cfg.resize_height, mode="nearest")
    return Page(name=Path(image_path).stem, gray=to_grayscale(img), labels=gt)


def load_groups(cfg: PipelineConfig) -> dict[str, list[Page]]:
    """Load every page, grouped by the corpus manifest when one exists.

    Pages live in ``images_dir`` with same-named ground truth in
    ``labels_dir``.  A ``manifest.json`` next to the images directory assigns
    pages to groups; without one, all pages form a single group ``all``.
    """
    images_dir = Path(cfg.images_dir)
    labels_dir = Path(cfg.labels_dir)
    if not images_dir.is_dir():
        raise FileNotFoundError(f"images directory not found: {images_dir}")
    if not labels_dir.is_dir():
        raise FileNotFoundError(f"labels directory not found: {labels_dir}")

    manifest_path = images_dir.parent / "manifest.json"
    group_of: dict[str, str] = {}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        for entry in manifest.get("pages", []):
            group_of[entry["image"]] = entry.get("group", "all")

    groups: dict[str, list[Page]] = {}
    names = sorted(p.name for p in images_dir.glob("*.png"))
    if not names:
        raise FileNotFoundError(f"no PNG pages in {images_dir}")
    for filename in names:
        label_path = labels_dir / filename
        if not label_path.is_file():
            raise FileNotFoundError(f"missing ground truth for {filename}: {label_path}")
        page = load_page(images_dir / filename, label_path, cfg)
        groups.setdefault(group_of.get(filename, "all"), []).append(page)
    return {name: groups[name] for name in sorted(groups)}


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------

def predict_page(params: BackboneParams, gray: np.ndarray, patch_side: int,
                 threads: int = 1) -> np.ndarray:
    """Stitch per-patch argmax predictions into a full-page label map.

    The baseline tiling is disjoint and covers the page, so every output
    pixel is written exactly once; the result is independent of ``threads``.
    """
    h, w = gray.shape
    specs = tile(w, h, patch_side).specs
    out = np.zeros((h, w), dtype=np.uint8)

    def predict(spec):
        region = gray[spec.y:spec.y + spec.side, spec.x:spec.x + spec.side]
        probs = forward(params, region)
        return spec, probs.argmax(axis=2).astype(np.uint8)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(predict, specs))
    else:
        results = [predict(s) for s in specs]
    for spec, patch_labels in results:
        out[spec.y:spec.y + spec.side, spec.x:spec.x + spec.side] = patch_labels
    return out


def overlay(gray: np.ndarray, labels: np.ndarray, palette: ClassPalette,
            alpha: float = 0.5) -> np.ndarray:
    """Blend the palette-colored foreground over the grayscale page."""
    base = np.repeat(gray[:, :, None], 3, axis=2).astype(np.float64)
    colors = palette.as_array().astype(np.float64)
    fg = labels > 0
    base[fg] = (1.0 - alpha) * base[fg] + alpha * colors[labels[fg]]
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# Pipeline runs
# --------------------------------------------------------------------------

@dataclass
class PipelineResult:
    """Pooled metrics plus everything produced along the way."""

    row: MetricRow
    per_page: dict[str, MetricRow]
    params: BackboneParams
    log: list
    coarse_maps: dict[str, np.ndarray]
    final_maps: dict[str, np.ndarray]


def _train_and_evaluate(pages: list[Page], cfg: PipelineConfig) -> PipelineResult:
    grays = [p.gray for p in pages]
    gts = [p.labels for p in pages]
    train_cfg = cfg.train if cfg.dynamic_crops else replace(cfg.train, crops_per_image=0)
    weights = class_weights(class_frequencies(gts))
    params, log = train(grays, gts, train_cfg, cfg.patch_side,
                        window=cfg.model_window, weights=weights)

    coarse_maps: dict[str, np.ndarray] = {}
    final_maps: dict[str, np.ndarray] = {}
    per_page: dict[str, MetricRow] = {}
    total = np.zeros((4, 4), dtype=np.int64)
    for page in pages:
        coarse = predict_page(params, page.gray, cfg.patch_side, cfg.threads)
        coarse_maps[page.name] = coarse
        if cfg.refinement:
            mask = sauvola_mask(page.gray, cfg.sauvola)
            final, _ = refine(coarse, mask)
        else:
            final = coarse
        final_maps[page.name] = final
        m = confusion(page.labels, final)
        per_page[page.name] = weighted_metrics(m)
        total += m
    return PipelineResult(
        row=weighted_metrics(total),
        per_page=per_page,
        params=params,
        log=log,
        coarse_maps=coarse_maps,
        final_maps=final_maps,
    )


def _write_run_artifacts(result: PipelineResult, pages: list[Page],
                         cfg: PipelineConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_params(out_dir / "model.folio", result.params)
    write_log(out_dir / "train_log.jsonl", result.log)
    maps_dir = out_dir / "maps"
    overlay_dir = out_dir / "overlays"
    maps_dir.mkdir(exist_ok=True)
    overlay_dir.mkdir(exist_ok=True)
    for page in pages:
        final = result.final_maps[page.name]
        write_png(maps_dir / f"{page.name}.png", encode_labels(final, cfg.palette))
        write_png(overlay_dir / f"{page.name}.png",
                  overlay(page.gray, final, cfg.palette))
        if cfg.refinement:
            coarse_dir = out_dir / "maps_coarse"
            coarse_dir.mkdir(exist_ok=True)
            write_png(coarse_dir / f"{page.name}.png",
                      encode_labels(result.coarse_maps[page.name], cfg.palette))


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Train, predict, optionally refine, evaluate; write artifacts.

    All pages under ``images_dir`` act as one corpus.  Artifacts land in
    ``output_dir``: the model file, training log, predicted maps, overlays
    and ``metrics.json`` / ``metrics.csv``.
    """
    groups = load_groups(cfg)
    pages = [p for name in sorted(groups) for p in groups[name]]
    result = _train_and_evaluate(pages, cfg)
    out_dir = Path(cfg.output_dir)
    _write_run_artifacts(result, pages, cfg, out_dir)
    payload = {
        "schema": METRICS_SCHEMA,
        "seed": cfg.train.seed,
        "pooled": result.row.to_dict(),
        "pages": {name: row.to_dict() for name, row in sorted(result.per_page.items())},
    }
    (out_dir / "metrics.json").write_text(_dump_json(payload), encoding="utf-8")
    _write_metrics_csv(out_dir / "metrics.csv",
                       [(name, "run", row) for name, row in
                        sorted(result.per_page.items())] +
                       [("pooled", "run", result.row)])
    return result


@dataclass
class AblationResult:
    """Per-configuration, per-group metric rows plus the rendered table."""

    rows: dict[str, dict[str, MetricRow]]   # config -> group -> row
    means: dict[str, MetricRow]             # config -> mean over groups
    table: str


def run_ablation(cfg: PipelineConfig) -> AblationResult:
    """Run the four toggle combinations per corpus group with a shared seed."""
    groups = load_groups(cfg)
    out_root = Path(cfg.output_dir)
    rows: dict[str, dict[str, MetricRow]] = {}
    means: dict[str, MetricRow] = {}
    for config_name, crops_on, refine_on in ABLATION_CONFIGS:
        run_cfg = replace(cfg, dynamic_crops=crops_on, refinement=refine_on)
        per_group: dict[str, MetricRow] = {}
        for group_name, pages in groups.items():
            result = _train_and_evaluate(pages, run_cfg)
            _write_run_artifacts(result, pages, run_cfg,
                                 out_root / "ablation" / config_name / group_name)
            per_group[group_name] = result.row
        rows[config_name] = per_group
        means[config_name] = mean_rows(per_group.values())

    table = render_ablation_table(rows, means)
    payload = {
        "schema": METRICS_SCHEMA,
        "seed": cfg.train.seed,
        "groups": sorted(groups),
        "configs": {
            name: {
                "groups": {g: rows[name][g].to_dict() for g in sorted(rows[name])},
                "mean": means[name].to_dict(),
            }
            for name, _, _ in ABLATION_CONFIGS
        },
    }
    (out_root / "metrics.json").write_text(_dump_json(payload), encoding="utf-8")
    csv_rows = []
    for name, _, _ in ABLATION_CONFIGS:
        for g in sorted(rows[name]):
            csv_rows.append((g, name, rows[name][g]))
        csv_rows.append(("mean", name, means[name]))
    _write_metrics_csv(out_root / "metrics.csv", csv_rows)
    (out_root / "ablation_table.txt").write_text(table, encoding="utf-8")
    return AblationResult(rows=rows, means=means, table=table)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_metrics_csv(path, entries) -> None:
    """Rows of (corpus, config, MetricRow) -> documented CSV schema."""
    lines = ["corpus,config,class,precision,recall,iou,f1"]
    for corpus, config_name, row in entries:
        cells = list(zip(CLASS_NAMES, row.per_class))
        cells.append(("weighted_all", row.weighted_all))
        cells.append(("weighted_foreground", row.weighted_foreground))
        for cls, quad in cells:
            lines.append(
                f"{corpus},{config_name},{cls},"
                f"{quad.precision:.6f},{quad.recall:.6f},{quad.iou:.6f},{quad.f1:.6f}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_METRIC_HEADS = ("Prec", "Rec", "IoU", "F1")


def render_ablation_table(rows: dict[str, dict[str, MetricRow]],
                          means: dict[str, MetricRow]) -> str:
    """Fixed-width table: one row per configuration, per-group and mean columns."""
    groups = sorted(next(iter(rows.values())))
    headers = ["config"]
    for g in groups + ["mean"]:
        headers += [f"{g}.{h}" for h in _METRIC_HEADS]
    widths = [max(14, len(h) + 1) for h in headers]

    def fmt_line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    lines = [fmt_line(headers)]
    for name, _, _ in ABLATION_CONFIGS:
        cells = [name]
        for g in groups:
            cells += [f"{v:.3f}" for v in rows[name][g].weighted_all.as_tuple()]
        cells += [f"{v:.3f}" for v in means[name].weighted_all.as_tuple()]
        lines.append(fmt_line(cells))
    ref = REFERENCE_ABLATION_MEANS["both"]
    lines.append("")
    lines.append(
        "published reference, combined configuration, full-scale corpus (mean): "
        + " ".join(f"{h}={v:.3f}" for h, v in zip(_METRIC_HEADS, ref))
    )
    return "\n".join(lines) + "\n"


@dataclass
class ComparisonResult:
    """Our scores ranked against the published competitor rows."""

    rows: list[tuple[str, tuple[float, float, float, float]]]
    best: list[set]        # per metric column: row names with rank 1
    second: list[set]      # per metric column: row names with rank 2
    our_rank: tuple[int, int, int, int]
    text: str


def render_comparison(our_row, our_label: str = "ours") -> ComparisonResult:
    """Annotate best (*v*) and second-best (_v_) per metric column.

    ``our_row`` is a MetricQuad or a (precision, recall, iou, f1) tuple.
    Rank is 1 plus the number of rows with a strictly larger value, so tied
    leaders are all marked best.
    """
    ours = our_row.as_tuple() if isinstance(our_row, MetricQuad) else tuple(our_row)
    if len(ours) != 4:
        raise ValueError("expected four metric values")
    rows = [(name, vals) for name, vals in REFERENCE_COMPETITORS.items()]
    rows.append((our_label, tuple(float(v) for v in ours)))

    best: list[set] = []
    second: list[set] = []
    ranks: dict[str, list[int]] = {name: [] for name, _ in rows}
    for col in range(4):
        col_vals = {name: vals[col] for name, vals in rows}
        for name, value in col_vals.items():
            rank = 1 + sum(other > value for other in col_vals.values())
            ranks[name].append(rank)
        best.append({n for n, r in ranks.items() if r[col] == 1})
        second.append({n for n, r in ranks.items() if r[col] == 2})

    name_w = max(len(n) for n, _ in rows) + 2
    lines = ["".ljust(name_w) + "  ".join(h.ljust(9) for h in _METRIC_HEADS).rstrip()]
    for name, vals in rows:
        cells = []
        for col, v in enumerate(vals):
            cell = f"{v:.3f}"
            if name in best[col]:
                cell = f"*{cell}*"
            elif name in second[col]:
                cell = f"_{cell}_"
            cells.append(cell.ljust(9))
        lines.append(name.ljust(name_w) + "  ".join(cells).rstrip())
    lines.append("")
    lines.append("best per column marked *bold*, second best _underlined_")
    lines.append("reference rows: published full-supervision results on DIVA-HisDB")
    return ComparisonResult(
        rows=rows,
        best=best,
        second=second,
        our_rank=tuple(ranks[our_label]),
        text="\n".join(lines) + "\n",
    )
