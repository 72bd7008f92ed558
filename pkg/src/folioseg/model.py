"""Pluggable pixel-classifier backbone, class-weighted loss, and training.

The reference backbone is deliberately small: one linear layer over each
pixel's clamped s x s intensity window (normalized to [0, 1]) followed by a
softmax over the four layout classes.  It trains in seconds on a laptop while
exercising the full training path — class-frequency weighting, weighted
cross-entropy, Adam with weight decay, and patience-based early stopping.
Heavier segmentation networks can plug in by providing the same two entry
points (forward pass and parameter gradient).

Training is single-threaded by contract so a (config, seed) pair pins the
resulting parameters bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFileError, NumericError, ZeroFrequency
from .imagecore import NUM_CLASSES, ensure_gray, ensure_labels
from .sampler import epoch_dataset, tile

#: Floor applied to predicted probabilities before taking logs.
LOG_PROB_FLOOR = 1e-12

_MAGIC = b"FOLIO1"


def class_frequencies(gts) -> np.ndarray:
    """Fraction of pixels per class over a list of label maps; sums to 1."""
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    total = 0
    for gt in gts:
        lab = ensure_labels(gt)
        counts += np.bincount(lab.ravel(), minlength=NUM_CLASSES)
        total += lab.size
    if total == 0:
        raise ValueError("need at least one label map")
    return counts / total


def class_weights(freqs) -> np.ndarray:
    """Loss weight per class: w_i = sqrt(1 / F_i).

    Rare classes get large weights, which counters the heavy class imbalance
    of manuscript pages.  Frequencies are fractions; a common rescaling of all
    F_i only rescales all weights by the same factor, so the convention does
    not affect the relative weighting (the training log records it).
    """
    f = np.asarray(freqs, dtype=np.float64)
    if f.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} frequencies, got shape {f.shape}")
    if (f <= 0).any():
        raise ZeroFrequency(
            f"every class frequency must be positive, got {f.tolist()}; "
            "smooth the inputs if a class is legitimately absent"
        )
    return np.sqrt(1.0 / f)


@dataclass
class BackboneParams:
    """Linear pixel classifier: 4 rows of s*s window weights plus a bias.

    ``theta`` has shape (4, window**2 + 1); the last column is the bias.
    """

    window: int
    theta: np.ndarray

    def __post_init__(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd, got {self.window}")
        expected = (NUM_CLASSES, self.window * self.window + 1)
        if self.theta.shape != expected:
            raise ValueError(f"theta must have shape {expected}, got {self.theta.shape}")

    def copy(self) -> "BackboneParams":
        return BackboneParams(self.window, self.theta.copy())


def init_params(window: int = 7) -> BackboneParams:
    """Zero-initialized parameters (a valid start for a linear softmax)."""
    return BackboneParams(window, np.zeros((NUM_CLASSES, window * window + 1)))


def window_features(gray_patch: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel flattened clamped-window intensities, scaled to [0, 1].

    Returns (H*W, window**2) float64.  Border windows replicate the edge
    pixels, which is the clamped-indexing neighborhood.
    """
    gray = ensure_gray(gray_patch)
    r = window // 2
    padded = np.pad(gray, r, mode="edge")
    view = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
    return view.reshape(gray.size, window * window).astype(np.float64) / 255.0


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: BackboneParams, gray_patch: np.ndarray) -> np.ndarray:
    """Per-pixel class probabilities, shape (H, W, 4)."""
    gray = ensure_gray(gray_patch)
    x = window_features(gray, params.window)
    probs = softmax_rows(x @ params.theta[:, :-1].T + params.theta[:, -1])
    return probs.reshape(gray.shape + (NUM_CLASSES,))


def weighted_ce_loss(probs: np.ndarray, gt: np.ndarray, weights: np.ndarray):
    """Class-weighted cross-entropy, averaged over pixels.

    Returns the scalar loss and its gradient with respect to the logits,
    shape (H, W, 4):  (w_y / N) * (p - onehot(y)) per pixel.  The predicted
    probability of the true class is floored at LOG_PROB_FLOOR before the log.
    """
    gt = ensure_labels(gt)
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != gt.shape + (NUM_CLASSES,):
        raise ValueError(f"probs shape {p.shape} does not match labels {gt.shape}")
    w = np.asarray(weights, dtype=np.float64)
    flat_p = p.reshape(-1, NUM_CLASSES)
    y = gt.ravel()
    n = y.size
    idx = np.arange(n)
    py = np.clip(flat_p[idx, y], LOG_PROB_FLOOR, None)
    wy = w[y]
    loss = float(np.mean(wy * -np.log(py)))
    grad = flat_p * (wy / n)[:, None]
    grad[idx, y] -= wy / n
    return loss, grad.reshape(p.shape)


def param_gradient(gray_patch: np.ndarray, grad_logits: np.ndarray,
                   window: int) -> np.ndarray:
    """Gradient of the loss with respect to theta, shape (4, window**2 + 1)."""
    x = window_features(gray_patch, window)
    g = np.asarray(grad_logits, dtype=np.float64).reshape(-1, NUM_CLASSES)
    out = np.empty((NUM_CLASSES, window * window + 1))
    out[:, :-1] = g.T @ x
    out[:, -1] = g.sum(axis=0)
    return out


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(shape) -> AdamState:
    return AdamState(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float, weight_decay: float = 0.0):
    """One bias-corrected Adam update; returns (new params, new state).

    Weight decay enters as an additive decay * params term folded into the
    gradient before the moment updates.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and state shapes must agree")
    g = grads + weight_decay * params
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m=m, v=v, step=step, beta1=state.beta1,
                                 beta2=state.beta2, eps=state.eps)


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings; defaults follow the standard recipe."""

    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 200
    early_stop_start: int = 50
    patience: int = 20
    crops_per_image: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.patience < 1 or self.early_stop_start < 0:
            raise ValueError("bad schedule settings")
        if self.crops_per_image < 0:
            raise ValueError("crops_per_image must be >= 0")


def should_stop(epoch: int, best_epoch: int, start: int, patience: int) -> bool:
    """True once ``epoch`` reached ``start`` and no improvement for ``patience`` epochs."""
    if best_epoch > epoch:
        raise ValueError("best_epoch cannot lie in the future")
    return epoch >= start and epoch - best_epoch >= patience


def train(images, gts, cfg: TrainConfig, patch_side: int, window: int = 7,
          weights: np.ndarray | None = None):
    """Train the reference backbone on full pages.

    ``images`` are grayscale pages whose dimensions are multiples of
    ``patch_side``; ``gts`` are the aligned label maps.  Each epoch trains on
    every baseline patch plus ``cfg.crops_per_image`` fresh random crops per
    page, in a seeded shuffled order.  The early-stop metric is the epoch mean
    of the baseline-patch training losses (the stable subset); the parameters
    returned are the snapshot from the best epoch.

    Returns (BackboneParams, log) where ``log`` is a list of dicts, one per
    epoch plus a leading config record (ready to dump as JSON lines).
    """
    images = [ensure_gray(im) for im in images]
    gts = [ensure_labels(gt) for gt in gts]
    if len(images) != len(gts) or not images:
        raise ValueError("need equally many images and ground-truth maps")
    for im, gt in zip(images, gts):
        if im.shape != gt.shape:
            raise ValueError(f"image {im.shape} and labels {gt.shape} differ")

    if weights is None:
        weights = class_weights(class_frequencies(gts))
    weights = np.asarray(weights, dtype=np.float64)

    baseline_sets = [
        tile(im.shape[1], im.shape[0], patch_side, image_id=str(i))
        for i, im in enumerate(images)
    ]
    n_baseline = sum(len(ps.specs) for ps in baseline_sets)

    params = init_params(window)
    state = adam_init(params.theta.shape)
    best_loss = np.inf
    best_epoch = 0
    best_theta = params.theta.copy()
    log: list[dict] = [{
        "event": "config",
        "learning_rate": cfg.learning_rate,
        "weight_decay": cfg.weight_decay,
        "max_epochs": cfg.max_epochs,
        "early_stop_start": cfg.early_stop_start,
        "patience": cfg.patience,
        "crops_per_image": cfg.crops_per_image,
        "seed": cfg.seed,
        "patch_side": patch_side,
        "window": window,
        "weight_frequency_convention": "fraction",
        "class_weights": [float(w) for w in weights],
    }]

    for epoch in range(1, cfg.max_epochs + 1):
        seeds = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(epoch,))
        instances = epoch_dataset(baseline_sets, images, gts,
                                  cfg.crops_per_image, seeds)
        shuffle_rng = np.random.Generator(np.random.PCG64(seeds.spawn(1)[0]))
        order = shuffle_rng.permutation(len(instances))

        baseline_losses = []
        for i in order:
            patch, gt_patch = instances[i]
            x = window_features(patch, window)
            probs = softmax_rows(x @ params.theta[:, :-1].T + params.theta[:, -1])
            loss, grad_logits = weighted_ce_loss(
                probs.reshape(gt_patch.shape + (NUM_CLASSES,)), gt_patch, weights
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            g = grad_logits.reshape(-1, NUM_CLASSES)
            grad_theta = np.empty_like(params.theta)
            grad_theta[:, :-1] = g.T @ x
            grad_theta[:, -1] = g.sum(axis=0)
            params.theta, state = adam_step(
                params.theta, grad_theta, state, cfg.learning_rate, cfg.weight_decay
            )
            if i < n_baseline:
                baseline_losses.append(loss)

        epoch_loss = float(np.mean(baseline_losses))
        improved = epoch_loss < best_loss
        if improved:
            best_loss = epoch_loss
            best_epoch = epoch
            best_theta = params.theta.copy()
        stop = should_stop(epoch, best_epoch, cfg.early_stop_start, cfg.patience)
        log.append({
            "event": "epoch",
            "epoch": epoch,
            "loss": epoch_loss,
            "lr": cfg.learning_rate,
            "n_baseline": n_baseline,
            "n_dynamic": len(instances) - n_baseline,
            "improved": improved,
            "stopped": stop,
        })
        if stop:
            break

    return BackboneParams(window, best_theta), log


def write_log(path, log) -> None:
    """Dump a training log as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")


# --------------------------------------------------------------------------
# Parameter serialization
# --------------------------------------------------------------------------

def save_params(path, params: BackboneParams) -> None:
    """Write parameters: magic, window (u32), class count (u32), then
    little-endian float64 theta in row-major order."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", params.window, NUM_CLASSES))
        fh.write(np.ascontiguousarray(params.theta, dtype="<f8").tobytes())


def load_params(path) -> BackboneParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ModelFileError(f"{path}: bad magic bytes, not a model file")
    try:
        window, n_classes = struct.unpack_from("<II", blob, len(_MAGIC))
    except struct.error as exc:
        raise ModelFileError(f"{path}: truncated header") from exc
    if n_classes != NUM_CLASSES:
        raise ModelFileError(f"{path}: expected {NUM_CLASSES} classes, got {n_classes}")
    body = blob[len(_MAGIC) + 8:]
    expected = NUM_CLASSES * (window * window + 1) * 8
    if len(body) != expected:
        raise ModelFileError(f"{path}: expected {expected} payload bytes, got {len(body)}")
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(
        NUM_CLASSES, window * window + 1
    )
    return BackboneParams(int(window), theta)
