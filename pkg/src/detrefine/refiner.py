"""Crop-resize classification refinement.

ROIs are cropped straight off the source image (context outside the box is
never sampled), bilinearly resized to a fixed grid, normalized by
statistics frozen at training time, and classified over background + K
classes by a linear softmax model trained with momentum SGD on mined
minibatches. At test time the classifier's probability for a detection's
class multiplies the base score; boxes and labels are never modified.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, Detection, EmptyCropError, Image, clamp_to_image
from .miner import SampleManifest
from .rng import substream


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class CropConfig:
    roi_size: int = 32
    channel_mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    channel_std: tuple[float, float, float] = (1.0, 1.0, 1.0)
    interpolation: str = "bilinear"

    def __post_init__(self) -> None:
        if self.roi_size < 8:
            raise ValueError(f"roi_size must be >= 8, got {self.roi_size}")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        if any(s <= 0 for s in self.channel_std):
            raise ValueError("channel_std entries must be positive")


@dataclass(frozen=True)
class FeatureSpec:
    crop: CropConfig = CropConfig()
    projection_dim: int | None = None
    projection_seed: int = 0

    @property
    def feature_dim(self) -> int:
        flat = 3 * self.crop.roi_size**2
        return self.projection_dim if self.projection_dim is not None else flat


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 20
    lr_drop_fraction: float = 0.69
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 < self.lr_drop_fraction <= 1.0:
            raise ValueError("lr_drop_fraction must lie in (0, 1]")

    def config_hash(self) -> str:
        doc = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrainingInfo:
    config_hash: str
    epochs: int
    final_loss: float | None  # None when no step ran


@dataclass(frozen=True, eq=False)
class RefinerModel:
    class_count: int  # K; the model scores K+1 classes including background
    feature: FeatureSpec
    weights: np.ndarray  # (feature_dim + 1, K + 1), last row is the bias
    training: TrainingInfo | None = None

    def __post_init__(self) -> None:
        expected = (self.feature.feature_dim + 1, self.class_count + 1)
        if self.weights.shape != expected:
            raise ValueError(f"weights shape {self.weights.shape}, expected {expected}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")


@dataclass(frozen=True)
class IdentitySurrogate:
    """Stand-in model whose probabilities are all ones: fusion becomes a no-op."""

    class_count: int


def bilinear_resize(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (h, w, c) array with half-pixel-center bilinear sampling."""
    h, w = grid.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x1] * fx
    bottom = grid[y1][:, x0] * (1 - fx) + grid[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def crop_resize(image: Image, bbox: BoundingBox, cfg: CropConfig) -> np.ndarray:
    """Crop the box's pixel window, resize to S x S, scale to [0,1], normalize.

    The window is the integer pixel range touched by the clamped box, so the
    classifier never sees context outside the region.
    """
    clamped = clamp_to_image(bbox, image.width, image.height)
    if clamped.area() <= 0.0:
        raise EmptyCropError(
            f"empty crop: zero-area region ({clamped.x_min}, {clamped.y_min}, "
            f"{clamped.x_max}, {clamped.y_max})"
        )
    x0 = int(math.floor(clamped.x_min))
    y0 = int(math.floor(clamped.y_min))
    x1 = int(math.ceil(clamped.x_max))
    y1 = int(math.ceil(clamped.y_max))
    window = image.pixels[y0:y1, x0:x1].astype(np.float64) / 255.0
    s = cfg.roi_size
    resized = bilinear_resize(window, s, s)
    mean = np.asarray(cfg.channel_mean, dtype=np.float64)
    std = np.asarray(cfg.channel_std, dtype=np.float64)
    return (resized - mean) / std


@functools.lru_cache(maxsize=8)
def _projection_matrix(dim_in: int, dim_out: int, seed: int) -> np.ndarray:
    rng = substream(seed, 0)
    return rng.standard_normal((dim_in, dim_out)) / np.sqrt(dim_out)


def extract_features(crop: np.ndarray, feature: FeatureSpec) -> np.ndarray:
    """Flatten a crop, optionally through the model's fixed random projection."""
    s = feature.crop.roi_size
    if crop.shape != (s, s, 3):
        raise ValueError(f"crop shape {crop.shape} does not match expected {(s, s, 3)}")
    flat = crop.reshape(-1)
    if feature.projection_dim is None:
        return flat
    proj = _projection_matrix(flat.size, feature.projection_dim, feature.projection_seed)
    return flat @ proj


def loss_and_grad(
    weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weight_decay: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy with L2 decay on everything but the bias row.

    features is (n, feature_dim); weights is (feature_dim + 1, n_classes).
    Returns the mean loss and the gradient with respect to weights.
    """
    n = features.shape[0]
    # overflow here is a divergence signal handled by the caller, not a bug
    with np.errstate(over="ignore", invalid="ignore"):
        logits = features @ weights[:-1] + weights[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        probs = np.exp(shifted - log_z[:, None])
        data_loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
        loss = data_loss + 0.5 * weight_decay * float(np.sum(weights[:-1] ** 2))

        delta = probs
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        grad = np.empty_like(weights)
        grad[:-1] = features.T @ delta + weight_decay * weights[:-1]
        grad[-1] = delta.sum(axis=0)
    return loss, grad


def train_refiner(
    images: Sequence[Image],
    manifest: SampleManifest,
    cfg: TrainConfig,
    feature: FeatureSpec | None = None,
    class_count: int | None = None,
) -> RefinerModel:
    """Fit the classifier on mined minibatches; the base detector is frozen.

    Crop normalization statistics are computed once over the unique training
    ROIs and frozen into the returned model. Minibatches run in manifest
    order for `epochs` passes; the learning rate drops by 10x after the
    configured fraction of total steps. Nothing propagates back to the
    detections being refined.
    """
    if feature is None:
        feature = FeatureSpec()
    by_id = {im.id: im for im in images}
    entries = [e for batch in manifest.batches for e in batch]
    labels_seen = {e.assigned_label for e in entries}
    k = class_count if class_count is not None else max(labels_seen, default=0)
    if any(lab < 0 or lab > k for lab in labels_seen):
        raise ValueError(f"manifest labels must lie in [0, {k}]")

    # one raw crop per distinct ROI; manifests repeat ROIs freely
    unique: dict[tuple[str, BoundingBox], int] = {}
    raw_crops: list[np.ndarray] = []
    plain = CropConfig(roi_size=feature.crop.roi_size)
    for e in entries:
        key = (e.image_id, e.bbox)
        if key in unique:
            continue
        if e.image_id not in by_id:
            raise ValueError(f"missing image {e.image_id}")
        unique[key] = len(raw_crops)
        raw_crops.append(crop_resize(by_id[e.image_id], e.bbox, plain))

    if raw_crops:
        stacked = np.stack(raw_crops)
        mean = stacked.mean(axis=(0, 1, 2))
        std = np.maximum(stacked.std(axis=(0, 1, 2)), 1e-6)
    else:
        mean = np.zeros(3)
        std = np.ones(3)
    frozen = FeatureSpec(
        crop=CropConfig(
            roi_size=feature.crop.roi_size,
            channel_mean=tuple(float(v) for v in mean),
            channel_std=tuple(float(v) for v in std),
        ),
        projection_dim=feature.projection_dim,
        projection_seed=feature.projection_seed
        if feature.projection_dim is not None
        else 0,
    )
    feats = (
        np.stack(
            [
                extract_features((c - mean) / std, frozen)
                for c in raw_crops
            ]
        )
        if raw_crops
        else np.zeros((0, frozen.feature_dim))
    )

    weights = np.zeros((frozen.feature_dim + 1, k + 1))
    velocity = np.zeros_like(weights)
    n_batches = len(manifest.batches)
    total_steps = cfg.epochs * n_batches
    drop_after = cfg.lr_drop_fraction * total_steps
    step = 0
    final_loss = None
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for bi, batch in enumerate(manifest.batches):
            idx = np.array([unique[(e.image_id, e.bbox)] for e in batch])
            y = np.array([e.assigned_label for e in batch])
            loss, grad = loss_and_grad(weights, feats[idx], y, cfg.weight_decay)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"diverged: non-finite loss at epoch {epoch}, batch {bi}"
                )
            lr = cfg.learning_rate if step < drop_after else cfg.learning_rate / 10.0
            velocity = cfg.momentum * velocity + grad
            weights = weights - lr * velocity
            epoch_loss += loss
            step += 1
        if n_batches:
            final_loss = epoch_loss / n_batches
    return RefinerModel(
        class_count=k,
        feature=frozen,
        weights=weights,
        training=TrainingInfo(cfg.config_hash(), cfg.epochs, final_loss),
    )


def predict(
    model: RefinerModel | IdentitySurrogate, image: Image, bbox: BoundingBox
) -> np.ndarray:
    """Class probabilities over background + K classes for one region."""
    if isinstance(model, IdentitySurrogate):
        return np.ones(model.class_count + 1)
    crop = crop_resize(image, bbox, model.feature.crop)
    z = extract_features(crop, model.feature) @ model.weights[:-1] + model.weights[-1]
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def fuse_scores(det: Detection, probs: np.ndarray) -> Detection:
    """Multiply the base score by the refiner's probability for the class.

    The box and label are untouched and nothing is renormalized; ranking
    metrics are scale-free.
    """
    if det.class_id >= len(probs):
        raise ValueError(
            f"class {det.class_id} outside refiner's {len(probs) - 1} classes"
        )
    return Detection(
        det.image_id, det.class_id, det.score * float(probs[det.class_id]), det.bbox
    )


def refine_detections(
    model: RefinerModel | IdentitySurrogate,
    images: Sequence[Image],
    dets: Sequence[Detection],
) -> list[Detection]:
    """Fuse refiner probabilities into every detection, preserving order."""
    by_id = {im.id: im for im in images}
    out = []
    for d in dets:
        if d.image_id not in by_id:
            raise ValueError(f"missing image {d.image_id}")
        out.append(fuse_scores(d, predict(model, by_id[d.image_id], d.bbox)))
    return out
