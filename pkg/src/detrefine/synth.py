"""Synthetic detection scenes and a simulated base detector.

Scenes contain up to three shape classes (1 rectangle, 2 disc, 3 triangle)
with per-class color ranges on a noisy gray background. The simulator
emits jittered true positives plus three controlled false-positive modes:

  partial     same class, box covering part of an object, IoU in [0.1, 0.5)
  confusion   well-located box (IoU >= 0.5) carrying a wrong similar class
  background  box with IoU < 0.1 against every object

Everything is keyed by per-image Philox substreams, so a (config, seed)
pair reproduces bit-identically.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, Detection, GroundTruthObject, Image, iou
from .rng import substream

SHAPE_NAMES = ("rectangle", "disc", "triangle")

_DEFAULT_COLORS = (
    ((170, 255), (10, 80), (10, 80)),   # rectangles: red-dominant
    ((10, 80), (170, 255), (10, 80)),   # discs: green-dominant
    ((10, 80), (10, 80), (170, 255)),   # triangles: blue-dominant
)

_BACKGROUND_BASE = 110
_MAX_PLACEMENT_IOU = 0.3
_PLACEMENT_RETRIES = 60
_GEOMETRY_RETRIES = 60


class SceneTooCrowdedError(RuntimeError):
    """Raised when an object cannot be placed after bounded retries."""


@dataclass(frozen=True)
class SceneConfig:
    width: int = 96
    height: int = 96
    class_count: int = 3
    objects_per_image: tuple[int, int] = (1, 4)
    object_size: tuple[float, float] = (14.0, 34.0)
    noise_amplitude: int = 12
    image_count: int = 20
    seed: int = 0
    class_colors: tuple = _DEFAULT_COLORS

    def __post_init__(self) -> None:
        if not 1 <= self.class_count <= 3:
            raise ValueError(f"class_count must be in [1, 3], got {self.class_count}")
        if self.width < 8 or self.height < 8:
            raise ValueError("image extent too small")
        lo, hi = self.objects_per_image
        if lo < 0 or hi < lo:
            raise ValueError(f"bad objects_per_image range {self.objects_per_image}")
        slo, shi = self.object_size
        if slo <= 0 or shi < slo or shi > min(self.width, self.height):
            raise ValueError(f"bad object_size range {self.object_size}")
        if self.noise_amplitude < 0 or self.noise_amplitude > 127:
            raise ValueError(f"bad noise_amplitude {self.noise_amplitude}")
        if self.image_count < 0:
            raise ValueError("image_count must be >= 0")
        if len(self.class_colors) < self.class_count:
            raise ValueError("need a color range per class")


@dataclass(frozen=True)
class ErrorModeConfig:
    tp_rate: float = 0.85
    jitter: float = 0.12
    rate_partial: float = 0.20
    rate_confusion: float = 0.20
    rate_background: float = 0.35
    background_cell: int = 48
    class_count: int = 3
    score_tp: tuple[float, float] = (7.0, 2.0)
    score_partial: tuple[float, float] = (2.0, 3.5)
    score_confusion: tuple[float, float] = (2.0, 3.5)
    score_background: tuple[float, float] = (2.0, 4.0)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("tp_rate", "rate_partial", "rate_confusion", "rate_background"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.jitter < 0 or self.jitter >= 0.5:
            raise ValueError(f"jitter must lie in [0, 0.5), got {self.jitter}")
        if self.background_cell < 4:
            raise ValueError("background_cell too small")
        if self.class_count < 1:
            raise ValueError("class_count must be >= 1")
        for name in ("score_tp", "score_partial", "score_confusion", "score_background"):
            a, b = getattr(self, name)
            if a <= 0 or b <= 0:
                raise ValueError(f"{name} must be positive beta parameters")


@dataclass(frozen=True)
class SimulationResult:
    detections: tuple[Detection, ...]
    intended: tuple[str, ...]  # one of tp / partial / confusion / background
    skipped: dict = field(default_factory=dict)  # type -> dropped constructions


def _rasterize(pixels: np.ndarray, class_id: int, box: BoundingBox, color: np.ndarray) -> None:
    h, w, _ = pixels.shape
    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5
    cx, cy = np.meshgrid(px, py)
    x0, y0, x1, y1 = box.x_min, box.y_min, box.x_max, box.y_max
    if class_id == 1:  # rectangle fills its box
        mask = (cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1)
    elif class_id == 2:  # inscribed disc
        r = (x1 - x0) / 2.0
        mask = (cx - (x0 + r)) ** 2 + (cy - (y0 + r)) ** 2 <= r * r
    else:  # triangle: apex top-center, base along the bottom edge
        ax, ay = (x0 + x1) / 2.0, y0
        bx, by = x0, y1
        tx, ty = x1, y1
        d1 = (cx - ax) * (by - ay) - (cy - ay) * (bx - ax)
        d2 = (cx - bx) * (ty - by) - (cy - by) * (tx - bx)
        d3 = (cx - tx) * (ay - ty) - (cy - ty) * (ax - tx)
        mask = ((d1 <= 0) & (d2 <= 0) & (d3 <= 0)) | ((d1 >= 0) & (d2 >= 0) & (d3 >= 0))
    pixels[mask] = color


def gen_dataset(cfg: SceneConfig) -> tuple[list[Image], list[GroundTruthObject]]:
    """Generate seeded scenes; every ground-truth box tightly bounds its shape."""
    images: list[Image] = []
    gts: list[GroundTruthObject] = []
    for i in range(cfg.image_count):
        rng = substream(cfg.seed, i)
        image_id = f"img_{i:05d}"
        noise = rng.integers(
            -cfg.noise_amplitude, cfg.noise_amplitude + 1, size=(cfg.height, cfg.width, 3)
        )
        pixels = np.clip(_BACKGROUND_BASE + noise, 0, 255).astype(np.uint8)

        n_objects = int(rng.integers(cfg.objects_per_image[0], cfg.objects_per_image[1] + 1))
        placed: list[BoundingBox] = []
        for _ in range(n_objects):
            class_id = int(rng.integers(1, cfg.class_count + 1))
            size = float(rng.uniform(cfg.object_size[0], cfg.object_size[1]))
            ranges = cfg.class_colors[class_id - 1]
            color = np.array(
                [int(rng.integers(lo, hi + 1)) for lo, hi in ranges], dtype=np.uint8
            )
            box = None
            for _ in range(_PLACEMENT_RETRIES):
                x = float(rng.uniform(0.0, cfg.width - size))
                y = float(rng.uniform(0.0, cfg.height - size))
                cand = BoundingBox(x, y, x + size, y + size)
                if all(iou(cand, p) < _MAX_PLACEMENT_IOU for p in placed):
                    box = cand
                    break
            if box is None:
                raise SceneTooCrowdedError(
                    f"scene too crowded: could not place object {len(placed) + 1} "
                    f"of {n_objects} in image {image_id}"
                )
            placed.append(box)
            _rasterize(pixels, class_id, box, color)
            gts.append(GroundTruthObject(image_id, class_id, box))
        images.append(Image(image_id, cfg.width, cfg.height, pixels))
    return images, gts


def _jittered_box(rng: np.random.Generator, box: BoundingBox, jitter: float) -> BoundingBox:
    """Random corner jitter, rejected until IoU with the source stays >= 0.5."""
    if jitter == 0.0:
        return box
    w, h = box.width, box.height
    for _ in range(_GEOMETRY_RETRIES):
        dx1, dy1, dx2, dy2 = rng.uniform(-jitter, jitter, size=4) * (w, h, w, h)
        x1, y1 = box.x_min + dx1, box.y_min + dy1
        x2, y2 = box.x_max + dx2, box.y_max + dy2
        if x2 <= x1 or y2 <= y1:
            continue
        cand = BoundingBox(x1, y1, x2, y2)
        if iou(cand, box) >= 0.5:
            return cand
    return box


def _max_iou_vs(box: BoundingBox, others: Sequence[GroundTruthObject]) -> float:
    return max((iou(box, g.bbox) for g in others), default=0.0)


def simulate_detailed(
    gts: Sequence[GroundTruthObject],
    images: Sequence[Image],
    cfg: ErrorModeConfig,
) -> SimulationResult:
    """Simulate a base detector over the scenes, tagging each detection's mode."""
    by_image: dict[str, list[GroundTruthObject]] = {g.image_id: [] for g in gts}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g)

    detections: list[Detection] = []
    intended: list[str] = []
    skipped: Counter = Counter()
    for index, image in enumerate(images):
        rng = substream(cfg.seed, index)
        in_image = by_image.get(image.id, [])
        for g in in_image:
            # true positive
            if rng.uniform() < cfg.tp_rate:
                box = _jittered_box(rng, g.bbox, cfg.jitter)
                score = float(rng.beta(*cfg.score_tp))
                detections.append(Detection(image.id, g.class_id, score, box))
                intended.append("tp")
            # partial-coverage false positive, same class
            if rng.uniform() < cfg.rate_partial:
                box = _construct_partial(rng, g, in_image)
                if box is None:
                    skipped["partial"] += 1
                else:
                    score = float(rng.beta(*cfg.score_partial))
                    detections.append(Detection(image.id, g.class_id, score, box))
                    intended.append("partial")
            # class-confusion false positive
            if cfg.class_count >= 2 and rng.uniform() < cfg.rate_confusion:
                made = _construct_confusion(rng, g, in_image, cfg)
                if made is None:
                    skipped["confusion"] += 1
                else:
                    box, wrong_class = made
                    score = float(rng.beta(*cfg.score_confusion))
                    detections.append(Detection(image.id, wrong_class, score, box))
                    intended.append("confusion")
        # confident-background false positives, one Bernoulli per grid cell
        for cy in range(0, image.height, cfg.background_cell):
            for cx in range(0, image.width, cfg.background_cell):
                if rng.uniform() >= cfg.rate_background:
                    continue
                box = _construct_background(rng, image, (cx, cy), cfg, in_image)
                if box is None:
                    skipped["background"] += 1
                else:
                    wrong_class = int(rng.integers(1, cfg.class_count + 1))
                    score = float(rng.beta(*cfg.score_background))
                    detections.append(Detection(image.id, wrong_class, score, box))
                    intended.append("background")
    return SimulationResult(tuple(detections), tuple(intended), dict(skipped))


def simulate_base_detector(
    gts: Sequence[GroundTruthObject],
    images: Sequence[Image],
    cfg: ErrorModeConfig,
) -> list[Detection]:
    return list(simulate_detailed(gts, images, cfg).detections)


def _construct_partial(
    rng: np.random.Generator,
    g: GroundTruthObject,
    in_image: Sequence[GroundTruthObject],
) -> BoundingBox | None:
    """Same-size box shifted off the object so same-class overlap is [0.1, 0.5)."""
    same_class = [o for o in in_image if o.class_id == g.class_id]
    w, h = g.bbox.width, g.bbox.height
    for _ in range(_GEOMETRY_RETRIES):
        target = float(rng.uniform(0.15, 0.45))
        shift = (1.0 - target) / (1.0 + target)
        axis = int(rng.integers(0, 2))
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        dx = sign * shift * w if axis == 0 else 0.0
        dy = sign * shift * h if axis == 1 else 0.0
        cand = BoundingBox(
            g.bbox.x_min + dx, g.bbox.y_min + dy, g.bbox.x_max + dx, g.bbox.y_max + dy
        )
        if 0.1 <= _max_iou_vs(cand, same_class) < 0.5:
            return cand
    return None


def _construct_confusion(
    rng: np.random.Generator,
    g: GroundTruthObject,
    in_image: Sequence[GroundTruthObject],
    cfg: ErrorModeConfig,
) -> tuple[BoundingBox, int] | None:
    """Well-located box (IoU >= 0.5 with the object) labeled a different class.

    The label's own class must have overlap < 0.1 everywhere so the
    detection stays a confusion error rather than a match or a
    localization error.
    """
    others = [c for c in range(1, cfg.class_count + 1) if c != g.class_id]
    for _ in range(_GEOMETRY_RETRIES):
        wrong = int(others[rng.integers(0, len(others))])
        box = _jittered_box(rng, g.bbox, cfg.jitter)
        wrong_gts = [o for o in in_image if o.class_id == wrong]
        if _max_iou_vs(box, wrong_gts) < 0.1:
            return box, wrong
    return None


def _construct_background(
    rng: np.random.Generator,
    image: Image,
    cell: tuple[int, int],
    cfg: ErrorModeConfig,
    in_image: Sequence[GroundTruthObject],
) -> BoundingBox | None:
    """Box anchored in a grid cell with IoU < 0.1 against every object."""
    sides = [o.bbox.width for o in in_image]
    typical = float(np.median(sides)) if sides else min(image.width, image.height) / 4.0
    cx0, cy0 = cell
    for _ in range(_GEOMETRY_RETRIES):
        side = typical * float(rng.uniform(0.6, 1.2))
        side = min(side, image.width - 1.0, image.height - 1.0)
        ccx = float(rng.uniform(cx0, min(cx0 + cfg.background_cell, image.width)))
        ccy = float(rng.uniform(cy0, min(cy0 + cfg.background_cell, image.height)))
        x0 = min(max(ccx - side / 2.0, 0.0), image.width - side)
        y0 = min(max(ccy - side / 2.0, 0.0), image.height - side)
        cand = BoundingBox(x0, y0, x0 + side, y0 + side)
        if _max_iou_vs(cand, in_image) < 0.1:
            return cand
    return None
