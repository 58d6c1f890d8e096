"""On-disk formats: JSON documents for datasets, detections, manifests,
models, and reports, plus binary PPM images.

All floating-point output is serialized at 17 significant digits, which
round-trips IEEE doubles exactly, and documents are emitted by a canonical
writer so identical values produce identical bytes. Validation errors name
the JSON path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .geometry import BoundingBox, Detection, GroundTruthObject, Image
from .miner import Heuristic, ManifestEntry, ROICategory, SampleManifest, SamplerConfig
from .refiner import CropConfig, FeatureSpec, RefinerModel, TrainingInfo

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """A document violates its schema; the message names the JSON path."""


# --- canonical JSON -----------------------------------------------------


def format_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    text = format(float(x), ".17g")
    # keep a uniform float/int distinction in the output
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def _emit(value: Any, out: list[str], level: int) -> None:
    pad = "  " * level
    inner = "  " * (level + 1)
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        out.append(format_float(float(value)))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(value.items()):
            out.append(f"{inner}{json.dumps(str(k))}: ")
            _emit(v, out, level + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(value):
            out.append(inner)
            _emit(v, out, level + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def canonical_json(doc: Any) -> str:
    out: list[str] = []
    _emit(doc, out, 0)
    out.append("\n")
    return "".join(out)


def write_json(path: str | Path, doc: Any) -> None:
    Path(path).write_text(canonical_json(doc), encoding="utf-8")


def read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"$: not valid JSON ({e})") from e


# --- validation helpers -------------------------------------------------


def _need(doc: dict, path: str, key: str, kinds, what: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}: missing ({what})")
    value = doc[key]
    if kinds is not None:
        bad = not isinstance(value, kinds)
        # bool is an int subclass in Python but not in the schema
        if isinstance(value, bool) and kinds is not bool:
            bad = True
        if bad:
            raise SchemaError(f"{path}.{key}: expected {what}")
    return value


def _need_number(doc: dict, path: str, key: str) -> float:
    v = _need(doc, path, key, (int, float), "a number")
    if isinstance(v, bool):
        raise SchemaError(f"{path}.{key}: expected a number")
    return float(v)


def _check_version(doc: dict, path: str = "$") -> None:
    v = _need(doc, path, "version", int, "an integer version")
    if v != FORMAT_VERSION:
        raise SchemaError(f"{path}.version: unsupported version {v}")


def _parse_bbox(raw: Any, path: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SchemaError(f"{path}: expected bbox [x, y, w, h]")
    x, y, w, h = raw
    for i, v in enumerate(raw):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SchemaError(f"{path}[{i}]: expected a number")
    if w < 0 or h < 0:
        raise SchemaError(f"{path}: width and height must be >= 0")
    try:
        return BoundingBox.from_xywh((x, y, w, h))
    except ValueError as e:
        raise SchemaError(f"{path}: {e}") from e


# --- dataset file -------------------------------------------------------


@dataclass(frozen=True)
class ImageMeta:
    id: str
    file: str
    width: int
    height: int


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    classes: dict[int, str]
    images: tuple[ImageMeta, ...]
    ground_truth: tuple[GroundTruthObject, ...]

    def load_images(self) -> list[Image]:
        out = []
        for meta in self.images:
            pixels = read_ppm(self.root / meta.file)
            if pixels.shape != (meta.height, meta.width, 3):
                raise SchemaError(
                    f"$.images[id={meta.id}]: pixel file {meta.file} is "
                    f"{pixels.shape[1]}x{pixels.shape[0]}, metadata says "
                    f"{meta.width}x{meta.height}"
                )
            out.append(Image(meta.id, meta.width, meta.height, pixels))
        return out


def save_dataset(
    path: str | Path,
    classes: dict[int, str],
    images: Sequence[ImageMeta],
    gts: Sequence[GroundTruthObject],
) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "classes": [{"id": i, "name": n} for i, n in sorted(classes.items())],
        "images": [
            {"id": m.id, "file": m.file, "width": m.width, "height": m.height}
            for m in images
        ],
        "annotations": [
            {
                "image_id": g.image_id,
                "class_id": g.class_id,
                "bbox": [float(v) for v in g.bbox.as_xywh()],
                "difficult": g.difficult,
            }
            for g in gts
        ],
    }
    write_json(path, doc)


def load_dataset(path: str | Path) -> DatasetIndex:
    path = Path(path)
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: expected an object")
    _check_version(doc)

    classes: dict[int, str] = {}
    for i, c in enumerate(_need(doc, "$", "classes", list, "a list")):
        p = f"$.classes[{i}]"
        if not isinstance(c, dict):
            raise SchemaError(f"{p}: expected an object")
        cid = _need(c, p, "id", int, "an integer class id")
        if cid < 1:
            raise SchemaError(f"{p}.id: class ids start at 1 (0 is background)")
        if cid in classes:
            raise SchemaError(f"{p}.id: duplicate class id {cid}")
        classes[cid] = _need(c, p, "name", str, "a string")

    images: list[ImageMeta] = []
    seen_ids: set[str] = set()
    for i, m in enumerate(_need(doc, "$", "images", list, "a list")):
        p = f"$.images[{i}]"
        if not isinstance(m, dict):
            raise SchemaError(f"{p}: expected an object")
        image_id = _need(m, p, "id", str, "a string image id")
        if image_id in seen_ids:
            raise SchemaError(f"{p}.id: duplicate image id {image_id!r}")
        seen_ids.add(image_id)
        width = _need(m, p, "width", int, "an integer")
        height = _need(m, p, "height", int, "an integer")
        if width < 1 or height < 1:
            raise SchemaError(f"{p}: width and height must be >= 1")
        images.append(ImageMeta(image_id, _need(m, p, "file", str, "a string"), width, height))

    gts: list[GroundTruthObject] = []
    for i, a in enumerate(_need(doc, "$", "annotations", list, "a list")):
        p = f"$.annotations[{i}]"
        if not isinstance(a, dict):
            raise SchemaError(f"{p}: expected an object")
        image_id = _need(a, p, "image_id", str, "a string")
        if image_id not in seen_ids:
            raise SchemaError(f"{p}.image_id: unknown image {image_id!r}")
        cid = _need(a, p, "class_id", int, "an integer")
        if cid not in classes:
            raise SchemaError(f"{p}.class_id: unknown class {cid}")
        bbox = _parse_bbox(_need(a, p, "bbox", list, "a list"), f"{p}.bbox")
        difficult = a.get("difficult", False)
        if not isinstance(difficult, bool):
            raise SchemaError(f"{p}.difficult: expected a boolean")
        gts.append(GroundTruthObject(image_id, cid, bbox, difficult))
    return DatasetIndex(path.parent, classes, tuple(images), tuple(gts))


# --- detections file ----------------------------------------------------


def save_detections(path: str | Path, dets: Sequence[Detection]) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "detections": [
            {
                "image_id": d.image_id,
                "class_id": d.class_id,
                "score": d.score,
                "bbox": [float(v) for v in d.bbox.as_xywh()],
            }
            for d in dets
        ],
    }
    write_json(path, doc)


def load_detections(path: str | Path) -> list[Detection]:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: expected an object")
    _check_version(doc)
    dets = []
    for i, d in enumerate(_need(doc, "$", "detections", list, "a list")):
        p = f"$.detections[{i}]"
        if not isinstance(d, dict):
            raise SchemaError(f"{p}: expected an object")
        score = _need_number(d, p, "score")
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{p}.score: must lie in [0, 1], got {score}")
        cid = _need(d, p, "class_id", int, "an integer")
        if cid < 1:
            raise SchemaError(f"{p}.class_id: must be >= 1")
        dets.append(
            Detection(
                _need(d, p, "image_id", str, "a string"),
                cid,
                score,
                _parse_bbox(_need(d, p, "bbox", list, "a list"), f"{p}.bbox"),
            )
        )
    return dets


# --- sample manifest file -----------------------------------------------


def save_manifest(path: str | Path, manifest: SampleManifest) -> None:
    cfg = manifest.config
    doc = {
        "version": FORMAT_VERSION,
        "config": {
            "images_per_batch": cfg.images_per_batch,
            "rois_per_batch": cfg.rois_per_batch,
            "heuristic": cfg.heuristic.value,
            "fp_threshold": cfg.fp_threshold,
            "fg_iou": cfg.fg_iou,
            "seed": cfg.seed,
        },
        "batches": [
            [
                {
                    "image_id": e.image_id,
                    "bbox": [float(v) for v in e.bbox.as_xywh()],
                    "assigned_label": e.assigned_label,
                    "category": e.category.value,
                }
                for e in batch
            ]
            for batch in manifest.batches
        ],
    }
    write_json(path, doc)


def load_manifest(path: str | Path) -> SampleManifest:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: expected an object")
    _check_version(doc)
    c = _need(doc, "$", "config", dict, "an object")
    try:
        config = SamplerConfig(
            images_per_batch=_need(c, "$.config", "images_per_batch", int, "an integer"),
            rois_per_batch=_need(c, "$.config", "rois_per_batch", int, "an integer"),
            heuristic=Heuristic(_need(c, "$.config", "heuristic", str, "a string")),
            fp_threshold=_need_number(c, "$.config", "fp_threshold"),
            fg_iou=_need_number(c, "$.config", "fg_iou"),
            seed=_need(c, "$.config", "seed", int, "an integer"),
        )
    except ValueError as e:
        raise SchemaError(f"$.config: {e}") from e
    batches = []
    for bi, batch in enumerate(_need(doc, "$", "batches", list, "a list")):
        p = f"$.batches[{bi}]"
        if not isinstance(batch, list):
            raise SchemaError(f"{p}: expected a list")
        entries = []
        for ei, e in enumerate(batch):
            q = f"{p}[{ei}]"
            if not isinstance(e, dict):
                raise SchemaError(f"{q}: expected an object")
            label = _need(e, q, "assigned_label", int, "an integer")
            if label < 0:
                raise SchemaError(f"{q}.assigned_label: must be >= 0")
            try:
                category = ROICategory(_need(e, q, "category", str, "a string"))
            except ValueError as err:
                raise SchemaError(f"{q}.category: {err}") from err
            entries.append(
                ManifestEntry(
                    _need(e, q, "image_id", str, "a string"),
                    _parse_bbox(_need(e, q, "bbox", list, "a list"), f"{q}.bbox"),
                    label,
                    category,
                )
            )
        batches.append(tuple(entries))
    return SampleManifest(tuple(batches), config)


# --- model file ---------------------------------------------------------


def save_model(path: str | Path, model: RefinerModel) -> None:
    feature: dict[str, Any] = {}
    if model.feature.projection_dim is not None:
        feature["projection_dim"] = model.feature.projection_dim
        feature["projection_seed"] = model.feature.projection_seed
    feature["channel_mean"] = [float(v) for v in model.feature.crop.channel_mean]
    feature["channel_std"] = [float(v) for v in model.feature.crop.channel_std]
    doc = {
        "version": FORMAT_VERSION,
        "class_count": model.class_count,
        "roi_size": model.feature.crop.roi_size,
        "feature": feature,
        "weights": {
            "shape": list(model.weights.shape),
            "data": [float(v) for v in model.weights.ravel()],
        },
        "training": None
        if model.training is None
        else {
            "config_hash": model.training.config_hash,
            "epochs": model.training.epochs,
            "final_loss": model.training.final_loss,
        },
    }
    write_json(path, doc)


def load_model(path: str | Path) -> RefinerModel:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: expected an object")
    _check_version(doc)
    k = _need(doc, "$", "class_count", int, "an integer")
    s = _need(doc, "$", "roi_size", int, "an integer")
    f = _need(doc, "$", "feature", dict, "an object")
    mean = f.get("channel_mean", [0.0, 0.0, 0.0])
    std = f.get("channel_std", [1.0, 1.0, 1.0])
    for name, vec in (("channel_mean", mean), ("channel_std", std)):
        if not isinstance(vec, list) or len(vec) != 3:
            raise SchemaError(f"$.feature.{name}: expected 3 numbers")
    projection_dim = f.get("projection_dim")
    if projection_dim is not None and (not isinstance(projection_dim, int) or projection_dim < 1):
        raise SchemaError("$.feature.projection_dim: expected a positive integer")
    try:
        feature = FeatureSpec(
            crop=CropConfig(
                roi_size=s,
                channel_mean=tuple(float(v) for v in mean),
                channel_std=tuple(float(v) for v in std),
            ),
            projection_dim=projection_dim,
            projection_seed=int(f.get("projection_seed", 0)),
        )
    except ValueError as e:
        raise SchemaError(f"$.feature: {e}") from e
    w = _need(doc, "$", "weights", dict, "an object")
    shape = _need(w, "$.weights", "shape", list, "a list")
    data = _need(w, "$.weights", "data", list, "a list")
    if len(shape) != 2 or not all(isinstance(v, int) and v > 0 for v in shape):
        raise SchemaError("$.weights.shape: expected two positive integers")
    if len(data) != shape[0] * shape[1]:
        raise SchemaError(
            f"$.weights.data: expected {shape[0] * shape[1]} values, got {len(data)}"
        )
    weights = np.array(data, dtype=np.float64).reshape(shape)
    training = None
    t = doc.get("training")
    if t is not None:
        if not isinstance(t, dict):
            raise SchemaError("$.training: expected an object or null")
        loss = t.get("final_loss")
        training = TrainingInfo(
            config_hash=str(t.get("config_hash", "")),
            epochs=int(t.get("epochs", 0)),
            final_loss=None if loss is None else float(loss),
        )
    try:
        return RefinerModel(k, feature, weights, training)
    except ValueError as e:
        raise SchemaError(f"$.weights: {e}") from e


# --- PPM images ---------------------------------------------------------


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 pixels, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise SchemaError(f"{path}: not a binary PPM (P6) file")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise SchemaError(f"{path}: malformed PPM header near byte {start}")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise SchemaError(f"{path}: unsupported maxval {maxval}")
    data = raw[pos : pos + w * h * 3]
    if len(data) != w * h * 3:
        raise SchemaError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()
