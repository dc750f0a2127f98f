"""Reading and writing annotation files.

Two inputs are supported: the multi-rater sample format (one JSON file per
object, all raters and QA phases) and standard COCO instance annotations,
from which single-ring polygons can be cropped into sample coordinates.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Tuple, Union

import jsonschema
import numpy as np

from .consensus import PHASES, RaterAnnotation, RaterSet
from .errors import (
    InvalidInputError,
    NotFoundError,
    SchemaError,
    UnsupportedFormatError,
    ValidationError,
)
from .geometry import BBox, Polygon, crop_with_margin, validate_simple

PathLike = Union[str, os.PathLike]

DEFAULT_MARGIN = 0.10

MULTIRATER_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["sample_id", "image", "raters"],
    "additionalProperties": False,
    "properties": {
        "sample_id": {"type": "string", "minLength": 1},
        "instructions": {"type": "string"},
        "image": {
            "type": "object",
            "required": ["width", "height"],
            "additionalProperties": False,
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
            },
        },
        "raters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["rater_id", "phase", "polygon"],
                "additionalProperties": False,
                "properties": {
                    "rater_id": {"type": "string", "minLength": 1},
                    "phase": {"enum": list(PHASES)},
                    "polygon": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft7Validator(MULTIRATER_SCHEMA)


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def atomic_write(path: PathLike, data: Union[str, bytes]) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_multirater(doc) -> RaterSet:
    """Validate a decoded multi-rater document and build its :class:`RaterSet`."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise SchemaError(err.message, _pointer(err.absolute_path))
    width, height = doc["image"]["width"], doc["image"]["height"]
    annotations = []
    seen = set()
    for k, entry in enumerate(doc["raters"]):
        rid, phase = entry["rater_id"], entry["phase"]
        if (rid, phase) in seen:
            raise ValidationError(f"/raters/{k}: duplicate polygon for rater {rid!r} in phase {phase!r}")
        seen.add((rid, phase))
        label = f"rater {rid!r} ({phase})"
        try:
            polygon = Polygon(np.asarray(entry["polygon"], dtype=float).reshape(-1, 2))
        except InvalidInputError as exc:
            raise ValidationError(f"{label}: {exc}") from None
        validate_simple(polygon, label)
        annotations.append(RaterAnnotation(rid, phase, polygon))
    return RaterSet(doc["sample_id"], tuple(annotations), (width, height), doc.get("instructions"))


def load_multirater(path: PathLike) -> RaterSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NotFoundError(f"{path}: no such file") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    try:
        return parse_multirater(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}", exc.pointer) from None
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def multirater_to_dict(raters: RaterSet) -> dict:
    doc = {"sample_id": raters.sample_id}
    if raters.image_size is None:
        raise InvalidInputError("a RaterSet needs image dimensions to be serialized")
    doc["image"] = {"width": int(raters.image_size[0]), "height": int(raters.image_size[1])}
    if raters.instructions is not None:
        doc["instructions"] = raters.instructions
    doc["raters"] = [
        {"rater_id": a.rater_id, "phase": a.phase, "polygon": a.polygon.tolist()} for a in raters.annotations
    ]
    return doc


def dumps_multirater(raters: RaterSet) -> str:
    """Canonical JSON text: fixed key order, shortest round-trip floats, trailing newline."""
    return json.dumps(multirater_to_dict(raters), indent=1) + "\n"


def save_multirater(raters: RaterSet, path: PathLike) -> None:
    atomic_write(path, dumps_multirater(raters))


GROUND_TRUTH_NAME = "ground_truth.json"
MERGED_NAME = "merged.json"


def load_directory(directory: PathLike) -> List[RaterSet]:
    """Every ``*.json`` sample in ``directory`` (sidecars excluded), sorted by sample_id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFoundError(f"{directory}: not a directory")
    files = sorted(p for p in directory.glob("*.json") if p.name not in (GROUND_TRUTH_NAME, MERGED_NAME))
    samples = [load_multirater(p) for p in files]
    return sorted(samples, key=lambda s: s.sample_id)


def dumps_ground_truth(items: List[Tuple[str, Polygon]]) -> str:
    doc = [{"sample_id": sid, "polygon": poly.tolist()} for sid, poly in items]
    return json.dumps(doc, indent=1) + "\n"


# ---------------------------------------------------------------------------
# COCO


def load_coco_polygon(coco_json_path: PathLike, image_id: int, annotation_id: int):
    """Polygon, bbox and ``(width, height)`` of one polygon-typed COCO annotation."""
    path = Path(coco_json_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise NotFoundError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "annotations" not in doc or "images" not in doc:
        raise SchemaError(f"{path}: not a COCO instances file (needs 'images' and 'annotations')")
    ann = next((a for a in doc["annotations"] if a.get("id") == annotation_id), None)
    if ann is None:
        raise NotFoundError(f"annotation {annotation_id} not found in {path}")
    if ann.get("image_id") != image_id:
        raise NotFoundError(
            f"annotation {annotation_id} belongs to image {ann.get('image_id')}, not {image_id}"
        )
    image = next((im for im in doc["images"] if im.get("id") == image_id), None)
    if image is None:
        raise NotFoundError(f"image {image_id} not found in {path}")
    seg = ann.get("segmentation")
    if isinstance(seg, dict) or ann.get("iscrowd"):
        raise UnsupportedFormatError(f"annotation {annotation_id} is RLE-encoded; only polygons are supported")
    if not isinstance(seg, list) or len(seg) != 1:
        count = len(seg) if isinstance(seg, list) else 0
        raise UnsupportedFormatError(
            f"annotation {annotation_id} has {count} rings; only single-ring polygons are supported"
        )
    ring = np.asarray(seg[0], dtype=float)
    if ring.size % 2:
        raise UnsupportedFormatError(f"annotation {annotation_id}: odd number of polygon coordinates")
    pts = ring.reshape(-1, 2)
    # COCO rings sometimes repeat vertices; drop consecutive and closing duplicates
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    try:
        polygon = validate_simple(Polygon(pts), f"annotation {annotation_id}")
    except InvalidInputError as exc:
        raise ValidationError(str(exc)) from None
    if "bbox" in ann:
        bbox = BBox.from_xywh(*ann["bbox"])
    else:
        bbox = BBox(*polygon.bounds)
    return polygon, bbox, (int(image["width"]), int(image["height"]))


def prepare_sample(polygon: Polygon, bbox: BBox, image_size, margin: float = DEFAULT_MARGIN):
    """Crop around ``bbox`` with a fractional margin and move the polygon into crop coordinates."""
    crop = crop_with_margin(bbox, margin, image_size[0], image_size[1])
    local = polygon.translated(-crop.x_min, -crop.y_min)
    x0, y0, x1, y1 = local.bounds
    tol = 1e-9
    if x0 < -tol or y0 < -tol or x1 > crop.width + tol or y1 > crop.height + tol:
        raise ValidationError("polygon extends outside the crop window")
    return local, crop


@dataclass(frozen=True)
class CocoIdRecord:
    image_id: int
    coco_image_id: int
    coco_annotation_id: int


def bundled_coco_ids() -> List[CocoIdRecord]:
    """The 24 sample-to-COCO ID pairs shipped with the package."""
    text = resources.files("polyconsensus").joinpath("data/coco_ids.csv").read_text(encoding="utf-8")
    rows = csv.DictReader(io.StringIO(text))
    return [
        CocoIdRecord(int(r["image_id"]), int(r["coco_image_id"]), int(r["coco_annotation_id"])) for r in rows
    ]
