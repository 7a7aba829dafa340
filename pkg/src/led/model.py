"""Annotation data model plus COCO-style and error-annotation JSON serialization.

Two file formats live here:

* COCO JSON with ``images`` / ``annotations`` / ``categories`` arrays and
  ``[x, y, w, h]`` boxes, used for ground truth and prediction layouts.
* The per-document error annotation, one file per document named
  ``<doc_id>.error.json``::

      {"doc_id": str, "has_error": bool, "error_types": [str],
       "element_errors": {"<element_id>": str}, "missing_gt_ids": [int]}

  with error-type strings from ErrorType values.

Serialization is bit-stable: keys sorted, floats printed with their
shortest round-trip representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import InputError, ParseError, ValidationError
from .geometry import BBox, union_rect


class ErrorType(str, Enum):
    MISSING = "missing"
    HALLUCINATION = "hallucination"
    SIZE = "size"
    SPLIT = "split"
    MERGE = "merge"
    OVERLAP = "overlap"
    DUPLICATE = "duplicate"
    MISCLASSIFICATION = "misclassification"


#: Declaration order, used wherever a stable listing of types is needed.
CANONICAL_TYPES: tuple[ErrorType, ...] = tuple(ErrorType)

#: The seven mutually exclusive structural types; misclassification is the
#: only label that may co-occur with another on the same element.
STRUCTURAL_TYPES: frozenset[ErrorType] = frozenset(ErrorType) - {ErrorType.MISCLASSIFICATION}


def sort_types(types) -> list[ErrorType]:
    order = {t: i for i, t in enumerate(CANONICAL_TYPES)}
    return sorted(types, key=lambda t: order[t])


class Source(str, Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class LayoutElement:
    """A labeled bounding box with identity, on either side of a comparison."""

    element_id: int
    bbox: BBox
    category_id: int
    source: Source = Source.GROUND_TRUTH


@dataclass
class DocumentLayout:
    doc_id: str
    page_size: tuple[float, float]
    elements: list[LayoutElement] = field(default_factory=list)
    image_path: str | None = None
    coco_image_id: int | None = None

    def element_ids(self) -> list[int]:
        return sorted(e.element_id for e in self.elements)

    def get(self, element_id: int) -> LayoutElement:
        for e in self.elements:
            if e.element_id == element_id:
                return e
        raise KeyError(element_id)

    def with_elements(self, elements: list[LayoutElement]) -> "DocumentLayout":
        return replace(self, elements=list(elements))


@dataclass
class ErrorAnnotation:
    """Document-level error flags plus element-level labels.

    Invariants: ``has_error`` iff ``error_types`` non-empty, and
    ``error_types`` equals the labels appearing in ``element_errors`` plus
    MISSING when ``missing_gt_ids`` is non-empty. Use :meth:`build` to get
    both derived fields right by construction.
    """

    doc_id: str
    has_error: bool
    error_types: frozenset[ErrorType]
    element_errors: dict[int, ErrorType]
    missing_gt_ids: list[int]

    @classmethod
    def build(
        cls,
        doc_id: str,
        element_errors: dict[int, ErrorType] | None = None,
        missing_gt_ids: list[int] | None = None,
    ) -> "ErrorAnnotation":
        element_errors = dict(element_errors or {})
        missing_gt_ids = sorted(missing_gt_ids or [])
        types = set(element_errors.values())
        if missing_gt_ids:
            types.add(ErrorType.MISSING)
        return cls(
            doc_id=doc_id,
            has_error=bool(types),
            error_types=frozenset(types),
            element_errors=element_errors,
            missing_gt_ids=missing_gt_ids,
        )

    def validate(self) -> None:
        derived = set(self.element_errors.values())
        if self.missing_gt_ids:
            derived.add(ErrorType.MISSING)
        if derived != set(self.error_types):
            raise ValidationError(
                f"annotation for {self.doc_id!r}: error_types {sorted(t.value for t in self.error_types)} "
                f"do not match element-level labels {sorted(t.value for t in derived)}"
            )
        if self.has_error != bool(self.error_types):
            raise ValidationError(
                f"annotation for {self.doc_id!r}: has_error={self.has_error} "
                f"inconsistent with {len(self.error_types)} error types"
            )


def dumps_stable(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(obj, path: str | Path) -> None:
    try:
        Path(path).write_text(dumps_stable(obj), encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}") from e


def read_json(path: str | Path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at offset {e.pos}: {e.msg}") from e


def _page_from_boxes(boxes: list[BBox]) -> tuple[float, float]:
    # No width/height in the image entry: take the union of the boxes
    # padded by 5% so injection has a canvas to work with.
    u = union_rect(boxes)
    return (u.x2 + 0.05 * u.w, u.y2 + 0.05 * u.h)


def load_coco(
    path: str | Path, source: Source = Source.GROUND_TRUTH
) -> tuple[list[DocumentLayout], list[Category]]:
    """Load a COCO-style annotation file into the data model.

    Raises ValidationError for dangling ids, duplicate ids, or degenerate
    boxes; nothing partially loaded escapes on failure.
    """
    data = read_json(path)
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(data.get(key), list):
            raise ValidationError(f"{path}: missing or non-array {key!r}")

    categories: list[Category] = []
    cat_ids: set[int] = set()
    for raw in data["categories"]:
        try:
            cat = Category(id=int(raw["id"]), name=str(raw["name"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: bad category entry {raw!r}") from e
        if cat.id in cat_ids:
            raise ValidationError(f"{path}: duplicate category id {cat.id}")
        cat_ids.add(cat.id)
        categories.append(cat)

    images: dict[int, dict] = {}
    for raw in data["images"]:
        if "id" not in raw:
            raise ValidationError(f"{path}: image entry without id: {raw!r}")
        img_id = int(raw["id"])
        if img_id in images:
            raise ValidationError(f"{path}: duplicate image id {img_id}")
        images[img_id] = raw

    grouped: dict[int, list[LayoutElement]] = {img_id: [] for img_id in images}
    seen_ids: dict[int, set[int]] = {img_id: set() for img_id in images}
    for raw in data["annotations"]:
        if "id" not in raw:
            raise ValidationError(f"{path}: annotation without id: {raw!r}")
        ann_id = int(raw["id"])
        img_id = raw.get("image_id")
        if img_id not in images:
            raise ValidationError(f"{path}: annotation {ann_id} references unknown image_id {img_id}")
        cat_id = raw.get("category_id")
        if cat_id not in cat_ids:
            raise ValidationError(f"{path}: annotation {ann_id} references unknown category_id {cat_id}")
        bbox_raw = raw.get("bbox")
        if not isinstance(bbox_raw, list) or len(bbox_raw) != 4:
            raise ValidationError(f"{path}: annotation {ann_id} bbox must be [x, y, w, h]")
        try:
            bbox = BBox(*(float(v) for v in bbox_raw))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"{path}: annotation {ann_id}: {e}") from e
        if ann_id in seen_ids[img_id]:
            raise ValidationError(f"{path}: duplicate annotation id {ann_id} in image {img_id}")
        seen_ids[img_id].add(ann_id)
        grouped[img_id].append(
            LayoutElement(element_id=ann_id, bbox=bbox, category_id=int(cat_id), source=source)
        )

    docs: list[DocumentLayout] = []
    used_doc_ids: set[str] = set()
    for img_id, raw in images.items():
        file_name = raw.get("file_name")
        doc_id = Path(file_name).stem if file_name else str(img_id)
        if doc_id in used_doc_ids:
            raise ValidationError(f"{path}: duplicate document id {doc_id!r}")
        used_doc_ids.add(doc_id)
        elements = grouped[img_id]
        if raw.get("width") is not None and raw.get("height") is not None:
            page = (float(raw["width"]), float(raw["height"]))
        elif elements:
            page = _page_from_boxes([e.bbox for e in elements])
        else:
            raise ValidationError(
                f"{path}: image {img_id} has no width/height and no annotations to infer a page from"
            )
        docs.append(
            DocumentLayout(
                doc_id=doc_id,
                page_size=page,
                elements=elements,
                image_path=file_name,
                coco_image_id=img_id,
            )
        )
    return docs, categories


def _num(v: float):
    # Integral floats print as ints, matching how COCO files are usually written.
    return int(v) if float(v).is_integer() else float(v)


def save_coco(docs: list[DocumentLayout], categories: list[Category], path: str | Path) -> None:
    used = {d.coco_image_id for d in docs if d.coco_image_id is not None}
    next_id = max(used, default=0) + 1
    images = []
    annotations = []
    for doc in docs:
        img_id = doc.coco_image_id
        if img_id is None:
            img_id = next_id
            next_id += 1
        images.append(
            {
                "id": img_id,
                "file_name": doc.image_path if doc.image_path else f"{doc.doc_id}.png",
                "width": _num(doc.page_size[0]),
                "height": _num(doc.page_size[1]),
            }
        )
        for e in doc.elements:
            annotations.append(
                {
                    "id": e.element_id,
                    "image_id": img_id,
                    "category_id": e.category_id,
                    "bbox": e.bbox.as_xywh(),
                }
            )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c.id, "name": c.name} for c in categories],
    }
    write_json(payload, path)


def save_error_annotation(ann: ErrorAnnotation, path: str | Path) -> None:
    ann.validate()
    payload = {
        "doc_id": ann.doc_id,
        "has_error": ann.has_error,
        "error_types": [t.value for t in sort_types(ann.error_types)],
        "element_errors": {str(k): v.value for k, v in sorted(ann.element_errors.items())},
        "missing_gt_ids": sorted(ann.missing_gt_ids),
    }
    write_json(payload, path)


def load_error_annotation(path: str | Path) -> ErrorAnnotation:
    data = read_json(path)
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: annotation must be a JSON object")
    for key in ("doc_id", "has_error", "error_types", "element_errors", "missing_gt_ids"):
        if key not in data:
            raise ValidationError(f"{path}: missing key {key!r}")

    def parse_type(s) -> ErrorType:
        try:
            return ErrorType(s)
        except ValueError:
            raise ValidationError(f"{path}: unknown error type {s!r}") from None

    try:
        element_errors = {int(k): parse_type(v) for k, v in data["element_errors"].items()}
        missing = [int(v) for v in data["missing_gt_ids"]]
        types = frozenset(parse_type(s) for s in data["error_types"])
    except (TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"{path}: malformed annotation fields: {e}") from e
    ann = ErrorAnnotation(
        doc_id=str(data["doc_id"]),
        has_error=bool(data["has_error"]),
        error_types=types,
        element_errors=element_errors,
        missing_gt_ids=missing,
    )
    ann.validate()
    return ann
