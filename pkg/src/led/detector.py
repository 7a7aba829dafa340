"""Rule engine diagnosing structural errors in a predicted layout against ground truth.

Eight error types are recognized. Seven of them (missing, hallucination,
size, split, merge, overlap, duplicate) are structural and mutually
exclusive per target object; misclassification is evaluated independently
and may co-occur with any of them.

Arbitration when several predicates could fire on one object follows a
fixed precedence, from strongest evidence to weakest:

1. hallucination / missing (the 0.1 existence test)
2. duplicate
3. split
4. merge
5. size
6. overlap, on pairs of still-unexplained predictions
7. misclassification, independently of the above

Predictions that are the mutual best match of a ground-truth box at high
IoU with the correct label are "settled" correct detections and are never
drawn into merge, overlap, duplicate, or misclassification flags. This
guarantees the clean fixed point: diagnosing a layout against itself
reports no error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import area, center_distance, diagonal, iou, pairwise_iou
from .model import (
    STRUCTURAL_TYPES,
    DocumentLayout,
    ErrorAnnotation,
    ErrorType,
    LayoutElement,
)


@dataclass(frozen=True)
class DetectorConfig:
    """Diagnosis thresholds. Defaults are the standard values; research use
    may sweep them."""

    existence_iou: float = 0.1
    duplicate_iou: float = 0.9
    split_min_iou: float = 0.1
    split_max_iou: float = 0.5
    split_sum_iou: float = 0.5
    merge_iou: float = 0.1
    overlap_iou: float = 0.1
    misclassification_iou: float = 0.9
    size_ratio_low: float = 0.6
    size_ratio_high: float = 1.4
    # "similar centers" quantified as a fraction of the GT diagonal
    size_center_tolerance: float = 0.25


DEFAULT_DETECTOR_CONFIG = DetectorConfig()


@dataclass
class MatchTable:
    """Pairwise IoU between the GT and prediction elements of one document.

    Elements are kept sorted by element_id so index-based tie-breaking is
    the same as id-based tie-breaking.
    """

    gt: list[LayoutElement]
    pred: list[LayoutElement]
    iou: np.ndarray  # [n_gt, n_pred]

    @property
    def gt_ids(self) -> list[int]:
        return [e.element_id for e in self.gt]

    @property
    def pred_ids(self) -> list[int]:
        return [e.element_id for e in self.pred]

    def best_gt_index(self, j: int) -> int | None:
        """Index of the highest-IoU GT for prediction column j (lowest id wins ties)."""
        if self.iou.shape[0] == 0:
            return None
        return int(np.argmax(self.iou[:, j]))

    def gt_candidates(self, i: int, threshold: float) -> list[int]:
        """Prediction indices with IoU >= threshold against GT row i, best first."""
        row = self.iou[i, :]
        idx = [j for j in range(row.shape[0]) if row[j] >= threshold]
        return sorted(idx, key=lambda j: (-row[j], self.pred[j].element_id))


def build_match_table(gt: list[LayoutElement], pred: list[LayoutElement]) -> MatchTable:
    gt = sorted(gt, key=lambda e: e.element_id)
    pred = sorted(pred, key=lambda e: e.element_id)
    matrix = pairwise_iou([e.bbox for e in gt], [e.bbox for e in pred])
    return MatchTable(gt=gt, pred=pred, iou=matrix)


def settled_matches(table: MatchTable, config: DetectorConfig = DEFAULT_DETECTOR_CONFIG) -> dict[int, int]:
    """Greedy one-to-one matching of correct detections: pred_id -> gt_id.

    A pair qualifies when IoU >= the duplicate threshold and the labels
    agree; pairs are consumed highest IoU first (ties by lower ids).
    """
    pairs = []
    n_gt, n_pred = table.iou.shape
    for i in range(n_gt):
        for j in range(n_pred):
            v = table.iou[i, j]
            if v >= config.duplicate_iou and table.gt[i].category_id == table.pred[j].category_id:
                pairs.append((-v, table.gt[i].element_id, table.pred[j].element_id, i, j))
    pairs.sort()
    matched_gt: set[int] = set()
    settled: dict[int, int] = {}
    for _, gt_id, pred_id, i, j in pairs:
        if i in matched_gt or pred_id in settled:
            continue
        matched_gt.add(i)
        settled[pred_id] = gt_id
    return settled


def detect_missing(table: MatchTable, config: DetectorConfig = DEFAULT_DETECTOR_CONFIG) -> list[int]:
    """GT ids with no prediction reaching the existence IoU."""
    if table.iou.shape[1] == 0:
        return list(table.gt_ids)
    best = table.iou.max(axis=1, initial=0.0)
    return [table.gt[i].element_id for i in range(len(table.gt)) if best[i] < config.existence_iou]


def detect_hallucination(table: MatchTable, config: DetectorConfig = DEFAULT_DETECTOR_CONFIG) -> list[int]:
    """Prediction ids with no GT reaching the existence IoU."""
    if table.iou.shape[0] == 0:
        return list(table.pred_ids)
    best = table.iou.max(axis=0, initial=0.0)
    return [table.pred[j].element_id for j in range(len(table.pred)) if best[j] < config.existence_iou]


def detect_duplicate(
    table: MatchTable,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    settled: dict[int, int] | None = None,
) -> list[tuple[int, list[int]]]:
    """GTs covered by two or more high-IoU predictions.

    The single best match is retained as the legitimate detection (ties by
    lower element id); every further high-IoU prediction is flagged.
    Predictions settled on a different GT are not candidates.
    """
    if settled is None:
        settled = settled_matches(table, config)
    out = []
    for i in range(len(table.gt)):
        gt_id = table.gt[i].element_id
        cand = [
            j
            for j in table.gt_candidates(i, config.duplicate_iou)
            if settled.get(table.pred[j].element_id, gt_id) == gt_id
        ]
        if len(cand) < 2:
            continue
        retained = cand[0]
        for j in cand:
            if settled.get(table.pred[j].element_id) == gt_id:
                retained = j
                break
        flagged = [table.pred[j].element_id for j in cand if j != retained]
        out.append((gt_id, flagged))
    return out


def detect_split(
    table: MatchTable,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    exclude_preds: frozenset[int] | set[int] = frozenset(),
) -> list[tuple[int, list[int]]]:
    """GTs fragmented across several moderate-IoU predictions.

    A fragment must overlap the GT in [split_min_iou, split_max_iou) and
    have this GT as its best match, so one prediction cannot serve as a
    fragment for two different GTs. The group fires when it has at least
    two fragments and their IoUs sum to split_sum_iou or more.
    """
    out = []
    for i in range(len(table.gt)):
        frags = []
        total = 0.0
        for j in range(len(table.pred)):
            pid = table.pred[j].element_id
            if pid in exclude_preds:
                continue
            v = table.iou[i, j]
            if config.split_min_iou <= v < config.split_max_iou and table.best_gt_index(j) == i:
                frags.append(pid)
                total += v
        if len(frags) >= 2 and total >= config.split_sum_iou:
            out.append((table.gt[i].element_id, frags))
    return out


def detect_merge(
    table: MatchTable,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    exclude_preds: frozenset[int] | set[int] = frozenset(),
) -> list[tuple[int, list[int]]]:
    """Predictions absorbing two or more distinct GT boxes at the existence IoU."""
    out = []
    for j in range(len(table.pred)):
        pid = table.pred[j].element_id
        if pid in exclude_preds:
            continue
        gts = [table.gt[i].element_id for i in range(len(table.gt)) if table.iou[i, j] >= config.merge_iou]
        if len(gts) >= 2:
            out.append((pid, gts))
    return out


def detect_size_error(
    table: MatchTable,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    exclude_preds: frozenset[int] | set[int] = frozenset(),
) -> list[int]:
    """Predictions centered on their best GT but with an area ratio outside the band."""
    out = []
    for j in range(len(table.pred)):
        pid = table.pred[j].element_id
        if pid in exclude_preds:
            continue
        i = table.best_gt_index(j)
        if i is None or table.iou[i, j] < config.existence_iou:
            continue
        gt_box = table.gt[i].bbox
        pred_box = table.pred[j].bbox
        if center_distance(gt_box, pred_box) > config.size_center_tolerance * diagonal(gt_box):
            continue
        ratio = area(pred_box) / area(gt_box)
        if not (config.size_ratio_low <= ratio <= config.size_ratio_high):
            out.append(pid)
    return out


def detect_overlap(
    pred: list[LayoutElement],
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
) -> list[tuple[int, int]]:
    """All unordered prediction pairs overlapping at the overlap IoU.

    This is the raw pairwise predicate; diagnose() drops pairs already
    explained as duplicates, split siblings, or settled detections.
    """
    pred = sorted(pred, key=lambda e: e.element_id)
    out = []
    for a in range(len(pred)):
        for b in range(a + 1, len(pred)):
            if iou(pred[a].bbox, pred[b].bbox) >= config.overlap_iou:
                out.append((pred[a].element_id, pred[b].element_id))
    return out


def detect_misclassification(
    table: MatchTable,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    settled: dict[int, int] | None = None,
) -> list[int]:
    """Predictions with high overlap against some GT but the wrong label.

    Settled predictions are exempt: a correct detection of one GT is not
    penalized for incidentally covering another GT with a different label.
    """
    if settled is None:
        settled = settled_matches(table, config)
    out = []
    for j in range(len(table.pred)):
        pid = table.pred[j].element_id
        if pid in settled:
            continue
        for i in range(len(table.gt)):
            if (
                table.iou[i, j] >= config.misclassification_iou
                and table.gt[i].category_id != table.pred[j].category_id
            ):
                out.append(pid)
                break
    return out


@dataclass
class DiagnosisReport:
    doc_id: str
    per_pred: dict[int, set[ErrorType]] = field(default_factory=dict)
    per_gt_missing: list[int] = field(default_factory=list)
    doc_error_types: set[ErrorType] = field(default_factory=set)
    has_error: bool = False

    def to_annotation(self) -> ErrorAnnotation:
        """Flatten into the error-annotation schema (one label per element).

        When an element carries a structural label and misclassification,
        the structural label takes the element slot.
        """
        element_errors: dict[int, ErrorType] = {}
        for pid, types in self.per_pred.items():
            structural = [t for t in types if t in STRUCTURAL_TYPES]
            if structural:
                element_errors[pid] = structural[0]
            elif types:
                element_errors[pid] = ErrorType.MISCLASSIFICATION
        return ErrorAnnotation.build(
            doc_id=self.doc_id,
            element_errors=element_errors,
            missing_gt_ids=self.per_gt_missing,
        )


def diagnose(
    gt: DocumentLayout,
    pred: DocumentLayout,
    config: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
) -> DiagnosisReport:
    """Compare a predicted layout against ground truth for the same document.

    Deterministic: identical inputs always produce the identical report.
    """
    if gt.doc_id != pred.doc_id:
        raise ValidationError(f"document id mismatch: gt={gt.doc_id!r} pred={pred.doc_id!r}")

    table = build_match_table(gt.elements, pred.elements)
    settled = settled_matches(table, config)
    per_pred: dict[int, set[ErrorType]] = {}
    assigned: set[int] = set()

    def flag(pid: int, t: ErrorType) -> None:
        per_pred.setdefault(pid, set()).add(t)
        if t in STRUCTURAL_TYPES:
            assigned.add(pid)

    missing = detect_missing(table, config)

    for pid in detect_hallucination(table, config):
        flag(pid, ErrorType.HALLUCINATION)

    for _, dup_preds in detect_duplicate(table, config, settled):
        for pid in dup_preds:
            if pid not in assigned:
                flag(pid, ErrorType.DUPLICATE)

    for _, frag_preds in detect_split(table, config, exclude_preds=assigned):
        for pid in frag_preds:
            flag(pid, ErrorType.SPLIT)

    for pid, _ in detect_merge(table, config, exclude_preds=assigned | set(settled)):
        flag(pid, ErrorType.MERGE)

    for pid in detect_size_error(table, config, exclude_preds=assigned | set(settled)):
        flag(pid, ErrorType.SIZE)

    eligible = [e for e in table.pred if e.element_id not in assigned and e.element_id not in settled]
    for a, b in detect_overlap(eligible, config):
        flag(a, ErrorType.OVERLAP)
        flag(b, ErrorType.OVERLAP)

    for pid in detect_misclassification(table, config, settled):
        flag(pid, ErrorType.MISCLASSIFICATION)

    doc_types = set()
    for types in per_pred.values():
        doc_types |= types
    if missing:
        doc_types.add(ErrorType.MISSING)

    return DiagnosisReport(
        doc_id=gt.doc_id,
        per_pred=per_pred,
        per_gt_missing=sorted(missing),
        doc_error_types=doc_types,
        has_error=bool(doc_types),
    )
