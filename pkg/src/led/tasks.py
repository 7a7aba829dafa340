"""Prompt bundle emission, model response parsing, and task scoring.

Three tasks are scored against a corpus's error annotations:

* t1: document-level error detection (binary; scored by accuracy)
* t2: document-level error-type classification (8-way multi-label; micro
  and macro F1, micro is the headline)
* t3: element-level error-type classification plus missing-box detection
  (exact (element, type) matches pooled into micro F1)

The toolkit never calls a model itself. The adapter contract: feed each
``<doc_id>.bundle.json`` (and its attachments) to a model, write the raw
reply to ``<responses_dir>/<doc_id>.txt``, then score that directory.
Unparseable or empty replies are scored as all-negative predictions and
surfaced via parse_failure_rate, never dropped.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import load_manifest
from .errors import InputError, ValidationError
from .model import (
    CANONICAL_TYPES,
    ErrorAnnotation,
    ErrorType,
    load_error_annotation,
    read_json,
    sort_types,
    write_json,
)


class Task(str, Enum):
    T1 = "t1"
    T2 = "t2"
    T3 = "t3"


class Prompting(str, Enum):
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"


class AttachmentRole(str, Enum):
    PAGE_IMAGE = "page_image"
    VIZ_IMAGE = "viz_image"
    PREDICTION_JSON = "prediction_json"


#: Attachment roles per prompting method.
PROMPTING_ROLES: dict[Prompting, tuple[AttachmentRole, ...]] = {
    Prompting.P1: (AttachmentRole.PAGE_IMAGE, AttachmentRole.PREDICTION_JSON),
    Prompting.P2: (AttachmentRole.VIZ_IMAGE,),
    Prompting.P3: (
        AttachmentRole.PAGE_IMAGE,
        AttachmentRole.VIZ_IMAGE,
        AttachmentRole.PREDICTION_JSON,
    ),
}


class ParseStatus(str, Enum):
    OK = "ok"
    MALFORMED = "malformed"
    EMPTY = "empty"


@dataclass
class PromptBundle:
    doc_id: str
    task: Task
    prompting: Prompting
    instruction_text: str
    attachments: list[tuple[AttachmentRole, str]]

    def to_payload(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "task": self.task.value,
            "prompting": self.prompting.value,
            "instruction": self.instruction_text,
            "attachments": [{"role": r.value, "path": p} for r, p in self.attachments],
        }


@dataclass
class TaskRecord:
    doc_id: str
    task: Task
    gold: ErrorAnnotation
    predicted: object
    parse_status: ParseStatus
    unknown_labels: tuple[str, ...] = ()


@dataclass
class ScoreReport:
    task: Task
    n_docs: int
    parse_failure_rate: float
    prompting: Prompting | None = None
    accuracy: float | None = None
    micro_f1: float | None = None
    macro_f1: float | None = None
    per_type: dict[str, dict] = field(default_factory=dict)
    unknown_label_count: int = 0
    headline_metric: str = ""

    def to_payload(self) -> dict:
        return {
            "task": self.task.value,
            "prompting": self.prompting.value if self.prompting else None,
            "n_docs": self.n_docs,
            "accuracy": self.accuracy,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_type": self.per_type,
            "parse_failure_rate": self.parse_failure_rate,
            "unknown_label_count": self.unknown_label_count,
            "headline_metric": self.headline_metric,
        }


_TYPE_LIST = ", ".join(t.value for t in CANONICAL_TYPES)

_PROMPTING_CONTEXT = {
    Prompting.P1: "You are given the document page image and the predicted layout as JSON.",
    Prompting.P2: "You are given the page image with the predicted bounding boxes drawn on it.",
    Prompting.P3: (
        "You are given the document page image, the same image with the predicted "
        "bounding boxes drawn on it, and the predicted layout as JSON."
    ),
}

_TASK_INSTRUCTIONS = {
    Task.T1: (
        "Decide whether the predicted layout contains at least one structural error "
        "(a wrong, missing, spurious, fragmented, merged, overlapping, duplicated, or "
        "mislabeled region).\n"
        'Answer with exactly one JSON object: {"has_error": true} or {"has_error": false}.'
    ),
    Task.T2: (
        "Identify every type of structural error present in the predicted layout. "
        f"The possible types are: {_TYPE_LIST}.\n"
        'Answer with exactly one JSON object of the form {"error_types": ["missing", "split"]} '
        "listing each present type once; use an empty list if the prediction is clean."
    ),
    Task.T3: (
        "Label each erroneous predicted box with its structural error type and list the "
        "ground-truth regions that the prediction missed entirely. "
        f"The possible types are: {_TYPE_LIST}. Reference boxes by the integer ids shown.\n"
        "Answer with exactly one JSON object of the form "
        '{"element_errors": {"12": "split"}, "missing_gt_ids": [3, 7]}; '
        "use empty collections if the prediction is clean."
    ),
}


def instruction_text(task: Task, prompting: Prompting) -> str:
    return _PROMPTING_CONTEXT[prompting] + "\n" + _TASK_INSTRUCTIONS[task]


def emit_bundles(
    corpus_dir: str | Path,
    task: Task,
    prompting: Prompting,
    out_dir: str | Path,
) -> list[PromptBundle]:
    """Write one ``<out>/<task>/<prompting>/<doc_id>.bundle.json`` per corpus
    document. Attachment paths are relative to the bundle's directory.
    Deterministic: re-emitting produces identical bytes."""
    corpus = Path(corpus_dir)
    manifest = load_manifest(corpus)
    bundle_dir = Path(out_dir) / task.value / prompting.value
    bundle_dir.mkdir(parents=True, exist_ok=True)
    bundles = []
    for entry in sorted(manifest.documents, key=lambda e: e.doc_id):
        attachments = []
        for role in PROMPTING_ROLES[prompting]:
            if role is AttachmentRole.PAGE_IMAGE:
                target = _page_image_path(corpus, entry)
            elif role is AttachmentRole.VIZ_IMAGE:
                target = corpus / entry.files["pred_svg"]
            else:
                target = corpus / entry.files["pred"]
            attachments.append((role, os.path.relpath(target, bundle_dir)))
        bundle = PromptBundle(
            doc_id=entry.doc_id,
            task=task,
            prompting=prompting,
            instruction_text=instruction_text(task, prompting),
            attachments=attachments,
        )
        write_json(bundle.to_payload(), bundle_dir / f"{entry.doc_id}.bundle.json")
        bundles.append(bundle)
    return bundles


def _page_image_path(corpus: Path, entry) -> Path:
    # The corpus stores annotations, not pixels; the page image is whatever
    # file_name the source COCO referenced, resolved against the corpus dir.
    gt = read_json(corpus / entry.files["gt"])
    file_name = gt["images"][0].get("file_name") or f"{entry.doc_id}.png"
    p = Path(file_name)
    return p if p.is_absolute() else corpus / p


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = text.find("{", idx + 1)
    return None


def _negative_answer(task: Task):
    if task is Task.T1:
        return False
    if task is Task.T2:
        return frozenset()
    return ({}, [])


def parse_response(task: Task, raw_text: str) -> tuple[object, ParseStatus, tuple[str, ...]]:
    """Extract the first JSON object from a model reply and interpret it.

    Returns (predicted, status, unknown_labels). Malformed and empty
    replies yield the all-negative prediction for the task.
    """
    if not raw_text or not raw_text.strip():
        return _negative_answer(task), ParseStatus.EMPTY, ()
    obj = _first_json_object(raw_text)
    if obj is None:
        return _negative_answer(task), ParseStatus.MALFORMED, ()

    if task is Task.T1:
        val = obj.get("has_error")
        if not isinstance(val, bool):
            return _negative_answer(task), ParseStatus.MALFORMED, ()
        return val, ParseStatus.OK, ()

    unknown: list[str] = []

    def to_type(v) -> ErrorType | None:
        try:
            return ErrorType(v)
        except (ValueError, TypeError):
            unknown.append(str(v))
            return None

    if task is Task.T2:
        raw = obj.get("error_types")
        if not isinstance(raw, list):
            return _negative_answer(task), ParseStatus.MALFORMED, ()
        types = {t for t in (to_type(v) for v in raw) if t is not None}
        return frozenset(types), ParseStatus.OK, tuple(unknown)

    raw_errors = obj.get("element_errors", {})
    raw_missing = obj.get("missing_gt_ids", [])
    if not isinstance(raw_errors, dict) or not isinstance(raw_missing, list):
        return _negative_answer(task), ParseStatus.MALFORMED, ()
    element_errors: dict[int, ErrorType] = {}
    for k, v in raw_errors.items():
        try:
            eid = int(k)
        except (TypeError, ValueError):
            unknown.append(str(k))
            continue
        t = to_type(v)
        if t is not None:
            element_errors[eid] = t
    missing = []
    for v in raw_missing:
        try:
            missing.append(int(v))
        except (TypeError, ValueError):
            unknown.append(str(v))
    return (element_errors, sorted(missing)), ParseStatus.OK, tuple(unknown)


def load_records(
    corpus_dir: str | Path,
    responses_dir: str | Path,
    task: Task,
) -> list[TaskRecord]:
    """Pair each corpus document's gold annotation with its response file.

    A document without a response file is scored as an empty reply.
    """
    corpus = Path(corpus_dir)
    responses = Path(responses_dir)
    if not responses.is_dir():
        raise InputError(f"{responses_dir}: not a directory")
    manifest = load_manifest(corpus)
    records = []
    for entry in sorted(manifest.documents, key=lambda e: e.doc_id):
        gold = load_error_annotation(corpus / entry.files["error"])
        response_path = responses / f"{entry.doc_id}.txt"
        raw = response_path.read_text(encoding="utf-8", errors="replace") if response_path.exists() else ""
        predicted, status, unknown = parse_response(task, raw)
        records.append(
            TaskRecord(
                doc_id=entry.doc_id,
                task=task,
                gold=gold,
                predicted=predicted,
                parse_status=status,
                unknown_labels=unknown,
            )
        )
    return records


def _f1(tp: int, fp: int, fn: int) -> float:
    # Vacuously perfect when there is nothing to find and nothing was claimed.
    if tp == fp == fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def _per_type_metrics(counts: dict[ErrorType, list[int]]) -> tuple[dict[str, dict], float]:
    """Per-type precision/recall/F1 table plus macro F1.

    Types that never occur in gold or predictions are excluded from the
    macro average; types predicted without gold support count as F1 = 0.
    """
    table = {}
    included = []
    for t in CANONICAL_TYPES:
        tp, fp, fn = counts.get(t, [0, 0, 0])
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
        table[t.value] = {
            "tp": tp, "fp": fp, "fn": fn,
            "precision": precision, "recall": recall, "f1": f1,
        }
        if tp + fp + fn > 0:
            included.append(f1)
    macro = sum(included) / len(included) if included else 1.0
    return table, macro


def _failure_rate(records: list[TaskRecord]) -> float:
    if not records:
        return 0.0
    bad = sum(1 for r in records if r.parse_status is not ParseStatus.OK)
    return bad / len(records)


def _unknown_count(records: list[TaskRecord]) -> int:
    return sum(len(r.unknown_labels) for r in records)


def score_t1(records: list[TaskRecord], prompting: Prompting | None = None) -> ScoreReport:
    correct = sum(1 for r in records if bool(r.predicted) == r.gold.has_error)
    n = len(records)
    return ScoreReport(
        task=Task.T1,
        prompting=prompting,
        n_docs=n,
        accuracy=correct / n if n else 1.0,
        parse_failure_rate=_failure_rate(records),
        unknown_label_count=_unknown_count(records),
        headline_metric="accuracy",
    )


def score_t2(records: list[TaskRecord], prompting: Prompting | None = None) -> ScoreReport:
    tp = fp = fn = 0
    counts: dict[ErrorType, list[int]] = {t: [0, 0, 0] for t in CANONICAL_TYPES}
    for r in records:
        gold = set(r.gold.error_types)
        pred = set(r.predicted) if r.predicted else set()
        for t in CANONICAL_TYPES:
            in_gold, in_pred = t in gold, t in pred
            if in_gold and in_pred:
                tp += 1
                counts[t][0] += 1
            elif in_pred:
                fp += 1
                counts[t][1] += 1
            elif in_gold:
                fn += 1
                counts[t][2] += 1
    per_type, macro = _per_type_metrics(counts)
    return ScoreReport(
        task=Task.T2,
        prompting=prompting,
        n_docs=len(records),
        micro_f1=_f1(tp, fp, fn),
        macro_f1=macro,
        per_type=per_type,
        parse_failure_rate=_failure_rate(records),
        unknown_label_count=_unknown_count(records),
        headline_metric="micro_f1",
    )


def _t3_decisions(ann_errors: dict[int, ErrorType], missing: list[int]) -> set[tuple[str, int, ErrorType]]:
    out = {("element", eid, t) for eid, t in ann_errors.items()}
    out |= {("missing", gid, ErrorType.MISSING) for gid in missing}
    return out


def score_t3(records: list[TaskRecord], prompting: Prompting | None = None) -> ScoreReport:
    """Element-level scoring: a prediction earns credit only for an exact
    (element, type) match; a right element with the wrong type counts as
    both a false positive and a false negative."""
    tp = fp = fn = 0
    counts: dict[ErrorType, list[int]] = {t: [0, 0, 0] for t in CANONICAL_TYPES}
    for r in records:
        gold = _t3_decisions(r.gold.element_errors, r.gold.missing_gt_ids)
        if r.parse_status is ParseStatus.OK:
            pred_errors, pred_missing = r.predicted
        else:
            pred_errors, pred_missing = {}, []
        pred = _t3_decisions(pred_errors, pred_missing)
        for item in gold & pred:
            tp += 1
            counts[item[2]][0] += 1
        for item in pred - gold:
            fp += 1
            counts[item[2]][1] += 1
        for item in gold - pred:
            fn += 1
            counts[item[2]][2] += 1
    per_type, macro = _per_type_metrics(counts)
    return ScoreReport(
        task=Task.T3,
        prompting=prompting,
        n_docs=len(records),
        micro_f1=_f1(tp, fp, fn),
        macro_f1=macro,
        per_type=per_type,
        parse_failure_rate=_failure_rate(records),
        unknown_label_count=_unknown_count(records),
        headline_metric="micro_f1",
    )


def score(task: Task, records: list[TaskRecord], prompting: Prompting | None = None) -> ScoreReport:
    if task is Task.T1:
        return score_t1(records, prompting)
    if task is Task.T2:
        return score_t2(records, prompting)
    if task is Task.T3:
        return score_t3(records, prompting)
    raise ValidationError(f"unknown task {task!r}")


def gold_response_text(task: Task, ann: ErrorAnnotation) -> str:
    """Serialize a gold annotation in the expected answer syntax (the scorer
    self-test feeds these back as responses)."""
    if task is Task.T1:
        return json.dumps({"has_error": ann.has_error})
    if task is Task.T2:
        return json.dumps({"error_types": [t.value for t in sort_types(ann.error_types)]})
    return json.dumps(
        {
            "element_errors": {str(k): v.value for k, v in sorted(ann.element_errors.items())},
            "missing_gt_ids": sorted(ann.missing_gt_ids),
        }
    )
