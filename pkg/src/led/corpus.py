"""Batch pipeline emitting an error-injected corpus from a clean COCO file.

Per document the pipeline writes ``<doc_id>.gt.json``, ``<doc_id>.pred.json``,
``<doc_id>.error.json``, ``<doc_id>.gt.svg`` and ``<doc_id>.pred.svg``, then a
``manifest.json`` last as the completion marker. Documents are processed
independently (optionally in parallel); outputs are byte-identical for a
given seed and config regardless of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.etree import ElementTree as ET

from .detector import diagnose
from .errors import InputError, InternalError, ValidationError
from .injector import InjectionConfig, derive_seed, inject, make_rng, sample_plan
from .model import (
    Category,
    DocumentLayout,
    ErrorAnnotation,
    ErrorType,
    Source,
    load_coco,
    load_error_annotation,
    read_json,
    save_coco,
    save_error_annotation,
    sort_types,
    write_json,
)

MANIFEST_NAME = "manifest.json"

_PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
]


@dataclass
class DocEntry:
    doc_id: str
    files: dict[str, str]
    error_types: list[str]
    skips: list[list[str]] = field(default_factory=list)
    n_gt_elements: int = 0
    n_pred_elements: int = 0


@dataclass
class CorpusManifest:
    corpus_id: str
    global_seed: int
    config: dict
    total_docs: int
    total_elements: int
    total_pred_elements: int
    summary: dict[str, int]
    documents: list[DocEntry]

    def to_payload(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "global_seed": self.global_seed,
            "config": self.config,
            "total_docs": self.total_docs,
            "total_elements": self.total_elements,
            "total_pred_elements": self.total_pred_elements,
            "summary": self.summary,
            "documents": [asdict(d) for d in self.documents],
        }

    @classmethod
    def from_payload(cls, data: dict) -> "CorpusManifest":
        return cls(
            corpus_id=data["corpus_id"],
            global_seed=data["global_seed"],
            config=data["config"],
            total_docs=data["total_docs"],
            total_elements=data["total_elements"],
            total_pred_elements=data["total_pred_elements"],
            summary=data["summary"],
            documents=[DocEntry(**d) for d in data["documents"]],
        )


def config_snapshot(config: InjectionConfig) -> dict:
    snap = asdict(config)
    snap["error_distribution"] = {
        t.value: config.error_distribution[t] for t in sort_types(config.error_distribution)
    }
    snap["size_perturb_range"] = list(config.size_perturb_range)
    snap["split_n_range"] = list(config.split_n_range)
    snap["hallucination_size_range"] = list(config.hallucination_size_range)
    return snap


def render_svg(doc: DocumentLayout, annotation: ErrorAnnotation | None = None) -> str:
    """SVG visualization: one rect per element labelled "id:category", stroke
    color keyed by category; flagged elements get a dashed stroke and the
    error-type tag appended. Always well-formed XML."""
    pw, ph = doc.page_size
    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": f"{pw:g}",
            "height": f"{ph:g}",
            "viewBox": f"0 0 {pw:g} {ph:g}",
        },
    )
    if doc.image_path:
        ET.SubElement(
            svg,
            "image",
            {"href": doc.image_path, "x": "0", "y": "0", "width": f"{pw:g}", "height": f"{ph:g}"},
        )
    # page frame as a path so element rects can be counted directly
    ET.SubElement(
        svg,
        "path",
        {"d": f"M0 0 H{pw:g} V{ph:g} H0 Z", "fill": "none", "stroke": "#444444"},
    )
    for e in sorted(doc.elements, key=lambda e: e.element_id):
        color = _PALETTE[e.category_id % len(_PALETTE)]
        tag = None
        if annotation is not None:
            if e.element_id in annotation.element_errors:
                tag = annotation.element_errors[e.element_id].value
            elif e.source is Source.GROUND_TRUTH and e.element_id in annotation.missing_gt_ids:
                tag = ErrorType.MISSING.value
        attrs = {
            "x": f"{e.bbox.x:.2f}",
            "y": f"{e.bbox.y:.2f}",
            "width": f"{e.bbox.w:.2f}",
            "height": f"{e.bbox.h:.2f}",
            "fill": "none",
            "stroke": color,
            "stroke-width": "2",
        }
        if tag:
            attrs["stroke-dasharray"] = "6 3"
        ET.SubElement(svg, "rect", attrs)
        label = f"{e.element_id}:{e.category_id}"
        if tag:
            label += f" [{tag}]"
        text = ET.SubElement(
            svg,
            "text",
            {"x": f"{e.bbox.x + 2:.2f}", "y": f"{e.bbox.y + 12:.2f}", "font-size": "11", "fill": color},
        )
        text.text = label
    return ET.tostring(svg, encoding="unicode") + "\n"


def _doc_files(doc_id: str) -> dict[str, str]:
    return {
        "gt": f"{doc_id}.gt.json",
        "pred": f"{doc_id}.pred.json",
        "error": f"{doc_id}.error.json",
        "gt_svg": f"{doc_id}.gt.svg",
        "pred_svg": f"{doc_id}.pred.svg",
    }


def _build_one(
    doc: DocumentLayout,
    categories: list[Category],
    config: InjectionConfig,
    global_seed: int,
    out_dir: Path,
    verify: bool,
) -> DocEntry:
    rng = make_rng(derive_seed(global_seed, doc.doc_id))
    plan = sample_plan(doc, config, rng, categories)
    result = inject(doc, plan, config)
    if verify:
        report = diagnose(doc, result.prediction)
        if not report.doc_error_types >= set(result.annotation.error_types):
            raise InternalError(
                f"{doc.doc_id}: detector recovered {sorted(t.value for t in report.doc_error_types)} "
                f"but annotation claims {sorted(t.value for t in result.annotation.error_types)}"
            )
    files = _doc_files(doc.doc_id)
    written: list[Path] = []
    try:
        for key, writer in (
            ("gt", lambda p: save_coco([doc], categories, p)),
            ("pred", lambda p: save_coco([result.prediction], categories, p)),
            ("error", lambda p: save_error_annotation(result.annotation, p)),
            ("gt_svg", lambda p: Path(p).write_text(render_svg(doc, result.annotation), encoding="utf-8")),
            ("pred_svg", lambda p: Path(p).write_text(render_svg(result.prediction, result.annotation), encoding="utf-8")),
        ):
            target = out_dir / files[key]
            written.append(target)
            writer(target)
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return DocEntry(
        doc_id=doc.doc_id,
        files=files,
        error_types=[t.value for t in sort_types(result.annotation.error_types)],
        skips=[[s.error_type.value, s.reason] for s in result.skips],
        n_gt_elements=len(doc.elements),
        n_pred_elements=len(result.prediction.elements),
    )


def build_corpus(
    coco_in: str | Path,
    config: InjectionConfig,
    out_dir: str | Path,
    jobs: int = 1,
    verify: bool = False,
) -> CorpusManifest:
    """Run the full per-document pipeline and write the manifest last.

    ``verify`` additionally diagnoses every generated prediction and fails
    if the detector does not recover the injected types (soundness sweep).
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs, categories = load_coco(coco_in)
    docs = sorted(docs, key=lambda d: d.doc_id)
    seed = config.seed

    if jobs <= 1 or len(docs) <= 1:
        entries = [_build_one(d, categories, config, seed, out, verify) for d in docs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(
                pool.map(lambda d: _build_one(d, categories, config, seed, out, verify), docs)
            )
    entries.sort(key=lambda e: e.doc_id)

    summary = {t.value: 0 for t in ErrorType}
    for e in entries:
        for t in e.error_types:
            summary[t] += 1
    manifest = CorpusManifest(
        corpus_id=out.name,
        global_seed=seed,
        config=config_snapshot(config),
        total_docs=len(entries),
        total_elements=sum(e.n_gt_elements for e in entries),
        total_pred_elements=sum(e.n_pred_elements for e in entries),
        summary=summary,
        documents=entries,
    )
    write_json(manifest.to_payload(), out / MANIFEST_NAME)
    return manifest


def load_manifest(corpus_dir: str | Path) -> CorpusManifest:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise InputError(f"{corpus_dir}: no {MANIFEST_NAME}; not a built corpus")
    data = read_json(path)
    try:
        return CorpusManifest.from_payload(data)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"{path}: malformed manifest: {e}") from e


def recount_summary(corpus_dir: str | Path) -> dict[str, int]:
    """Recount per-type document counts straight from the emitted error files."""
    manifest = load_manifest(corpus_dir)
    counts = {t.value: 0 for t in ErrorType}
    for entry in manifest.documents:
        ann = load_error_annotation(Path(corpus_dir) / entry.files["error"])
        for t in ann.error_types:
            counts[t.value] += 1
    return counts


def corpus_stats(manifest: CorpusManifest) -> str:
    """Human-readable summary table with a stable column order."""
    lines = [
        f"corpus: {manifest.corpus_id}",
        f"documents: {manifest.total_docs}",
        f"gt elements: {manifest.total_elements}",
        f"pred elements: {manifest.total_pred_elements}",
        f"{'error type':<20}{'docs':>8}{'share':>9}",
    ]
    n = max(manifest.total_docs, 1)
    for t in ErrorType:
        count = manifest.summary.get(t.value, 0)
        lines.append(f"{t.value:<20}{count:>8}{count / n:>8.1%}")
    return "\n".join(lines) + "\n"
