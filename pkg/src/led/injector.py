"""Seeded, distribution-driven synthesis of erroneous layouts from clean ground truth.

A plan is sampled first (which error types, which target elements), then
executed. All randomness flows from numpy's PCG64 generator, so a (seed,
document) pair fully determines the output on every platform. Injections
that would not be recoverable by the detector's own rules are resampled or
skipped with a recorded reason rather than emitted with an unsound label.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import DEFAULT_DETECTOR_CONFIG, DetectorConfig
from .errors import ConfigError, ValidationError
from .geometry import (
    BBox,
    area,
    center_distance,
    clip_to_page,
    iou,
    scale_about_center,
    translate,
    union_rect,
)
from .model import (
    Category,
    DocumentLayout,
    ErrorAnnotation,
    ErrorType,
    LayoutElement,
    Source,
)

#: Marginal error-type frequencies observed in production layout-analysis
#: output; used as the default injection distribution.
DEFAULT_ERROR_DISTRIBUTION: dict[ErrorType, float] = {
    ErrorType.MISSING: 0.63,
    ErrorType.HALLUCINATION: 0.14,
    ErrorType.SIZE: 0.11,
    ErrorType.MISCLASSIFICATION: 0.08,
    ErrorType.SPLIT: 0.01,
    ErrorType.MERGE: 0.01,
    ErrorType.OVERLAP: 0.01,
    ErrorType.DUPLICATE: 0.01,
}

#: Order in which planned actions are executed. Removal first so later
#: actions never target a vanished element; hallucination near the end so
#: placement sees final occupancy.
EXECUTION_ORDER: tuple[ErrorType, ...] = (
    ErrorType.MISSING,
    ErrorType.MERGE,
    ErrorType.SPLIT,
    ErrorType.SIZE,
    ErrorType.OVERLAP,
    ErrorType.DUPLICATE,
    ErrorType.HALLUCINATION,
    ErrorType.MISCLASSIFICATION,
)


def derive_seed(global_seed: int, key: str) -> int:
    """Stable 64-bit per-document seed; independent of platform hash randomization."""
    digest = hashlib.sha256(f"{global_seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class InjectionConfig:
    seed: int = 0
    error_distribution: dict[ErrorType, float] = field(
        default_factory=lambda: dict(DEFAULT_ERROR_DISTRIBUTION)
    )
    missing_rate: float = 0.10
    size_perturb_range: tuple[float, float] = (0.10, 0.30)
    hallucination_max_iou: float = 0.01
    split_n_range: tuple[int, int] = (2, 4)
    merge_proximity_factor: float = 1.5
    duplicate_size_jitter: float = 0.10
    duplicate_center_jitter: float = 0.10
    misclassification_co_rate: float = 0.08
    errors_per_doc: int = 1
    size_clearance_iou: float = 0.01
    hallucination_size_range: tuple[float, float] = (0.05, 0.30)
    max_attempts: int = 1000

    def validate(self) -> None:
        if not self.error_distribution:
            raise ConfigError("error_distribution must not be empty")
        if any(w < 0 for w in self.error_distribution.values()):
            raise ConfigError("error_distribution weights must be non-negative")
        if sum(self.error_distribution.values()) <= 0:
            raise ConfigError("error_distribution weights must sum to a positive value")
        for name in ("missing_rate", "hallucination_max_iou", "duplicate_size_jitter",
                     "duplicate_center_jitter", "misclassification_co_rate", "size_clearance_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.errors_per_doc < 0:
            raise ConfigError("errors_per_doc must be non-negative")
        if self.split_n_range[0] < 2 or self.split_n_range[0] > self.split_n_range[1]:
            raise ConfigError(f"split_n_range must be an ordered pair >= 2, got {self.split_n_range}")
        lo, hi = self.size_perturb_range
        if not (0 < lo <= hi < 1):
            raise ConfigError(f"size_perturb_range must satisfy 0 < lo <= hi < 1, got {self.size_perturb_range}")


@dataclass(frozen=True)
class PlannedAction:
    error_type: ErrorType
    target_ids: tuple[int, ...] = ()
    params: tuple[tuple[str, object], ...] = ()

    def param(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class InjectionSkip:
    error_type: ErrorType
    reason: str


@dataclass(frozen=True)
class InjectionPlan:
    """Replayable recipe: (plan, source document) determine the output exactly."""

    doc_id: str
    rng_seed: int
    actions: tuple[PlannedAction, ...] = ()
    skips: tuple[InjectionSkip, ...] = ()

    @property
    def requested_types(self) -> list[ErrorType]:
        return [a.error_type for a in self.actions] + [s.error_type for s in self.skips]


@dataclass
class InjectionResult:
    prediction: DocumentLayout
    annotation: ErrorAnnotation
    skips: list[InjectionSkip]


# ---------------------------------------------------------------------------
# geometry samplers


def sample_size_ratio(rng: np.random.Generator, config: InjectionConfig,
                      det: DetectorConfig = DEFAULT_DETECTOR_CONFIG) -> float:
    """Draw an area ratio strictly outside the detector's acceptance band.

    The linear perturbation range (10-30% per side by default) is mapped to
    area ratios, then clipped away from the band with a 0.05 margin so the
    result is always diagnosable as a size error.
    """
    lo, hi = config.size_perturb_range
    shrink = ((1 - hi) ** 2, det.size_ratio_low - 0.05)
    enlarge = (det.size_ratio_high + 0.05, (1 + hi) ** 2)
    if shrink[0] >= shrink[1] or enlarge[0] >= enlarge[1]:
        raise ConfigError(
            f"size_perturb_range {config.size_perturb_range} leaves no area ratio outside "
            f"the band [{det.size_ratio_low}, {det.size_ratio_high}]"
        )
    if rng.random() < 0.5:
        return float(rng.uniform(*shrink))
    return float(rng.uniform(*enlarge))


def _sample_size_box(
    box: BBox,
    other_boxes: list[BBox],
    page: tuple[float, float],
    rng: np.random.Generator,
    config: InjectionConfig,
    det: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    attempts: int = 50,
) -> BBox | None:
    for _ in range(attempts):
        r = sample_size_ratio(rng, config, det)
        s = math.sqrt(r)
        cand = clip_to_page(scale_about_center(box, s, s), *page)
        if cand is None:
            continue
        ratio = area(cand) / area(box)
        if det.size_ratio_low <= ratio <= det.size_ratio_high:
            continue  # page clamping pulled it back into the band
        if center_distance(cand, box) > det.size_center_tolerance * math.hypot(box.w, box.h):
            continue
        if any(iou(cand, ob) > config.size_clearance_iou for ob in other_boxes):
            continue
        return cand
    return None


def split_boxes(
    box: BBox,
    n: int,
    gap_total: float,
    width_weights: list[float],
    height_factors: list[float],
) -> list[BBox]:
    """Partition a box horizontally into n fragments with evenly spread gaps."""
    gap = gap_total / (n - 1)
    total_w = box.w - gap_total
    wsum = sum(width_weights)
    frags = []
    x = box.x
    for k in range(n):
        w = total_w * width_weights[k] / wsum
        h = box.h * height_factors[k]
        y = box.y + (box.h - h) / 2
        frags.append(BBox(x, y, w, h))
        x += w + gap
    return frags


def _sample_split_boxes(
    box: BBox,
    page: tuple[float, float],
    rng: np.random.Generator,
    config: InjectionConfig,
    det: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    attempts: int = 100,
) -> list[BBox] | None:
    n_lo, n_hi = config.split_n_range
    for _ in range(attempts):
        n = int(rng.integers(n_lo, n_hi + 1))
        gap_total = float(rng.uniform(0.02, 0.10)) * box.w
        weights = (1.0 + rng.uniform(-0.2, 0.2, size=n)).tolist()
        heights = (1.0 + rng.uniform(-0.1, 0.1, size=n)).tolist()
        if (box.w - gap_total) * min(weights) / sum(weights) < 0.5:
            continue  # sub-pixel fragment
        frags = [clip_to_page(f, *page) for f in split_boxes(box, n, gap_total, weights, heights)]
        if any(f is None for f in frags):
            continue
        ious = [iou(box, f) for f in frags]
        if all(det.split_min_iou <= v < det.split_max_iou for v in ious) and sum(ious) >= det.split_sum_iou:
            return frags
    return None


def _sample_duplicate_box(
    box: BBox,
    page: tuple[float, float],
    rng: np.random.Generator,
    config: InjectionConfig,
    det: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    attempts: int = 1000,
) -> BBox | None:
    sj = config.duplicate_size_jitter
    cj = config.duplicate_center_jitter
    for _ in range(attempts):
        sw = 1.0 + float(rng.uniform(-sj, sj))
        sh = 1.0 + float(rng.uniform(-sj, sj))
        dx = float(rng.uniform(-cj, cj)) * box.w
        dy = float(rng.uniform(-cj, cj)) * box.h
        cand = clip_to_page(translate(scale_about_center(box, sw, sh), dx, dy), *page)
        if cand is not None and iou(cand, box) >= det.duplicate_iou:
            return cand
    return None


def _sample_hallucination_box(
    boxes: list[BBox],
    page: tuple[float, float],
    rng: np.random.Generator,
    config: InjectionConfig,
) -> BBox | None:
    pw, ph = page
    lo, hi = config.hallucination_size_range
    for _ in range(config.max_attempts):
        w = float(rng.uniform(lo, hi)) * pw
        h = float(rng.uniform(lo, hi)) * ph
        if w >= pw or h >= ph:
            continue
        x = float(rng.uniform(0.0, pw - w))
        y = float(rng.uniform(0.0, ph - h))
        cand = BBox(x, y, w, h)
        if all(iou(cand, b) <= config.hallucination_max_iou for b in boxes):
            return cand
    return None


def _facing_axis(a: BBox, b: BBox) -> str | None:
    """Growth axis for a box pair: the axis along which they are separated
    while overlapping in extent on the other. None for diagonal neighbors."""
    x_gap = max(a.x, b.x) - min(a.x2, b.x2)
    y_gap = max(a.y, b.y) - min(a.y2, b.y2)
    if x_gap >= 0 and y_gap < 0:
        return "x"
    if y_gap >= 0 and x_gap < 0:
        return "y"
    return None


def _resolve_overlap_pair(
    doc: DocumentLayout,
    rng: np.random.Generator,
    config: InjectionConfig,
    target_id: int | None = None,
    pool: set[int] | None = None,
    det: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    max_partners: int = 8,
) -> tuple[int, int, BBox, BBox] | None:
    """Find a neighbor pair and mutual single-axis growth giving pair IoU at
    the overlap threshold without reaching any second GT at the existence
    level (which would read as a merge instead).

    Growing only one box cannot work: its overlap with the partner equals
    its overlap with the partner's ground-truth box, which is exactly the
    merge condition. Growing both confines the shared region to the gap.
    """
    by_id = {e.element_id: e for e in doc.elements}
    if pool is None:
        pool = set(by_id)
    if target_id is not None:
        targets = [target_id]
    else:
        targets = sorted(pool)
        rng.shuffle(targets)
    ratio_cap = det.size_ratio_high - 0.005
    scales = np.linspace(1.10, ratio_cap, 30)
    for a_id in targets:
        a = by_id[a_id]
        partners = sorted(
            (e for e in doc.elements if e.element_id in pool and e.element_id != a_id),
            key=lambda e: (center_distance(a.bbox, e.bbox), e.element_id),
        )[:max_partners]
        for b in partners:
            axis = _facing_axis(a.bbox, b.bbox)
            if axis is None:
                continue
            for c in scales:
                sx, sy = (float(c), 1.0) if axis == "x" else (1.0, float(c))
                ga = clip_to_page(scale_about_center(a.bbox, sx, sy), *doc.page_size)
                gb = clip_to_page(scale_about_center(b.bbox, sx, sy), *doc.page_size)
                if ga is None or gb is None:
                    continue
                if iou(ga, gb) < det.overlap_iou:
                    continue
                if any(
                    iou(ga, e.bbox) >= det.merge_iou
                    for e in doc.elements
                    if e.element_id != a_id
                ):
                    continue
                if any(
                    iou(gb, e.bbox) >= det.merge_iou
                    for e in doc.elements
                    if e.element_id != b.element_id
                ):
                    continue
                return (a_id, b.element_id, ga, gb)
    return None


def _resolve_merge_group(
    doc: DocumentLayout,
    rng: np.random.Generator,
    config: InjectionConfig,
    seed_id: int | None = None,
    pool: set[int] | None = None,
    det: DetectorConfig = DEFAULT_DETECTOR_CONFIG,
    max_members: int = 3,
) -> tuple[list[int], BBox] | None:
    """Pick same-category neighbors within the proximity radius and verify
    that their bounding rectangle still matches every member at the
    existence level (so the detector reads the result as a merge, with no
    member degraded to missing)."""
    by_id = {e.element_id: e for e in doc.elements}
    if pool is None:
        pool = set(by_id)
    if not doc.elements:
        return None
    mean_w = sum(e.bbox.w for e in doc.elements) / len(doc.elements)
    radius = config.merge_proximity_factor * mean_w
    if seed_id is not None:
        seeds = [seed_id]
    else:
        seeds = sorted(pool)
        rng.shuffle(seeds)
    for sid in seeds:
        seed = by_id[sid]
        mates = sorted(
            (
                e
                for e in doc.elements
                if e.element_id in pool
                and e.element_id != sid
                and e.category_id == seed.category_id
                and center_distance(seed.bbox, e.bbox) <= radius
            ),
            key=lambda e: (center_distance(seed.bbox, e.bbox), e.element_id),
        )
        if not mates:
            continue
        members = [seed] + mates[: max_members - 1]
        while len(members) >= 2:
            u = union_rect([m.bbox for m in members])
            if all(det.merge_iou <= iou(u, m.bbox) < det.duplicate_iou for m in members):
                return (sorted(m.element_id for m in members), u)
            members.pop()
    return None


# ---------------------------------------------------------------------------
# single-error operations


def inject_missing(doc: DocumentLayout, ids: list[int]) -> DocumentLayout:
    """Remove the given elements entirely."""
    wanted = set(ids)
    unknown = wanted - set(e.element_id for e in doc.elements)
    if unknown:
        raise ValidationError(f"{doc.doc_id}: cannot remove unknown element ids {sorted(unknown)}")
    return doc.with_elements([e for e in doc.elements if e.element_id not in wanted])


def inject_hallucination(
    doc: DocumentLayout,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
    category_id: int | None = None,
) -> tuple[DocumentLayout, int] | None:
    """Add a box in empty space; None when no placement clears every element."""
    config = config or InjectionConfig()
    cand = _sample_hallucination_box([e.bbox for e in doc.elements], doc.page_size, rng, config)
    if cand is None:
        return None
    if category_id is None:
        cats = sorted({e.category_id for e in doc.elements}) or [1]
        category_id = int(rng.choice(cats))
    new_id = _next_id(doc)
    out = doc.with_elements(
        doc.elements + [LayoutElement(new_id, cand, category_id, Source.GROUND_TRUTH)]
    )
    return out, new_id


def inject_size_error(
    doc: DocumentLayout,
    element_id: int,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
) -> DocumentLayout | None:
    config = config or InjectionConfig()
    el = doc.get(element_id)
    others = [e.bbox for e in doc.elements if e.element_id != element_id]
    cand = _sample_size_box(el.bbox, others, doc.page_size, rng, config)
    if cand is None:
        return None
    return _replace_box(doc, element_id, cand)


def inject_split(
    doc: DocumentLayout,
    element_id: int,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
) -> tuple[DocumentLayout, list[int]] | None:
    config = config or InjectionConfig()
    el = doc.get(element_id)
    frags = _sample_split_boxes(el.bbox, doc.page_size, rng, config)
    if frags is None:
        return None
    next_id = _next_id(doc)
    new_elements = [e for e in doc.elements if e.element_id != element_id]
    frag_ids = []
    for k, f in enumerate(frags):
        fid = next_id + k
        frag_ids.append(fid)
        new_elements.append(LayoutElement(fid, f, el.category_id, el.source))
    return doc.with_elements(new_elements), frag_ids


def inject_merge(
    doc: DocumentLayout,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
    seed_id: int | None = None,
) -> tuple[DocumentLayout, int, list[int]] | None:
    config = config or InjectionConfig()
    resolved = _resolve_merge_group(doc, rng, config, seed_id=seed_id)
    if resolved is None:
        return None
    member_ids, u = resolved
    category_id = doc.get(member_ids[0]).category_id
    new_id = _next_id(doc)
    new_elements = [e for e in doc.elements if e.element_id not in set(member_ids)]
    new_elements.append(LayoutElement(new_id, u, category_id, Source.GROUND_TRUTH))
    return doc.with_elements(new_elements), new_id, member_ids


def inject_overlap(
    doc: DocumentLayout,
    element_id: int,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
) -> tuple[DocumentLayout, int] | None:
    config = config or InjectionConfig()
    resolved = _resolve_overlap_pair(doc, rng, config, target_id=element_id)
    if resolved is None:
        return None
    a_id, b_id, ga, gb = resolved
    out = _replace_box(_replace_box(doc, a_id, ga), b_id, gb)
    return out, b_id


def inject_duplicate(
    doc: DocumentLayout,
    element_id: int,
    rng: np.random.Generator,
    config: InjectionConfig | None = None,
    copies: int = 1,
) -> tuple[DocumentLayout, list[int]] | None:
    config = config or InjectionConfig()
    el = doc.get(element_id)
    new_elements = list(doc.elements)
    next_id = _next_id(doc)
    copy_ids = []
    for k in range(copies):
        cand = _sample_duplicate_box(el.bbox, doc.page_size, rng, config)
        if cand is None:
            return None
        cid = next_id + k
        copy_ids.append(cid)
        new_elements.append(LayoutElement(cid, cand, el.category_id, el.source))
    return doc.with_elements(new_elements), copy_ids


def inject_misclassification(
    doc: DocumentLayout,
    element_id: int,
    rng: np.random.Generator,
    categories: list[Category],
) -> DocumentLayout | None:
    el = doc.get(element_id)
    others = sorted(c.id for c in categories if c.id != el.category_id)
    if not others:
        return None
    new_cat = int(rng.choice(others))
    return doc.with_elements(
        [replace(e, category_id=new_cat) if e.element_id == element_id else e for e in doc.elements]
    )


def _next_id(doc: DocumentLayout) -> int:
    return max((e.element_id for e in doc.elements), default=0) + 1


def _replace_box(doc: DocumentLayout, element_id: int, box: BBox) -> DocumentLayout:
    return doc.with_elements(
        [replace(e, bbox=box) if e.element_id == element_id else e for e in doc.elements]
    )


# ---------------------------------------------------------------------------
# planning


class _PlanBuilder:
    def __init__(
        self,
        doc: DocumentLayout,
        config: InjectionConfig,
        rng: np.random.Generator,
        categories: list[Category] | None,
    ):
        self.doc = doc
        self.config = config
        self.rng = rng
        self.pool: set[int] = set(doc.element_ids())
        self.actions: list[PlannedAction] = []
        self.skips: list[InjectionSkip] = []
        if categories:
            self.category_ids = sorted({c.id for c in categories})
        else:
            self.category_ids = sorted({e.category_id for e in doc.elements})

    def _skip(self, t: ErrorType, reason: str) -> None:
        self.skips.append(InjectionSkip(t, reason))

    def _pick(self) -> int:
        tid = int(self.rng.choice(sorted(self.pool)))
        self.pool.remove(tid)
        return tid

    def add(self, t: ErrorType, record_skip: bool = True) -> None:
        cfg = self.config
        if t is ErrorType.HALLUCINATION:
            cat = int(self.rng.choice(self.category_ids)) if self.category_ids else 1
            self.actions.append(PlannedAction(t, (), (("category_id", cat),)))
            return
        if not self.pool:
            if record_skip:
                self._skip(t, "no untargeted elements remain")
            return
        if t is ErrorType.MISSING:
            k = max(1, round(cfg.missing_rate * len(self.doc.elements)))
            k = min(k, len(self.pool))
            targets = sorted(
                int(v) for v in self.rng.choice(sorted(self.pool), size=k, replace=False)
            )
            self.pool.difference_update(targets)
            self.actions.append(PlannedAction(t, tuple(targets)))
        elif t is ErrorType.MERGE:
            resolved = _resolve_merge_group(self.doc, self.rng, cfg, pool=self.pool)
            if resolved is None:
                if record_skip:
                    self._skip(t, "needs at least 2 same-category elements within proximity")
                return
            members, u = resolved
            self.pool.difference_update(members)
            self.actions.append(
                PlannedAction(
                    t,
                    tuple(members),
                    (
                        ("union", (u.x, u.y, u.w, u.h)),
                        ("category_id", self.doc.get(members[0]).category_id),
                    ),
                )
            )
        elif t is ErrorType.OVERLAP:
            resolved = _resolve_overlap_pair(self.doc, self.rng, cfg, pool=self.pool)
            if resolved is None:
                if record_skip:
                    self._skip(t, "no neighbor admits a detectable mutual overlap")
                return
            a_id, b_id, ga, gb = resolved
            self.pool.difference_update((a_id, b_id))
            self.actions.append(
                PlannedAction(
                    t,
                    (a_id, b_id),
                    (("box_a", (ga.x, ga.y, ga.w, ga.h)), ("box_b", (gb.x, gb.y, gb.w, gb.h))),
                )
            )
        elif t is ErrorType.MISCLASSIFICATION:
            if len(self.category_ids) < 2:
                if record_skip:
                    self._skip(t, "dataset has a single category, no other valid label")
                return
            tid = self._pick()
            current = self.doc.get(tid).category_id
            new_cat = int(self.rng.choice([c for c in self.category_ids if c != current]))
            self.actions.append(PlannedAction(t, (tid,), (("new_category", new_cat),)))
        elif t is ErrorType.DUPLICATE:
            self.actions.append(PlannedAction(t, (self._pick(),), (("copies", 1),)))
        else:  # SIZE, SPLIT
            self.actions.append(PlannedAction(t, (self._pick(),)))

    def maybe_co_misclassify(self) -> None:
        structural = any(a.error_type is not ErrorType.MISCLASSIFICATION for a in self.actions)
        if not structural or self.config.misclassification_co_rate <= 0:
            return
        if self.rng.random() >= self.config.misclassification_co_rate:
            return
        if self.pool and len(self.category_ids) >= 2:
            self.add(ErrorType.MISCLASSIFICATION, record_skip=False)

    def build(self, rng_seed: int) -> InjectionPlan:
        return InjectionPlan(
            doc_id=self.doc.doc_id,
            rng_seed=rng_seed,
            actions=tuple(self.actions),
            skips=tuple(self.skips),
        )


def sample_plan(
    doc: DocumentLayout,
    config: InjectionConfig,
    rng: np.random.Generator,
    categories: list[Category] | None = None,
) -> InjectionPlan:
    """Draw error types from the configured distribution and pick targets.

    Targets are sampled without replacement so no element is structurally
    modified twice. Misclassification may additionally be co-injected on an
    untouched element at the configured rate.
    """
    config.validate()
    plan_seed = int(rng.integers(0, 2**63))
    builder = _PlanBuilder(doc, config, rng, categories)

    types = [t for t in ErrorType if config.error_distribution.get(t, 0.0) > 0]
    weights = np.array([config.error_distribution[t] for t in types], dtype=np.float64)
    for _ in range(config.errors_per_doc):
        if doc.elements:
            eligible, p = types, weights
        else:
            if ErrorType.HALLUCINATION not in types:
                break
            eligible, p = [ErrorType.HALLUCINATION], np.array([1.0])
        drawn = eligible[int(rng.choice(len(eligible), p=p / p.sum()))]
        builder.add(drawn)
    builder.maybe_co_misclassify()
    return builder.build(plan_seed)


def plan_single(
    doc: DocumentLayout,
    error_type: ErrorType,
    config: InjectionConfig,
    rng: np.random.Generator,
    categories: list[Category] | None = None,
) -> InjectionPlan:
    """Plan exactly one error of the given type (plus possible co-injected
    misclassification when the type is structural)."""
    config.validate()
    plan_seed = int(rng.integers(0, 2**63))
    builder = _PlanBuilder(doc, config, rng, categories)
    builder.add(error_type)
    if error_type is not ErrorType.MISCLASSIFICATION:
        builder.maybe_co_misclassify()
    return builder.build(plan_seed)


# ---------------------------------------------------------------------------
# execution


def inject(
    doc: DocumentLayout,
    plan: InjectionPlan,
    config: InjectionConfig | None = None,
) -> InjectionResult:
    """Execute a plan against a clean layout, producing the erroneous
    "prediction" and the annotation of exactly the successfully applied types."""
    if plan.doc_id != doc.doc_id:
        raise ValidationError(f"plan is for {plan.doc_id!r}, document is {doc.doc_id!r}")
    config = config or InjectionConfig()
    rng = make_rng(plan.rng_seed)
    working: dict[int, LayoutElement] = {e.element_id: e for e in sorted(doc.elements, key=lambda e: e.element_id)}
    element_errors: dict[int, ErrorType] = {}
    missing_ids: list[int] = []
    skips: list[InjectionSkip] = list(plan.skips)
    next_id = _next_id(doc)
    page = doc.page_size

    order = {t: i for i, t in enumerate(EXECUTION_ORDER)}
    for action in sorted(enumerate(plan.actions), key=lambda p: (order[p[1].error_type], p[0])):
        action = action[1]
        t = action.error_type
        if t is ErrorType.MISSING:
            for tid in action.target_ids:
                working.pop(tid)
            missing_ids.extend(action.target_ids)
        elif t is ErrorType.MERGE:
            u = BBox(*action.param("union"))
            for tid in action.target_ids:
                working.pop(tid)
            working[next_id] = LayoutElement(next_id, u, int(action.param("category_id")), Source.GROUND_TRUTH)
            element_errors[next_id] = t
            next_id += 1
        elif t is ErrorType.SPLIT:
            tid = action.target_ids[0]
            el = working[tid]
            frags = _sample_split_boxes(el.bbox, page, rng, config)
            if frags is None:
                skips.append(InjectionSkip(t, "no fragmentation satisfied the split predicate"))
                continue
            working.pop(tid)
            for f in frags:
                working[next_id] = LayoutElement(next_id, f, el.category_id, el.source)
                element_errors[next_id] = t
                next_id += 1
        elif t is ErrorType.SIZE:
            tid = action.target_ids[0]
            el = working[tid]
            others = [e.bbox for e in working.values() if e.element_id != tid]
            cand = _sample_size_box(el.bbox, others, page, rng, config)
            if cand is None:
                skips.append(InjectionSkip(t, "no admissible size perturbation clear of neighbors"))
                continue
            working[tid] = replace(el, bbox=cand)
            element_errors[tid] = t
        elif t is ErrorType.OVERLAP:
            a_id, b_id = action.target_ids
            working[a_id] = replace(working[a_id], bbox=BBox(*action.param("box_a")))
            working[b_id] = replace(working[b_id], bbox=BBox(*action.param("box_b")))
            element_errors[a_id] = t
            element_errors[b_id] = t
        elif t is ErrorType.DUPLICATE:
            tid = action.target_ids[0]
            el = working[tid]
            failed = False
            for _ in range(int(action.param("copies", 1))):
                cand = _sample_duplicate_box(el.bbox, page, rng, config)
                if cand is None:
                    failed = True
                    break
                working[next_id] = LayoutElement(next_id, cand, el.category_id, el.source)
                element_errors[next_id] = t
                next_id += 1
            if failed:
                skips.append(InjectionSkip(t, "could not jitter a copy above the duplicate IoU"))
        elif t is ErrorType.HALLUCINATION:
            cand = _sample_hallucination_box([e.bbox for e in working.values()], page, rng, config)
            if cand is None:
                skips.append(InjectionSkip(t, "no clear region left on the page"))
                continue
            working[next_id] = LayoutElement(
                next_id, cand, int(action.param("category_id", 1)), Source.GROUND_TRUTH
            )
            element_errors[next_id] = t
            next_id += 1
        elif t is ErrorType.MISCLASSIFICATION:
            tid = action.target_ids[0]
            working[tid] = replace(working[tid], category_id=int(action.param("new_category")))
            element_errors[tid] = t

    prediction = DocumentLayout(
        doc_id=doc.doc_id,
        page_size=doc.page_size,
        elements=[
            replace(e, source=Source.PREDICTION)
            for e in sorted(working.values(), key=lambda e: e.element_id)
        ],
        image_path=doc.image_path,
        coco_image_id=doc.coco_image_id,
    )
    annotation = ErrorAnnotation.build(doc.doc_id, element_errors, missing_ids)
    return InjectionResult(prediction=prediction, annotation=annotation, skips=skips)
