"""Axis-aligned rectangle arithmetic in page pixel coordinates.

Boxes are stored as (x, y, w, h) with (x, y) the top-left corner, matching
the COCO bbox convention, and converted to corner form internally where an
intersection is needed. All functions are pure; callers may use them from
any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """A non-degenerate axis-aligned rectangle. Extents must be positive and finite."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be a finite number, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"BBox extents must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_xywh(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]


def area(b: BBox) -> float:
    return b.w * b.h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, in [0, 1].

    Boxes that are disjoint or touch only along an edge score exactly 0,
    so comparisons against strict-positive thresholds are deterministic.
    """
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    if ix <= 0:
        return 0.0
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (area(a) + area(b) - inter)


def center(b: BBox) -> tuple[float, float]:
    return (b.x + b.w / 2, b.y + b.h / 2)


def center_distance(a: BBox, b: BBox) -> float:
    ax, ay = center(a)
    bx, by = center(b)
    return math.hypot(ax - bx, ay - by)


def diagonal(b: BBox) -> float:
    return math.hypot(b.w, b.h)


def union_rect(boxes: list[BBox]) -> BBox:
    """Smallest axis-aligned rectangle containing every input box."""
    if not boxes:
        raise ValueError("union_rect needs at least one box")
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def scale_about_center(b: BBox, sx: float, sy: float) -> BBox:
    """Rescale a box around its center point by per-axis linear factors."""
    cx, cy = center(b)
    w = b.w * sx
    h = b.h * sy
    return BBox(cx - w / 2, cy - h / 2, w, h)


def translate(b: BBox, dx: float, dy: float) -> BBox:
    return BBox(b.x + dx, b.y + dy, b.w, b.h)


def clip_to_page(b: BBox, page_w: float, page_h: float) -> BBox | None:
    """Intersect a box with the page rectangle; None when nothing remains."""
    x1 = max(b.x, 0.0)
    y1 = max(b.y, 0.0)
    x2 = min(b.x2, page_w)
    y2 = min(b.y2, page_h)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)


def pairwise_iou(rows: list[BBox], cols: list[BBox]) -> np.ndarray:
    """Dense IoU matrix [len(rows) x len(cols)].

    Entries agree bit-for-bit with iou() on the same pair: the vectorized
    arithmetic uses the same operation order.
    """
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)), dtype=np.float64)
    rx1 = np.array([b.x for b in rows])
    ry1 = np.array([b.y for b in rows])
    rx2 = np.array([b.x2 for b in rows])
    ry2 = np.array([b.y2 for b in rows])
    cx1 = np.array([b.x for b in cols])
    cy1 = np.array([b.y for b in cols])
    cx2 = np.array([b.x2 for b in cols])
    cy2 = np.array([b.y2 for b in cols])

    ix = np.minimum(rx2[:, None], cx2[None, :]) - np.maximum(rx1[:, None], cx1[None, :])
    iy = np.minimum(ry2[:, None], cy2[None, :]) - np.maximum(ry1[:, None], cy1[None, :])
    pos = (ix > 0) & (iy > 0)
    inter = np.where(pos, ix * iy, 0.0)
    ra = np.array([area(b) for b in rows])
    ca = np.array([area(b) for b in cols])
    denom = ra[:, None] + ca[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, denom, out=out, where=pos)
    return out
