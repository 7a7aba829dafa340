"""Synthetic clean-layout generation for tests, demos, and scale runs.

Pages are laid out on a jittered grid with some cells left empty, a page
margin, and a free band at the bottom, which is roughly how real document
pages distribute whitespace. Boxes never overlap, neighbors are axis
aligned with narrow gutters, and every document gets a mix of categories.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import BBox
from .injector import derive_seed, make_rng
from .model import Category, DocumentLayout, LayoutElement, Source, save_coco

DEFAULT_CATEGORIES = [
    Category(1, "text"),
    Category(2, "title"),
    Category(3, "table"),
    Category(4, "figure"),
]

_CATEGORY_WEIGHTS = np.array([0.55, 0.20, 0.15, 0.10])


def random_layout(
    doc_id: str,
    seed: int,
    n_min: int = 3,
    n_max: int = 30,
    page: tuple[float, float] = (1000.0, 1400.0),
    categories: list[Category] | None = None,
) -> DocumentLayout:
    """A clean document layout with disjoint grid-placed elements."""
    rng = make_rng(seed)
    categories = categories or DEFAULT_CATEGORIES
    pw, ph = page
    n = int(rng.integers(n_min, n_max + 1))

    # content area: side margins plus a free band at the bottom
    x0, x1 = 0.04 * pw, 0.96 * pw
    y0, y1 = 0.03 * ph, 0.76 * ph

    capacity = max(n + 1, math.ceil(n * 1.3))
    cols = int(rng.integers(1, 5))
    rows = math.ceil(capacity / cols)
    if rows > 20:
        cols = math.ceil(capacity / 20)
        rows = math.ceil(capacity / cols)
    cell_w = (x1 - x0) / cols
    cell_h = (y1 - y0) / rows

    cells = [(r, c) for r in range(rows) for c in range(cols)]
    rng.shuffle(cells)
    occupied = sorted(cells[:n])

    weights = _CATEGORY_WEIGHTS[: len(categories)]
    weights = weights / weights.sum()
    cat_ids = [c.id for c in categories]

    elements = []
    for idx, (r, c) in enumerate(occupied):
        pad_l = max(1.0, cell_w * float(rng.uniform(0.01, 0.04)))
        pad_r = max(1.0, cell_w * float(rng.uniform(0.01, 0.04)))
        pad_t = max(1.0, cell_h * float(rng.uniform(0.01, 0.04)))
        pad_b = max(1.0, cell_h * float(rng.uniform(0.01, 0.04)))
        x = x0 + c * cell_w + pad_l
        y = y0 + r * cell_h + pad_t
        w = cell_w - pad_l - pad_r
        h = cell_h - pad_t - pad_b
        cat = int(rng.choice(cat_ids, p=weights))
        elements.append(
            LayoutElement(
                element_id=idx + 1,
                bbox=BBox(float(x), float(y), float(w), float(h)),
                category_id=cat,
                source=Source.GROUND_TRUTH,
            )
        )
    return DocumentLayout(doc_id=doc_id, page_size=page, elements=elements)


def random_corpus(
    n_docs: int,
    seed: int,
    categories: list[Category] | None = None,
    **layout_kwargs,
) -> tuple[list[DocumentLayout], list[Category]]:
    categories = categories or DEFAULT_CATEGORIES
    docs = [
        random_layout(f"doc{i:04d}", derive_seed(seed, f"doc{i:04d}"), categories=categories, **layout_kwargs)
        for i in range(n_docs)
    ]
    return docs, categories


def write_synthetic_coco(path, n_docs: int, seed: int, **layout_kwargs) -> None:
    """Emit a COCO-style file of clean synthetic layouts."""
    docs, categories = random_corpus(n_docs, seed, **layout_kwargs)
    save_coco(docs, categories, path)
