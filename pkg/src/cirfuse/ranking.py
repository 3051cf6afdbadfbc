"""Candidate scoring and top-K selection.

Two channels per gallery item: the cosine between the composed query and the
item's image embedding, and the mean cosine against a subset of its caption
embeddings. The final score blends them with weight beta. Ties are broken by
ascending item ID, which makes rankings a total order and output stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from cirfuse._kernels import caption_mean_cosines, dot_rows
from cirfuse.fusion import RetrievalParams, compose_query
from cirfuse.store import GalleryIndex


@dataclass(frozen=True)
class RankedItem:
    item_id: str
    score: float


@dataclass(frozen=True)
class RankedList:
    query_id: str
    items: tuple[RankedItem, ...]

    def ids(self) -> tuple[str, ...]:
        return tuple(entry.item_id for entry in self.items)


def caption_offsets(gallery: GalleryIndex, caption_subset: tuple[int, ...] | None) -> np.ndarray:
    """Map 1-based caption positions to ascending row offsets within an item block."""
    r = gallery.captions_per_item
    if caption_subset is None:
        return np.arange(r, dtype=np.int64)
    if caption_subset[-1] > r:
        raise ValueError(
            f"caption position {caption_subset[-1]} out of range: gallery has "
            f"{r} captions per item"
        )
    return np.asarray([p - 1 for p in caption_subset], dtype=np.int64)


def score_candidates(
    gallery: GalleryIndex,
    q: np.ndarray,
    qnorm: float,
    caption_subset: tuple[int, ...] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Clamped cosine channels (query-to-image, query-to-captions) for all items."""
    dots = dot_rows(gallery.image_vectors.data, q)
    q2i = np.clip(dots / qnorm, -1.0, 1.0)
    offsets = caption_offsets(gallery, caption_subset)
    q2c = caption_mean_cosines(
        gallery.caption_vectors.data,
        q,
        qnorm,
        gallery.captions_per_item,
        offsets,
        gallery.num_items,
    )
    return q2i, q2c


def fuse_scores(q2i: np.ndarray, q2c: np.ndarray, beta: float) -> np.ndarray:
    return (1.0 - beta) * q2i + beta * q2c


def exclusion_rows(
    gallery: GalleryIndex, params: RetrievalParams, reference_row: int | None
) -> frozenset[int]:
    rows = {gallery.row_of(item_id) for item_id in params.exclude_ids}
    if params.exclude_reference and reference_row is not None:
        rows.add(reference_row)
    return frozenset(rows)


def top_k(
    gallery: GalleryIndex,
    scores: np.ndarray,
    k: int,
    excluded_rows: Iterable[int] = (),
) -> tuple[RankedItem, ...]:
    """Best k items by (score desc, item ID asc), skipping excluded rows."""
    order = np.lexsort((gallery.id_rank, -scores))
    excluded = frozenset(excluded_rows)
    if excluded:
        picked = []
        for row in order:
            row = int(row)
            if row in excluded:
                continue
            picked.append(row)
            if len(picked) == k:
                break
    else:
        picked = [int(row) for row in order[:k]]
    return tuple(RankedItem(gallery.items[row], float(scores[row])) for row in picked)


def retrieve(
    gallery: GalleryIndex,
    reference_id: str,
    modifier: np.ndarray,
    params: RetrievalParams,
    query_id: str | None = None,
) -> RankedList:
    """One full retrieval pass: compose, score both channels, fuse, rank."""
    reference_row = gallery.row_of(reference_id)
    q, qnorm = compose_query(gallery.image_vectors.row(reference_row), modifier, params.alpha)
    q2i, q2c = score_candidates(gallery, q, qnorm, params.caption_subset)
    fused = fuse_scores(q2i, q2c, params.beta)
    excluded = exclusion_rows(gallery, params, reference_row)
    items = top_k(gallery, fused, params.k, excluded)
    return RankedList(query_id=query_id if query_id is not None else reference_id, items=items)
