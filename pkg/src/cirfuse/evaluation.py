"""Recall-based evaluation over a query set.

Ranks are computed against the full candidate pool by counting items that
order strictly before the target under (score desc, item ID asc); this gives
the same rank as sorting without materializing the permutation. A query's
target is "recalled at K" when its rank is at most K.

Query sets whose records carry candidate subsets additionally get subset
recalls: the target is ranked only within its record's subset, always minus
the reference image (the reference is never a valid answer), minus any other
excluded items.

Metric keys are flat strings: "R@10" for the full pool, "dress/R@10" for one
category, "Average/R@10" for the unweighted mean across categories, and
"Rsubset@1" for subset recall.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from cirfuse.fusion import DegenerateQueryError, RetrievalParams, compose_query
from cirfuse.ranking import RankedList, exclusion_rows, fuse_scores, score_candidates
from cirfuse.store import GalleryIndex, QueryRecord, QuerySet

DEFAULT_KS = (1, 5, 10, 50)
DEFAULT_SUBSET_KS = (1, 2, 3)
UNCATEGORIZED = "uncategorized"
AVERAGE = "Average"


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    split: str
    embedder_id: str
    num_queries: int
    params: RetrievalParams
    ks: tuple[int, ...]
    subset_ks: tuple[int, ...]
    categories: tuple[str, ...]
    has_subsets: bool
    per_metric: dict[str, float]
    failed_queries: tuple[str, ...]


def recall_at_k(
    rank_lists: Sequence[RankedList], targets: Mapping[str, str], k: int
) -> float:
    """Fraction of rank lists whose target appears within the first k entries."""
    if not rank_lists:
        raise ValueError("recall over zero rank lists is undefined")
    hits = 0
    for ranked in rank_lists:
        if ranked.query_id not in targets:
            raise ValueError(f"no target mapping for query {ranked.query_id!r}")
        target = targets[ranked.query_id]
        if target in ranked.ids()[:k]:
            hits += 1
    return hits / len(rank_lists)


def target_rank(
    gallery: GalleryIndex,
    scores: np.ndarray,
    target_row: int,
    excluded_rows: frozenset[int] = frozenset(),
) -> int:
    """1-based rank of the target under (score desc, item ID asc)."""
    target_score = scores[target_row]
    target_id_rank = gallery.id_rank[target_row]
    better = (scores > target_score) | (
        (scores == target_score) & (gallery.id_rank < target_id_rank)
    )
    for row in excluded_rows:
        better[row] = False
    return 1 + int(np.count_nonzero(better))


def subset_rank(
    gallery: GalleryIndex,
    scores: np.ndarray,
    record: QueryRecord,
    excluded_rows: frozenset[int] = frozenset(),
) -> int | None:
    """Rank of the target within its record's subset.

    The reference image is always dropped from the subset candidates; further
    excluded rows are dropped too. Returns None when the target itself is
    excluded.
    """
    target_row = gallery.row_of(record.target_id)
    if target_row in excluded_rows:
        return None
    reference_row = gallery.row_of(record.reference_id)
    target_score = scores[target_row]
    target_id_rank = gallery.id_rank[target_row]
    rank = 1
    for item_id in record.subset_ids:
        row = gallery.row_of(item_id)
        if row == target_row or row == reference_row or row in excluded_rows:
            continue
        if scores[row] > target_score or (
            scores[row] == target_score and gallery.id_rank[row] < target_id_rank
        ):
            rank += 1
    return rank


def subset_recall(
    gallery: GalleryIndex,
    scores: np.ndarray,
    record: QueryRecord,
    k: int,
    excluded_rows: frozenset[int] = frozenset(),
) -> int:
    """1 iff the target lands within the top k of its subset ranking."""
    if record.subset_ids is None:
        raise ValueError(f"query {record.query_id!r} has no subset_ids")
    rank = subset_rank(gallery, scores, record, excluded_rows)
    return 1 if rank is not None and rank <= k else 0


class MetricAccumulator:
    """Streams per-query outcomes into recall counters."""

    def __init__(self, ks: tuple[int, ...], subset_ks: tuple[int, ...]):
        self.ks = tuple(ks)
        self.subset_ks = tuple(subset_ks)
        self.total = 0
        self.hits = {k: 0 for k in self.ks}
        self.subset_total = 0
        self.subset_hits = {k: 0 for k in self.subset_ks}
        self.category_hits: dict[str, dict[int, int]] = {}
        self.category_totals: dict[str, int] = {}
        self.failed: list[str] = []
        self._any_category = False

    def add(
        self,
        gallery: GalleryIndex,
        record: QueryRecord,
        scores: np.ndarray | None,
        excluded_rows: frozenset[int],
    ) -> None:
        """Record one query; scores=None marks a failed (always-miss) query."""
        self.total += 1
        if record.category:
            self._any_category = True
        bucket = record.category or UNCATEGORIZED
        cat_hits = self.category_hits.setdefault(bucket, {k: 0 for k in self.ks})
        self.category_totals[bucket] = self.category_totals.get(bucket, 0) + 1
        if record.subset_ids is not None:
            self.subset_total += 1

        if scores is None:
            self.failed.append(record.query_id)
            return
        target_row = gallery.row_of(record.target_id)
        if target_row in excluded_rows:
            return
        rank = target_rank(gallery, scores, target_row, excluded_rows)
        for k in self.ks:
            if rank <= k:
                self.hits[k] += 1
                cat_hits[k] += 1
        if record.subset_ids is not None:
            s_rank = subset_rank(gallery, scores, record, excluded_rows)
            if s_rank is not None:
                for k in self.subset_ks:
                    if s_rank <= k:
                        self.subset_hits[k] += 1

    def finalize(self, gallery: GalleryIndex, params: RetrievalParams) -> EvalReport:
        per_metric: dict[str, float] = {}
        for k in self.ks:
            per_metric[f"R@{k}"] = self.hits[k] / self.total if self.total else 0.0
        categories: tuple[str, ...] = ()
        if self._any_category:
            categories = tuple(sorted(self.category_hits))
            for name in categories:
                denom = self.category_totals[name]
                for k in self.ks:
                    per_metric[f"{name}/R@{k}"] = self.category_hits[name][k] / denom
            for k in self.ks:
                key = f"R@{k}"
                per_metric[f"{AVERAGE}/{key}"] = sum(
                    per_metric[f"{name}/{key}"] for name in categories
                ) / len(categories)
        if self.subset_total:
            for k in self.subset_ks:
                per_metric[f"Rsubset@{k}"] = self.subset_hits[k] / self.subset_total
        return EvalReport(
            dataset=gallery.meta.dataset,
            split=gallery.meta.split,
            embedder_id=gallery.meta.embedder_id,
            num_queries=self.total,
            params=params,
            ks=self.ks,
            subset_ks=self.subset_ks,
            categories=categories,
            has_subsets=self.subset_total > 0,
            per_metric=per_metric,
            failed_queries=tuple(self.failed),
        )


def evaluate(
    gallery: GalleryIndex,
    queries: QuerySet,
    params: RetrievalParams,
    ks: tuple[int, ...] = DEFAULT_KS,
    subset_ks: tuple[int, ...] = DEFAULT_SUBSET_KS,
) -> EvalReport:
    """Score every query and fold the outcomes into an EvalReport."""
    acc = MetricAccumulator(ks, subset_ks)
    for i, record in enumerate(queries.records):
        reference_row = gallery.row_of(record.reference_id)
        excluded = exclusion_rows(gallery, params, reference_row)
        try:
            q, qnorm = compose_query(
                gallery.image_vectors.row(reference_row),
                queries.modifier_vectors.data[i],
                params.alpha,
            )
        except DegenerateQueryError:
            acc.add(gallery, record, None, excluded)
            continue
        q2i, q2c = score_candidates(gallery, q, qnorm, params.caption_subset)
        fused = fuse_scores(q2i, q2c, params.beta)
        acc.add(gallery, record, fused, excluded)
    return acc.finalize(gallery, params)
