"""Batch experiment drivers: benchmark runs, grid sweeps, caption ablations.

The sweeps reuse partial results instead of recomputing from scratch: the
composed query and both similarity channels depend on alpha and the caption
subset but not on beta, so a grid visits each (query, alpha) once and fuses
per beta; an ablation shares the composed query and image channel across
subsets. Every cell is nevertheless bit-identical to a standalone benchmark
at the same parameters, because the per-cell arithmetic is the same ops in
the same order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from cirfuse import figures, reporting
from cirfuse._kernels import set_threads
from cirfuse.evaluation import (
    DEFAULT_KS,
    DEFAULT_SUBSET_KS,
    EvalReport,
    MetricAccumulator,
)
from cirfuse.fusion import DegenerateQueryError, RetrievalParams, compose_query
from cirfuse.ranking import (
    RankedList,
    exclusion_rows,
    fuse_scores,
    score_candidates,
    top_k,
)
from cirfuse.store import GalleryIndex, QuerySet, load_gallery, load_queries


def default_grid() -> tuple[float, ...]:
    return tuple(i / 20 for i in range(21))


def default_ablation_subsets(captions_per_item: int) -> tuple[tuple[int, ...], ...]:
    """All non-empty caption subsets, shortest first then lexicographic."""
    if captions_per_item > 4:
        raise ValueError(
            f"{2 ** captions_per_item - 1} subsets is too many to ablate by default; "
            "pass explicit subsets"
        )
    positions = range(1, captions_per_item + 1)
    subsets: list[tuple[int, ...]] = []
    for mask in range(1, 2**captions_per_item):
        subsets.append(tuple(p for p in positions if mask & (1 << (p - 1))))
    subsets.sort(key=lambda s: (len(s), s))
    return tuple(subsets)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a batch run needs; each driver reads the fields it uses."""

    pairs: tuple[tuple[Path, Path], ...]
    out_dir: Path
    alpha: float = 0.8
    beta: float = 0.1
    k: int = 50
    alphas: tuple[float, ...] = field(default_factory=default_grid)
    betas: tuple[float, ...] = field(default_factory=default_grid)
    ks: tuple[int, ...] = DEFAULT_KS
    subset_ks: tuple[int, ...] = DEFAULT_SUBSET_KS
    caption_subset: tuple[int, ...] | None = None
    ablation_subsets: tuple[tuple[int, ...], ...] | None = None
    exclude_reference: bool = False
    metrics: tuple[str, ...] | None = None
    threads: int = 1

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("at least one gallery/queries pair is required")
        for grid, name in ((self.alphas, "alpha"), (self.betas, "beta")):
            if not grid:
                raise ValueError(f"{name} grid must not be empty")
            for value in grid:
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"{name} grid value {value} outside [0, 1]")

    def params(self) -> RetrievalParams:
        return RetrievalParams(
            alpha=self.alpha,
            beta=self.beta,
            k=self.k,
            caption_subset=self.caption_subset,
            exclude_reference=self.exclude_reference,
        )


@dataclass(frozen=True)
class HeatmapTable:
    """Grid of one metric over (beta rows, alpha columns)."""

    metric: str
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.values) != len(self.betas):
            raise ValueError(
                f"{len(self.values)} rows for {len(self.betas)} beta values"
            )
        for row in self.values:
            if len(row) != len(self.alphas):
                raise ValueError(
                    f"row of {len(row)} cells for {len(self.alphas)} alpha values"
                )

    @property
    def cells(self) -> int:
        return len(self.alphas) * len(self.betas)


def load_pair(gallery_path: Path, queries_path: Path) -> tuple[GalleryIndex, QuerySet]:
    gallery = load_gallery(gallery_path)
    queries = load_queries(queries_path, gallery)
    return gallery, queries


def bench_pair(
    gallery: GalleryIndex,
    queries: QuerySet,
    params: RetrievalParams,
    ks: tuple[int, ...] = DEFAULT_KS,
    subset_ks: tuple[int, ...] = DEFAULT_SUBSET_KS,
) -> tuple[EvalReport, list[dict]]:
    """One full benchmark: metrics plus persisted-rank-list records."""
    acc = MetricAccumulator(ks, subset_ks)
    records = []
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
            failed = reporting.ranklist_record(
                RankedList(record.query_id, ()), record.reference_id, record.target_id
            )
            failed["failed"] = True
            records.append(failed)
            continue
        q2i, q2c = score_candidates(gallery, q, qnorm, params.caption_subset)
        fused = fuse_scores(q2i, q2c, params.beta)
        acc.add(gallery, record, fused, excluded)
        ranked = RankedList(record.query_id, top_k(gallery, fused, params.k, excluded))
        records.append(
            reporting.ranklist_record(ranked, record.reference_id, record.target_id)
        )
    return acc.finalize(gallery, params), records


def default_metrics(report: EvalReport) -> tuple[str, ...]:
    def pick(ks: tuple[int, ...], preferred: int) -> int:
        return preferred if preferred in ks else ks[0]

    chosen = [f"R@{pick(report.ks, 10)}"]
    if report.categories:
        chosen.append(f"Average/R@{pick(report.ks, 10)}")
    if report.has_subsets:
        chosen.append(f"Rsubset@{pick(report.subset_ks, 1)}")
    return tuple(chosen)


def grid_tables(
    gallery: GalleryIndex,
    queries: QuerySet,
    alphas: Sequence[float],
    betas: Sequence[float],
    ks: tuple[int, ...] = DEFAULT_KS,
    subset_ks: tuple[int, ...] = DEFAULT_SUBSET_KS,
    caption_subset: tuple[int, ...] | None = None,
    exclude_reference: bool = False,
    metrics: tuple[str, ...] | None = None,
) -> list[HeatmapTable]:
    """Full benchmark per (alpha, beta) cell, channels computed once per alpha."""
    alphas = tuple(alphas)
    betas = tuple(betas)
    cells = {
        (ai, bi): MetricAccumulator(ks, subset_ks)
        for ai in range(len(alphas))
        for bi in range(len(betas))
    }
    for i, record in enumerate(queries.records):
        reference_row = gallery.row_of(record.reference_id)
        params_probe = RetrievalParams(
            caption_subset=caption_subset, exclude_reference=exclude_reference
        )
        excluded = exclusion_rows(gallery, params_probe, reference_row)
        modifier = queries.modifier_vectors.data[i]
        reference = gallery.image_vectors.row(reference_row)
        for ai, alpha in enumerate(alphas):
            try:
                q, qnorm = compose_query(reference, modifier, alpha)
            except DegenerateQueryError:
                for bi in range(len(betas)):
                    cells[ai, bi].add(gallery, record, None, excluded)
                continue
            q2i, q2c = score_candidates(gallery, q, qnorm, caption_subset)
            for bi, beta in enumerate(betas):
                fused = fuse_scores(q2i, q2c, beta)
                cells[ai, bi].add(gallery, record, fused, excluded)

    reports = {
        key: acc.finalize(
            gallery,
            RetrievalParams(
                alpha=alphas[key[0]],
                beta=betas[key[1]],
                caption_subset=caption_subset,
                exclude_reference=exclude_reference,
            ),
        )
        for key, acc in cells.items()
    }
    sample = reports[0, 0]
    chosen = metrics if metrics is not None else default_metrics(sample)
    for metric in chosen:
        if metric not in sample.per_metric:
            available = ", ".join(sorted(sample.per_metric))
            raise ValueError(f"unknown metric {metric!r}; available: {available}")
    return [
        HeatmapTable(
            metric=metric,
            alphas=alphas,
            betas=betas,
            values=tuple(
                tuple(reports[ai, bi].per_metric[metric] for ai in range(len(alphas)))
                for bi in range(len(betas))
            ),
        )
        for metric in chosen
    ]


def ablation_reports(
    gallery: GalleryIndex,
    queries: QuerySet,
    params: RetrievalParams,
    subsets: Sequence[tuple[int, ...]] | None = None,
    ks: tuple[int, ...] = DEFAULT_KS,
    subset_ks: tuple[int, ...] = DEFAULT_SUBSET_KS,
) -> list[tuple[tuple[int, ...], EvalReport]]:
    """One report per caption subset; query composition shared across subsets."""
    if subsets is None:
        subsets = default_ablation_subsets(gallery.captions_per_item)
    normalized: list[tuple[int, ...]] = []
    for subset in subsets:
        checked = RetrievalParams(caption_subset=subset).caption_subset
        if checked[-1] > gallery.captions_per_item:
            raise ValueError(
                f"caption position {checked[-1]} out of range: gallery has "
                f"{gallery.captions_per_item} captions per item"
            )
        normalized.append(checked)

    accs = [MetricAccumulator(ks, subset_ks) for _ in normalized]
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
            for acc in accs:
                acc.add(gallery, record, None, excluded)
            continue
        for subset, acc in zip(normalized, accs):
            q2i, q2c = score_candidates(gallery, q, qnorm, subset)
            fused = fuse_scores(q2i, q2c, params.beta)
            acc.add(gallery, record, fused, excluded)

    results = []
    for subset, acc in zip(normalized, accs):
        cell_params = RetrievalParams(
            alpha=params.alpha,
            beta=params.beta,
            k=params.k,
            caption_subset=subset,
            exclude_ids=params.exclude_ids,
            exclude_reference=params.exclude_reference,
        )
        results.append((subset, acc.finalize(gallery, cell_params)))
    return results


def _pair_dir(out_dir: Path, gallery: GalleryIndex, multi: bool) -> Path:
    if not multi:
        return out_dir
    return out_dir / f"{gallery.meta.dataset}__{gallery.meta.embedder_id}"


def run_benchmark(config: ExperimentConfig) -> list[EvalReport]:
    """Benchmark every configured pair; persist report, rank lists, figure."""
    set_threads(config.threads)
    params = config.params()
    multi = len(config.pairs) > 1
    reports = []
    seen_dirs: set[Path] = set()
    for gallery_path, queries_path in config.pairs:
        gallery, queries = load_pair(gallery_path, queries_path)
        report, records = bench_pair(gallery, queries, params, config.ks, config.subset_ks)
        pair_dir = _pair_dir(config.out_dir, gallery, multi)
        if pair_dir in seen_dirs:
            raise ValueError(
                f"two pairs map to the same output directory {pair_dir}; "
                "give the galleries distinct dataset or embedder_id values"
            )
        seen_dirs.add(pair_dir)
        pair_dir.mkdir(parents=True, exist_ok=True)
        reporting.write_report_json(report, pair_dir / "report.json")
        reporting.write_ranklists_jsonl(records, pair_dir / "ranklists.jsonl")
        figures.recall_bars(report, pair_dir / "report_recalls.png")
        reports.append(report)
    if multi:
        _write_comparison_csv(reports, config.out_dir / "comparison.csv")
    return reports


def _write_comparison_csv(reports: Sequence[EvalReport], path: Path) -> None:
    metrics = sorted({m for r in reports for m in r.per_metric})
    lines = ["dataset,split,embedder_id," + ",".join(metrics)]
    for r in reports:
        cells = [
            repr(r.per_metric[m]) if m in r.per_metric else "" for m in metrics
        ]
        lines.append(f"{r.dataset},{r.split},{r.embedder_id}," + ",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_grid(config: ExperimentConfig) -> list[HeatmapTable]:
    """Grid-search the first configured pair; persist CSV and PNG per metric."""
    set_threads(config.threads)
    gallery, queries = load_pair(*config.pairs[0])
    tables = grid_tables(
        gallery,
        queries,
        config.alphas,
        config.betas,
        config.ks,
        config.subset_ks,
        config.caption_subset,
        config.exclude_reference,
        config.metrics,
    )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    for table in tables:
        slug = reporting.metric_slug(table.metric)
        reporting.write_heatmap_csv(table, config.out_dir / f"heatmap_{slug}.csv")
        figures.heatmap_png(table, config.out_dir / f"heatmap_{slug}.png")
    return tables


def run_ablation(config: ExperimentConfig) -> list[tuple[tuple[int, ...], EvalReport]]:
    """Caption-subset ablation on the first configured pair; persist tables."""
    set_threads(config.threads)
    gallery, queries = load_pair(*config.pairs[0])
    results = ablation_reports(
        gallery,
        queries,
        config.params(),
        config.ablation_subsets,
        config.ks,
        config.subset_ks,
    )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_ablation_json(results, config.out_dir / "ablation.json")
    reporting.write_ablation_csv(results, config.out_dir / "ablation.csv")
    chosen = config.metrics if config.metrics is not None else default_metrics(results[0][1])
    for metric in chosen:
        if metric not in results[0][1].per_metric:
            available = ", ".join(sorted(results[0][1].per_metric))
            raise ValueError(f"unknown metric {metric!r}; available: {available}")
        slug = reporting.metric_slug(metric)
        figures.ablation_bars(results, metric, config.out_dir / f"ablation_{slug}.png")
    return results
