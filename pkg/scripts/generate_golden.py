"""Regenerate the committed golden fixture and its expected reports.

The dataset is synthesized from a fixed seed; every expected number is then
computed by the scalar reference scorer in tests/oracle.py, never by the
engine. The package is used only for file parsing and canonical
serialization, so the expected bytes are an independent check on the whole
compute path. Rerunning this script must be a no-op unless the fixture
recipe or a file format changed.

The exact CLI invocations each expected directory corresponds to are printed
at the end; tests/test_acceptance.py runs them and compares bytes.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from oracle import slow_compose, slow_fuse, slow_order, slow_q2c, slow_q2i  # noqa: E402

from cirfuse import reporting  # noqa: E402
from cirfuse.evaluation import EvalReport  # noqa: E402
from cirfuse.experiments import HeatmapTable, default_ablation_subsets  # noqa: E402
from cirfuse.fusion import RetrievalParams  # noqa: E402
from cirfuse.ranking import RankedItem, RankedList  # noqa: E402
from cirfuse.store import (  # noqa: E402
    GalleryMeta,
    QueryRecord,
    gallery_from_arrays,
    load_gallery,
    load_queries,
    normalize_rows,
    write_gallery,
    write_queries,
)

SEED = 20240817
N, DIM, R = 200, 16, 3
NUM_QUERIES = 20
CATEGORIES = ("dress", "shirt", "toptee")
SUBSET_SIZE = 6
KS = (1, 5, 10, 50)
SUBSET_KS = (1, 2, 3)
BENCH_ALPHA, BENCH_BETA, BENCH_K = 0.8, 0.1, 50
GRID_ALPHAS = (0.2, 0.5, 0.8)
GRID_BETAS = (0.1, 0.5, 0.9)
GRID_METRIC = "R@10"

FIXTURE_DIR = ROOT / "tests" / "fixtures" / "golden"


def build_dataset(rng: np.random.Generator):
    ids = [f"item_{i:03d}" for i in range(N)]
    images = rng.normal(size=(N, DIM))
    captions = rng.normal(size=(N * R, DIM))
    meta = GalleryMeta(dataset="golden", split="val", embedder_id="synthetic-16d")
    gallery = gallery_from_arrays(ids, images, captions, R, meta)

    records = []
    raw_modifiers = np.empty((NUM_QUERIES, DIM))
    for qi in range(NUM_QUERIES):
        ref, tgt = (int(v) for v in rng.choice(N, size=2, replace=False))
        # noisy enough that recalls land mid-range instead of saturating
        raw_modifiers[qi] = (
            0.6 * images[tgt] - 0.3 * images[ref] + rng.normal(size=DIM)
        )
        pool = [i for i in range(N) if i not in (ref, tgt)]
        others = [int(v) for v in rng.choice(len(pool), size=SUBSET_SIZE - 1, replace=False)]
        members = {tgt} | {pool[o] for o in others}
        if qi % 2 == 0:
            # half the subsets contain the reference, which subset ranking drops
            members.discard(max(m for m in members if m != tgt))
            members.add(ref)
        records.append(
            QueryRecord(
                query_id=f"q{qi:03d}",
                reference_id=ids[ref],
                target_id=ids[tgt],
                modifier_text=f"synthetic modifier {qi}",
                category=CATEGORIES[qi % len(CATEGORIES)],
                subset_ids=tuple(sorted(ids[m] for m in members)),
            )
        )
    modifiers = normalize_rows(raw_modifiers.astype(np.float32), "modifier").data
    return gallery, records, modifiers


class OracleEval:
    """Accumulates oracle outcomes into the same report shape the engine emits."""

    def __init__(self, gallery, queries):
        self.gallery = gallery
        self.queries = queries
        self.ids = gallery.items
        self.images = gallery.image_vectors.data
        self.captions = gallery.caption_vectors.data

    def fused_scores(self, record_idx, alpha, beta, offsets):
        record = self.queries.records[record_idx]
        ref_row = self.gallery.row_of(record.reference_id)
        q, qnorm = slow_compose(
            self.images[ref_row], self.queries.modifier_vectors.data[record_idx], alpha
        )
        if qnorm == 0.0:
            raise SystemExit(f"golden query {record.query_id} is degenerate; reseed")
        q2i = slow_q2i(self.images, q, qnorm)
        q2c = slow_q2c(self.captions, q, qnorm, R, offsets)
        return slow_fuse(q2i, q2c, beta)

    def query_outcomes(self, record_idx, fused, exclude_reference):
        """(full-pool rank, subset rank, top-50 row order) for one query."""
        record = self.queries.records[record_idx]
        ref_row = self.gallery.row_of(record.reference_id)
        tgt_row = self.gallery.row_of(record.target_id)
        excluded = {record.reference_id} if exclude_reference else set()
        order = slow_order(self.ids, fused, excluded)
        rank = order.index(tgt_row) + 1

        member_rows = [
            self.gallery.row_of(sid)
            for sid in record.subset_ids
            if self.gallery.row_of(sid) != ref_row
        ]
        sub_order = sorted(member_rows, key=lambda r: (-fused[r], self.ids[r]))
        return rank, sub_order.index(tgt_row) + 1, order[:BENCH_K]

    def report(self, params, per_query):
        """Mirror the engine's aggregation arithmetic over oracle ranks."""
        total = len(per_query)
        hits = {k: 0 for k in KS}
        cat_hits: dict[str, dict[int, int]] = {}
        cat_totals: dict[str, int] = {}
        subset_hits = {k: 0 for k in SUBSET_KS}
        for record, (rank, sub_rank) in zip(self.queries.records, per_query):
            bucket = cat_hits.setdefault(record.category, {k: 0 for k in KS})
            cat_totals[record.category] = cat_totals.get(record.category, 0) + 1
            for k in KS:
                if rank <= k:
                    hits[k] += 1
                    bucket[k] += 1
            for k in SUBSET_KS:
                if sub_rank <= k:
                    subset_hits[k] += 1

        per_metric: dict[str, float] = {}
        for k in KS:
            per_metric[f"R@{k}"] = hits[k] / total
        categories = tuple(sorted(cat_hits))
        for name in categories:
            for k in KS:
                per_metric[f"{name}/R@{k}"] = cat_hits[name][k] / cat_totals[name]
        for k in KS:
            per_metric[f"Average/R@{k}"] = sum(
                per_metric[f"{name}/R@{k}"] for name in categories
            ) / len(categories)
        for k in SUBSET_KS:
            per_metric[f"Rsubset@{k}"] = subset_hits[k] / total
        return EvalReport(
            dataset=self.gallery.meta.dataset,
            split=self.gallery.meta.split,
            embedder_id=self.gallery.meta.embedder_id,
            num_queries=total,
            params=params,
            ks=KS,
            subset_ks=SUBSET_KS,
            categories=categories,
            has_subsets=True,
            per_metric=per_metric,
            failed_queries=(),
        )


def expected_bench(ev: OracleEval, out_dir: Path):
    params = RetrievalParams(
        alpha=BENCH_ALPHA, beta=BENCH_BETA, k=BENCH_K, exclude_reference=True
    )
    per_query = []
    records = []
    offsets = list(range(R))
    for i, record in enumerate(ev.queries.records):
        fused = ev.fused_scores(i, BENCH_ALPHA, BENCH_BETA, offsets)
        rank, sub_rank, top_rows = ev.query_outcomes(i, fused, exclude_reference=True)
        per_query.append((rank, sub_rank))
        ranked = RankedList(
            record.query_id,
            tuple(RankedItem(ev.ids[r], fused[r]) for r in top_rows),
        )
        records.append(
            reporting.ranklist_record(ranked, record.reference_id, record.target_id)
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_report_json(ev.report(params, per_query), out_dir / "report.json")
    reporting.write_ranklists_jsonl(records, out_dir / "ranklists.jsonl")


def expected_grid(ev: OracleEval, out_dir: Path):
    offsets = list(range(R))
    k_cut = int(GRID_METRIC.split("@")[1])
    values = []
    for beta in GRID_BETAS:
        row = []
        for alpha in GRID_ALPHAS:
            hits = 0
            for i, record in enumerate(ev.queries.records):
                fused = ev.fused_scores(i, alpha, beta, offsets)
                rank, _, _ = ev.query_outcomes(i, fused, exclude_reference=False)
                if rank <= k_cut:
                    hits += 1
            row.append(hits / NUM_QUERIES)
        values.append(tuple(row))
    table = HeatmapTable(
        metric=GRID_METRIC, alphas=GRID_ALPHAS, betas=GRID_BETAS, values=tuple(values)
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_heatmap_csv(table, out_dir / f"heatmap_{GRID_METRIC}.csv")


def expected_ablation(ev: OracleEval, out_dir: Path):
    results = []
    for subset in default_ablation_subsets(R):
        offsets = [p - 1 for p in subset]
        per_query = []
        for i in range(NUM_QUERIES):
            fused = ev.fused_scores(i, BENCH_ALPHA, BENCH_BETA, offsets)
            rank, sub_rank, _ = ev.query_outcomes(i, fused, exclude_reference=True)
            per_query.append((rank, sub_rank))
        params = RetrievalParams(
            alpha=BENCH_ALPHA,
            beta=BENCH_BETA,
            k=BENCH_K,
            caption_subset=subset,
            exclude_reference=True,
        )
        results.append((subset, ev.report(params, per_query)))
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_ablation_json(results, out_dir / "ablation.json")
    reporting.write_ablation_csv(results, out_dir / "ablation.csv")


def main():
    rng = np.random.default_rng(SEED)
    gallery, records, modifiers = build_dataset(rng)

    dataset_dir = FIXTURE_DIR / "dataset"
    write_gallery(gallery, dataset_dir)
    write_queries(records, modifiers, dataset_dir / "queries")

    # score exactly what a consumer loads back, not the in-memory arrays
    gallery = load_gallery(dataset_dir / "manifest.json")
    queries = load_queries(dataset_dir / "queries" / "queries.jsonl", gallery)
    ev = OracleEval(gallery, queries)

    expected_bench(ev, FIXTURE_DIR / "expected" / "bench")
    expected_grid(ev, FIXTURE_DIR / "expected" / "grid")
    expected_ablation(ev, FIXTURE_DIR / "expected" / "ablate")

    manifest = dataset_dir / "manifest.json"
    jsonl = dataset_dir / "queries" / "queries.jsonl"
    print(f"fixture written under {FIXTURE_DIR}")
    print("expected/bench  <- cirfuse bench --gallery", manifest, "--queries", jsonl,
          "--out OUT --alpha 0.8 --beta 0.1 --k 50 --exclude-reference on")
    print("expected/grid   <- cirfuse grid --gallery", manifest, "--queries", jsonl,
          "--out OUT --alphas 0.2,0.5,0.8 --betas 0.1,0.5,0.9 --metric R@10")
    print("expected/ablate <- cirfuse ablate-captions --gallery", manifest,
          "--queries", jsonl, "--out OUT --exclude-reference on")


if __name__ == "__main__":
    main()
