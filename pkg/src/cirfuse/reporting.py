"""Canonical serialization for reports, rank lists, and heatmap tables.

All writers are deterministic: keys sorted, floats in shortest round-trip
form, no timestamps. Byte-identical inputs produce byte-identical files.
Recall values are fractions in machine output and percentages with two
decimals in rendered tables.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from cirfuse.evaluation import EvalReport
from cirfuse.fusion import RetrievalParams
from cirfuse.ranking import RankedList

if TYPE_CHECKING:
    from cirfuse.experiments import HeatmapTable

SHADES = " .:-=+*#%@"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def params_to_dict(params: RetrievalParams) -> dict:
    return {
        "alpha": params.alpha,
        "beta": params.beta,
        "k": params.k,
        "caption_subset": list(params.caption_subset) if params.caption_subset else None,
        "exclude_ids": sorted(params.exclude_ids),
        "exclude_reference": params.exclude_reference,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "dataset": report.dataset,
        "split": report.split,
        "embedder_id": report.embedder_id,
        "num_queries": report.num_queries,
        "params": params_to_dict(report.params),
        "ks": list(report.ks),
        "subset_ks": list(report.subset_ks) if report.has_subsets else [],
        "categories": list(report.categories),
        "metrics": dict(report.per_metric),
        "failed_queries": list(report.failed_queries),
    }


def write_report_json(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(canonical_json(report_to_dict(report)), encoding="utf-8")
    return path


def ranklist_record(ranked: RankedList, reference_id: str, target_id: str | None) -> dict:
    record = {
        "query_id": ranked.query_id,
        "reference_id": reference_id,
        "items": [{"item_id": it.item_id, "score": it.score} for it in ranked.items],
    }
    if target_id is not None:
        record["target_id"] = target_id
    return record


def write_ranklists_jsonl(records: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def heatmap_to_csv(table: "HeatmapTable") -> str:
    """First row alpha values, first column beta values."""
    lines = ["," + ",".join(repr(a) for a in table.alphas)]
    for beta, row in zip(table.betas, table.values):
        lines.append(repr(beta) + "," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def write_heatmap_csv(table: "HeatmapTable", path: str | Path) -> Path:
    path = Path(path)
    path.write_text(heatmap_to_csv(table), encoding="utf-8")
    return path


def metric_slug(metric: str) -> str:
    return metric.replace("/", "_")


def percent(value: float) -> str:
    return f"{value * 100:.2f}"


def render_report_table(report: EvalReport) -> str:
    """Aligned human-readable recall table, percentages with two decimals."""
    lines = [
        f"dataset={report.dataset} split={report.split} embedder={report.embedder_id} "
        f"queries={report.num_queries} alpha={report.params.alpha} beta={report.params.beta}"
    ]
    header_ks = [f"R@{k}" for k in report.ks]
    rows: list[tuple[str, list[str]]] = []
    if report.categories:
        for name in report.categories + ("Average",):
            rows.append((name, [percent(report.per_metric[f"{name}/{h}"]) for h in header_ks]))
    rows.append(("overall", [percent(report.per_metric[h]) for h in header_ks]))
    label_w = max(len(r[0]) for r in rows)
    cell_w = max(6, max(len(h) for h in header_ks))
    lines.append(" " * label_w + "  " + "  ".join(h.rjust(cell_w) for h in header_ks))
    for label, cells in rows:
        lines.append(label.ljust(label_w) + "  " + "  ".join(c.rjust(cell_w) for c in cells))
    if report.has_subsets:
        subset_cells = "  ".join(
            f"Rsubset@{k}={percent(report.per_metric[f'Rsubset@{k}'])}"
            for k in report.subset_ks
        )
        lines.append(subset_cells)
    if report.failed_queries:
        lines.append(f"failed queries ({len(report.failed_queries)}): "
                     + ", ".join(report.failed_queries))
    return "\n".join(lines) + "\n"


def render_text_heatmap(table: "HeatmapTable") -> str:
    """Shade-character heatmap, beta rows by alpha columns, plus value table."""
    flat = [v for row in table.values for v in row]
    lo, hi = min(flat), max(flat)
    span = hi - lo

    def shade(v: float) -> str:
        if span == 0.0:
            return SHADES[-1]
        idx = int((v - lo) / span * (len(SHADES) - 1))
        return SHADES[idx]

    lines = [f"{table.metric}  (rows: beta, cols: alpha; {SHADES[0]!r} low .. {SHADES[-1]!r} high)"]
    header = "beta\\alpha  " + " ".join(f"{a:>5.2f}" for a in table.alphas)
    lines.append(header)
    for beta, row in zip(table.betas, table.values):
        cells = " ".join((shade(v) * 2).center(5) for v in row)
        lines.append(f"{beta:>10.2f}  {cells}")
    lines.append("")
    for beta, row in zip(table.betas, table.values):
        cells = " ".join(percent(v).rjust(6) for v in row)
        lines.append(f"{beta:>10.2f}  {cells}")
    return "\n".join(lines) + "\n"


def ablation_rows(
    results: Sequence[tuple[tuple[int, ...], EvalReport]]
) -> list[dict]:
    return [
        {"caption_subset": list(subset), "metrics": dict(report.per_metric)}
        for subset, report in results
    ]


def write_ablation_json(
    results: Sequence[tuple[tuple[int, ...], EvalReport]], path: str | Path
) -> Path:
    path = Path(path)
    first = results[0][1]
    payload = {
        "dataset": first.dataset,
        "split": first.split,
        "embedder_id": first.embedder_id,
        "num_queries": first.num_queries,
        "params": params_to_dict(first.params),
        "rows": ablation_rows(results),
    }
    path.write_text(canonical_json(payload), encoding="utf-8")
    return path


def subset_label(subset: tuple[int, ...]) -> str:
    return "+".join(str(p) for p in subset)


def write_ablation_csv(
    results: Sequence[tuple[tuple[int, ...], EvalReport]], path: str | Path
) -> Path:
    metrics = sorted(results[0][1].per_metric)
    lines = ["caption_subset," + ",".join(metrics)]
    for subset, report in results:
        lines.append(
            subset_label(subset) + "," + ",".join(repr(report.per_metric[m]) for m in metrics)
        )
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def render_ablation_table(
    results: Sequence[tuple[tuple[int, ...], EvalReport]], metrics: Sequence[str]
) -> str:
    label_w = max(len("captions"), max(len(subset_label(s)) for s, _ in results))
    cell_w = max(8, max(len(m) for m in metrics))
    lines = ["captions".ljust(label_w) + "  " + "  ".join(m.rjust(cell_w) for m in metrics)]
    for subset, report in results:
        cells = "  ".join(percent(report.per_metric[m]).rjust(cell_w) for m in metrics)
        lines.append(subset_label(subset).ljust(label_w) + "  " + cells)
    return "\n".join(lines) + "\n"
