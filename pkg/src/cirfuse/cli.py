"""Command-line entry points: ingest, bench, grid, ablate-captions, serve."""
from __future__ import annotations

from pathlib import Path

import click

from cirfuse import experiments, reporting
from cirfuse.store import StoreError, load_gallery, load_queries, write_gallery, write_queries

PATH = click.Path(path_type=Path)


def _floats(text: str, name: str) -> tuple[float, ...]:
    try:
        values = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise click.ClickException(f"bad {name} list: {text!r} (expected comma-separated reals)")
    if not values:
        raise click.ClickException(f"{name} list is empty")
    return values


def _ints(text: str, name: str) -> tuple[int, ...]:
    try:
        values = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise click.ClickException(
            f"bad {name} list: {text!r} (expected comma-separated integers)"
        )
    if not values or any(v < 1 for v in values):
        raise click.ClickException(f"{name} must be positive integers")
    return tuple(sorted(set(values)))


def _subset(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    return _ints(text, "caption subset")


def _pairs(galleries: tuple[Path, ...], queries: tuple[Path, ...]) -> tuple:
    if len(galleries) != len(queries):
        raise click.ClickException(
            f"{len(galleries)} --gallery values but {len(queries)} --queries values; "
            "pass one --queries per --gallery"
        )
    return tuple(zip(galleries, queries))


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StoreError, ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


point_options = [
    click.option("--alpha", type=float, default=0.8, show_default=True,
                 help="Query blend weight: 0 = image only, 1 = text only."),
    click.option("--beta", type=float, default=0.1, show_default=True,
                 help="Score blend weight: 0 = image channel only, 1 = captions only."),
    click.option("--k", type=int, default=50, show_default=True,
                 help="Rank list length to persist."),
]

caption_subset_option = [
    click.option("--caption-subset", default=None,
                 help="Comma-separated 1-based caption positions, e.g. '1,3'."),
]

eval_options = [
    click.option("--exclude-reference", type=click.Choice(["on", "off"]), default="off",
                 show_default=True, help="Drop each query's reference item from its candidates."),
    click.option("--ks", default="1,5,10,50", show_default=True,
                 help="Recall cutoffs for the report."),
    click.option("--subset-ks", default="1,2,3", show_default=True,
                 help="Recall cutoffs within per-query candidate subsets."),
    click.option("--threads", type=int, default=1, show_default=True,
                 help="Worker threads for scoring (clamped to the machine budget)."),
]


def with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
@click.version_option(package_name="cirfuse")
def main():
    """Composed image retrieval over precomputed embeddings.

    Queries blend a reference-image embedding with a text-modifier embedding;
    candidates are scored against both the item's image embedding and its
    caption embeddings, then ranked with deterministic tie-breaking.
    """


@main.command()
@click.option("--gallery", "gallery_path", required=True, type=PATH,
              help="Path to a gallery manifest.json.")
@click.option("--queries", "queries_path", type=PATH,
              help="Optional queries.jsonl to validate against the gallery.")
@click.option("--out", "out_dir", type=PATH,
              help="Rewrite validated artifacts canonically into this directory.")
def ingest(gallery_path: Path, queries_path: Path | None, out_dir: Path | None):
    """Validate embedding artifacts and optionally rewrite them canonically.

    Rows off unit norm by more than 1e-5 are renormalized; rows already unit
    are kept bit-exact. Without --out this is a pure validation pass.
    """
    gallery = _run(load_gallery, gallery_path)
    click.echo(
        f"gallery OK: dataset={gallery.meta.dataset} split={gallery.meta.split} "
        f"items={gallery.num_items} captions_per_item={gallery.captions_per_item} "
        f"dim={gallery.dim}"
    )
    queries = None
    if queries_path is not None:
        queries = _run(load_queries, queries_path, gallery)
        click.echo(f"queries OK: {len(queries)} records")
    if out_dir is not None:
        manifest = _run(write_gallery, gallery, out_dir)
        click.echo(f"wrote {manifest}")
        if queries is not None:
            written = _run(
                write_queries,
                queries.records,
                queries.modifier_vectors.data,
                out_dir / "queries",
            )
            click.echo(f"wrote {written}")


@main.command()
@click.option("--gallery", "galleries", required=True, multiple=True, type=PATH,
              help="Gallery manifest.json (repeat for multiple embedding sets).")
@click.option("--queries", "queries", required=True, multiple=True, type=PATH,
              help="queries.jsonl, one per --gallery.")
@click.option("--out", "out_dir", required=True, type=PATH, help="Output directory.")
@with_options(point_options + caption_subset_option + eval_options)
def bench(galleries, queries, out_dir, alpha, beta, k, caption_subset,
          exclude_reference, ks, subset_ks, threads):
    """Run the benchmark: report.json, ranklists.jsonl, and a recall figure.

    With several gallery/queries pairs, each pair gets a subdirectory and a
    comparison.csv summarizes them side by side.
    """
    config = _run(
        experiments.ExperimentConfig,
        pairs=_pairs(galleries, queries),
        out_dir=out_dir,
        alpha=alpha,
        beta=beta,
        k=k,
        caption_subset=_subset(caption_subset),
        exclude_reference=exclude_reference == "on",
        ks=_ints(ks, "ks"),
        subset_ks=_ints(subset_ks, "subset ks"),
        threads=threads,
    )
    reports = _run(experiments.run_benchmark, config)
    for report in reports:
        click.echo(reporting.render_report_table(report), nl=False)
    click.echo(f"outputs in {out_dir}")


@main.command()
@click.option("--gallery", "gallery_path", required=True, type=PATH)
@click.option("--queries", "queries_path", required=True, type=PATH)
@click.option("--out", "out_dir", required=True, type=PATH, help="Output directory.")
@click.option("--alphas", default=None,
              help="Comma-separated alpha grid [default: 0,0.05,...,1].")
@click.option("--betas", default=None,
              help="Comma-separated beta grid [default: 0,0.05,...,1].")
@click.option("--metric", "metrics", multiple=True,
              help="Metric per heatmap, e.g. 'R@10' or 'Average/R@10' (repeatable).")
@with_options(caption_subset_option + eval_options)
def grid(gallery_path, queries_path, out_dir, alphas, betas, metrics,
         caption_subset, exclude_reference, ks, subset_ks, threads):
    """Sweep the (alpha, beta) grid: one CSV + PNG heatmap per metric."""
    config = _run(
        experiments.ExperimentConfig,
        pairs=((gallery_path, queries_path),),
        out_dir=out_dir,
        alphas=_floats(alphas, "alphas") if alphas else experiments.default_grid(),
        betas=_floats(betas, "betas") if betas else experiments.default_grid(),
        caption_subset=_subset(caption_subset),
        exclude_reference=exclude_reference == "on",
        ks=_ints(ks, "ks"),
        subset_ks=_ints(subset_ks, "subset ks"),
        metrics=tuple(metrics) or None,
        threads=threads,
    )
    tables = _run(experiments.run_grid, config)
    for table in tables:
        click.echo(reporting.render_text_heatmap(table), nl=False)
        click.echo("")
    click.echo(f"outputs in {out_dir}")


@main.command("ablate-captions")
@click.option("--gallery", "gallery_path", required=True, type=PATH)
@click.option("--queries", "queries_path", required=True, type=PATH)
@click.option("--out", "out_dir", required=True, type=PATH, help="Output directory.")
@click.option("--subset", "subsets", multiple=True,
              help="One caption subset to ablate, e.g. '1,3' (repeatable) "
                   "[default: every non-empty subset].")
@click.option("--metric", "metrics", multiple=True,
              help="Metric per figure (repeatable).")
@with_options(point_options + eval_options)
def ablate_captions(gallery_path, queries_path, out_dir, subsets, metrics, alpha, beta,
                    k, exclude_reference, ks, subset_ks, threads):
    """Evaluate caption subsets one by one: ablation.json/.csv plus figures."""
    config = _run(
        experiments.ExperimentConfig,
        pairs=((gallery_path, queries_path),),
        out_dir=out_dir,
        alpha=alpha,
        beta=beta,
        k=k,
        ablation_subsets=tuple(_ints(s, "subset") for s in subsets) or None,
        exclude_reference=exclude_reference == "on",
        ks=_ints(ks, "ks"),
        subset_ks=_ints(subset_ks, "subset ks"),
        metrics=tuple(metrics) or None,
        threads=threads,
    )
    results = _run(experiments.run_ablation, config)
    shown = config.metrics or experiments.default_metrics(results[0][1])
    click.echo(reporting.render_ablation_table(results, shown), nl=False)
    click.echo(f"outputs in {out_dir}")


@main.command()
@click.option("--gallery", "galleries", required=True, multiple=True, type=PATH)
@click.option("--queries", "queries", required=True, multiple=True, type=PATH)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--ui-dir", type=PATH, default=None,
              help="Directory with a built UI bundle to serve at /.")
@click.option("--heatmap-cell-budget", type=int, default=2000, show_default=True,
              help="Largest alpha*beta grid the heatmap endpoint will compute.")
@click.option("--threads", type=int, default=1, show_default=True)
def serve(galleries, queries, host, port, ui_dir, heatmap_cell_budget, threads):
    """Serve the read-only retrieval API (and UI, if built) over HTTP."""
    import uvicorn

    from cirfuse._kernels import set_threads
    from cirfuse.service import create_app, load_datasets

    set_threads(threads)
    datasets = _run(load_datasets, _pairs(galleries, queries))
    app = _run(create_app, datasets, ui_dir, heatmap_cell_budget)
    names = ", ".join(sorted(datasets))
    click.echo(f"serving {names} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
