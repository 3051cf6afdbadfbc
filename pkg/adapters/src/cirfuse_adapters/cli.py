"""Command line entry points for producing engine-format artifacts."""
from __future__ import annotations

import logging
from pathlib import Path

import click

from . import __version__
from .captions import CaptionJob, MockProvider, run_caption_job
from .embedders import make_embedder
from .extract import discover_images, embed_query_modifiers, extract_gallery
from .formats import AdapterError, write_queries_jsonl
from .prepare import filter_to_known_items, read_cirr_queries, read_fashioniq_queries


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(1)


_backend_options = [
    click.option(
        "--backend", type=click.Choice(["hash", "clip"]), default="hash",
        show_default=True, help="Embedding backend.",
    ),
    click.option(
        "--dim", type=int, default=64, show_default=True,
        help="Vector width (hash backend only; clip uses the model's).",
    ),
]


def _with_backend(cmd):
    for option in reversed(_backend_options):
        cmd = option(cmd)
    return cmd


@click.group()
@click.version_option(version=__version__, prog_name="cirfuse-adapters")
@click.option("-v", "--verbose", is_flag=True, help="Log skipped items and warnings.")
def main(verbose: bool) -> None:
    """Produce gallery blobs, captions, and query files for the retrieval engine."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )


@main.command("extract-gallery")
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("captions", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--dataset", required=True, help="Dataset name for the manifest.")
@click.option("--split", default="val", show_default=True)
@_with_backend
@click.option("--r", "captions_per_item", type=int, default=3, show_default=True,
              help="Captions per item expected in CAPTIONS.")
@click.option("--lenient", is_flag=True,
              help="Skip unreadable images (logged) instead of aborting.")
@click.option("--url-prefix", default=None,
              help="Record image URLs as PREFIX/<filename> in the manifest.")
def extract_gallery_cmd(
    image_dir: str, captions: str, out_dir: str, dataset: str, split: str,
    backend: str, dim: int, captions_per_item: int, lenient: bool,
    url_prefix: str | None,
) -> None:
    """Embed IMAGE_DIR and CAPTIONS into a gallery directory at OUT_DIR."""
    try:
        embedder = make_embedder(backend, dim=dim)
        summary = extract_gallery(
            image_dir, captions, embedder, out_dir,
            dataset=dataset, split=split,
            captions_per_item=captions_per_item,
            lenient=lenient, url_prefix=url_prefix,
        )
    except AdapterError as exc:
        _fail(str(exc))
    click.echo(
        f"wrote {summary.num_items} items (dim={summary.dim}) "
        f"to {summary.manifest_path.parent}"
    )
    if summary.skipped_ids:
        click.echo(f"skipped {len(summary.skipped_ids)} unreadable: "
                   + ", ".join(summary.skipped_ids))


@main.command("embed-queries")
@click.argument("queries", type=click.Path(exists=True, dir_okay=False))
@_with_backend
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Blob path (default: modifier_vectors.f32le beside QUERIES).")
def embed_queries_cmd(queries: str, backend: str, dim: int, out: str | None) -> None:
    """Embed each query's modifier_text into the aligned modifier blob."""
    try:
        embedder = make_embedder(backend, dim=dim)
        path = embed_query_modifiers(queries, embedder, out)
    except AdapterError as exc:
        _fail(str(exc))
    click.echo(f"wrote {path}")


@main.command("caption")
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--template", "template_id", default="fashion_v1", show_default=True,
              help="Versioned prompt template id.")
@click.option("--r", type=int, default=3, show_default=True,
              help="Captions per image; responses with any other count fail.")
@click.option("--mock", is_flag=True, help="Offline provider for pipeline tests.")
@click.option("--endpoint", default=None, help="Caption provider URL.")
@click.option("--credentials-env", default=None,
              help="Environment variable holding the provider token.")
@click.option("--model", default=None, help="Provider-side model name.")
@click.option("--workers", type=int, default=4, show_default=True)
@click.option("--attempts", type=int, default=3, show_default=True)
@click.option("--backoff", type=float, default=1.0, show_default=True,
              help="Base retry delay, doubling per attempt.")
@click.option("--rate", type=float, default=None,
              help="Max provider requests per second.")
@click.option("--audit", type=click.Path(dir_okay=False), default=None,
              help="Raw-response archive (default: OUT with .audit.jsonl).")
def caption_cmd(
    image_dir: str, out: str, template_id: str, r: int, mock: bool,
    endpoint: str | None, credentials_env: str | None, model: str | None,
    workers: int, attempts: int, backoff: float, rate: float | None,
    audit: str | None,
) -> None:
    """Generate R captions per image in IMAGE_DIR, writing captions JSONL to OUT."""
    if mock and endpoint:
        _fail("pass --mock or --endpoint, not both")
    if not mock and not endpoint:
        _fail("pass --endpoint URL (or --mock for the offline provider)")
    try:
        images = discover_images(image_dir)
        if not images:
            raise AdapterError(f"no images under {image_dir}")
        job = CaptionJob(
            images=images, template_id=template_id, r=r,
            provider_endpoint=endpoint, credentials_env=credentials_env,
            model=model,
        )
        result = run_caption_job(
            job, out, audit_path=audit,
            provider=MockProvider() if mock else None,
            max_workers=workers, max_attempts=attempts,
            backoff_s=backoff, rate_per_second=rate,
        )
    except AdapterError as exc:
        _fail(str(exc))
    click.echo(f"captioned {result.captioned}/{len(images)} items -> {result.out_path}")
    click.echo(f"audit archive: {result.audit_path}")
    if result.failures:
        click.echo(f"failed: {len(result.failures)} items (see "
                   f"{result.out_path.with_suffix('.failures.json')})", err=True)
        raise SystemExit(1)
    if result.policy_violations:
        click.echo(
            f"warning: {len(result.policy_violations)} items mention a person "
            f"despite the {template_id} template", err=True
        )


def _write_prepared(records, ids_file: str | None, out_dir: str) -> None:
    if ids_file:
        known = Path(ids_file).read_text(encoding="utf-8").split()
        records, dropped = filter_to_known_items(records, known)
        if dropped:
            click.echo(f"dropped {dropped} queries naming unknown items")
        if not records:
            raise AdapterError("no queries left after filtering to the gallery")
    path = write_queries_jsonl(out_dir, records)
    click.echo(f"wrote {len(records)} queries to {path}")


@main.command("prepare-fashioniq")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--split", default="val", show_default=True)
@click.option("--ids-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Gallery ids.txt; queries naming other items are dropped.")
def prepare_fashioniq_cmd(root: str, out_dir: str, split: str, ids_file: str | None) -> None:
    """Convert FashionIQ annotations under ROOT into queries.jsonl."""
    try:
        records = read_fashioniq_queries(root, split)
        _write_prepared(records, ids_file, out_dir)
    except AdapterError as exc:
        _fail(str(exc))


@main.command("prepare-cirr")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--split", default="val", show_default=True)
@click.option("--ids-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Gallery ids.txt; queries naming other items are dropped.")
def prepare_cirr_cmd(root: str, out_dir: str, split: str, ids_file: str | None) -> None:
    """Convert CIRR annotations under ROOT into queries.jsonl with subsets."""
    try:
        records = read_cirr_queries(root, split)
        _write_prepared(records, ids_file, out_dir)
    except AdapterError as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
