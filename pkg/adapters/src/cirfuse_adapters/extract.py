"""Embedding extraction: image directory + captions file -> gallery artifacts."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedders import Embedder
from .formats import (
    AdapterError,
    read_captions_jsonl,
    write_f32le,
    write_gallery_dir,
)

log = logging.getLogger("cirfuse_adapters")

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".webp")


@dataclass
class ExtractSummary:
    manifest_path: Path
    num_items: int
    dim: int
    skipped_ids: list[str] = field(default_factory=list)


def discover_images(image_dir: str | Path) -> list[tuple[str, Path]]:
    """(item_id, path) pairs, item_id = filename stem, sorted by id."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise AdapterError(f"not a directory: {image_dir}")
    found: dict[str, Path] = {}
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        item_id = path.stem
        if item_id in found:
            raise AdapterError(
                f"two files for item {item_id!r}: {found[item_id].name}, {path.name}"
            )
        found[item_id] = path
    return sorted(found.items())


def _probe_unreadable(path: Path) -> str | None:
    """Reason string when the file cannot be an image payload, else None."""
    try:
        payload = path.read_bytes()
    except OSError as exc:
        return str(exc)
    if not payload:
        return "empty file"
    return None


def extract_gallery(
    image_dir: str | Path,
    captions_path: str | Path,
    embedder: Embedder,
    out_dir: str | Path,
    dataset: str,
    split: str,
    captions_per_item: int = 3,
    lenient: bool = False,
    url_prefix: str | None = None,
) -> ExtractSummary:
    """Embed every image and its captions, write a loadable gallery directory.

    Unreadable images abort unless lenient, in which case they are skipped
    with their IDs logged and their caption records dropped alongside.
    """
    items = discover_images(image_dir)
    if not items:
        raise AdapterError(f"no images under {image_dir}")
    captions = read_captions_jsonl(captions_path, expect_r=captions_per_item)

    kept: list[tuple[str, Path]] = []
    skipped: list[str] = []
    for item_id, path in items:
        reason = _probe_unreadable(path)
        if reason is None:
            kept.append((item_id, path))
        elif lenient:
            log.warning("skipping unreadable image %s: %s", item_id, reason)
            skipped.append(item_id)
        else:
            raise AdapterError(f"unreadable image {item_id!r} ({path}): {reason}")
    if not kept:
        raise AdapterError("every image was unreadable")

    ids = [item_id for item_id, _ in kept]
    missing = [i for i in ids if i not in captions]
    if missing:
        raise AdapterError(
            f"{len(missing)} items have no caption record "
            f"(first: {missing[:3]})"
        )
    orphans = sorted(set(captions) - set(ids) - set(skipped))
    if orphans:
        raise AdapterError(
            f"{len(orphans)} caption records name unknown items "
            f"(first: {orphans[:3]})"
        )

    image_vectors = embedder.embed_images([path for _, path in kept])
    flat_texts = [text for item_id in ids for text in captions[item_id]]
    caption_vectors = embedder.embed_texts(flat_texts)

    image_urls = None
    if url_prefix is not None:
        image_urls = {
            item_id: url_prefix.rstrip("/") + "/" + path.name
            for item_id, path in kept
        }
    manifest_path = write_gallery_dir(
        out_dir,
        dataset=dataset,
        split=split,
        embedder_id=embedder.embedder_id,
        ids=ids,
        image_vectors=image_vectors,
        caption_vectors=caption_vectors,
        captions_per_item=captions_per_item,
        image_urls=image_urls,
        caption_texts={item_id: captions[item_id] for item_id in ids},
    )
    return ExtractSummary(
        manifest_path=manifest_path,
        num_items=len(ids),
        dim=int(image_vectors.shape[1]),
        skipped_ids=skipped,
    )


def embed_query_modifiers(
    queries_path: str | Path, embedder: Embedder, out_path: str | Path | None = None
) -> Path:
    """Embed each query's modifier_text into the aligned f32le blob."""
    queries_path = Path(queries_path)
    texts: list[str] = []
    with open(queries_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                texts.append(str(record["modifier_text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise AdapterError(
                    f"{queries_path}:{lineno}: bad query record: {exc}"
                ) from exc
    if not texts:
        raise AdapterError(f"no query records in {queries_path}")
    vectors = embedder.embed_texts(texts)
    if out_path is None:
        out_path = queries_path.parent / "modifier_vectors.f32le"
    return write_f32le(out_path, vectors)


def blob_nbytes(num_rows: int, dim: int) -> int:
    return num_rows * dim * np.dtype("<f4").itemsize
