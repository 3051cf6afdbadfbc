from __future__ import annotations

import numpy as np
import pytest

from cirfuse.store import (
    GalleryIndex,
    GalleryMeta,
    QueryRecord,
    QuerySet,
    gallery_from_arrays,
    load_gallery,
    load_queries,
    write_gallery,
    write_queries,
)

SEED = 20240817
CATEGORIES = ("dress", "shirt", "toptee")


def make_gallery(
    rng: np.random.Generator,
    n: int = 12,
    d: int = 8,
    r: int = 3,
    dataset: str = "toy",
    prefix: str = "item",
) -> GalleryIndex:
    ids = [f"{prefix}_{i:03d}" for i in range(n)]
    images = rng.normal(size=(n, d))
    captions = rng.normal(size=(n * r, d))
    meta = GalleryMeta(dataset=dataset, split="val", embedder_id="unit-test")
    return gallery_from_arrays(ids, images, captions, r, meta)


def make_query_records(
    rng: np.random.Generator,
    gallery: GalleryIndex,
    count: int = 6,
    with_categories: bool = False,
    with_subsets: bool = False,
    subset_size: int = 4,
) -> tuple[list[QueryRecord], np.ndarray]:
    """Random queries whose modifiers lean toward the target embedding."""
    n = gallery.num_items
    records = []
    vectors = np.empty((count, gallery.dim), dtype=np.float32)
    for i in range(count):
        ref, tgt = rng.choice(n, size=2, replace=False)
        subset = None
        if with_subsets:
            others = [j for j in range(n) if j != tgt]
            chosen = rng.choice(len(others), size=subset_size - 1, replace=False)
            subset = tuple(
                gallery.items[j] for j in sorted([tgt] + [others[c] for c in chosen])
            )
        records.append(
            QueryRecord(
                query_id=f"q{i:03d}",
                reference_id=gallery.items[ref],
                target_id=gallery.items[tgt],
                modifier_text=f"make it more like {gallery.items[tgt]}",
                category=CATEGORIES[i % len(CATEGORIES)] if with_categories else None,
                subset_ids=subset,
            )
        )
        raw = (
            gallery.image_vectors.data[tgt].astype(np.float64)
            - 0.5 * gallery.image_vectors.data[ref].astype(np.float64)
            + 0.25 * rng.normal(size=gallery.dim)
        )
        vectors[i] = (raw / np.linalg.norm(raw)).astype(np.float32)
    return records, vectors


def queryset_from_records(
    records: list[QueryRecord], vectors: np.ndarray, gallery: GalleryIndex, tmp_path
) -> QuerySet:
    qdir = tmp_path / "queries"
    write_queries(records, vectors, qdir)
    return load_queries(qdir / "queries.jsonl", gallery)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)


@pytest.fixture
def toy_gallery(rng) -> GalleryIndex:
    return make_gallery(rng)


@pytest.fixture
def toy_gallery_dir(tmp_path, toy_gallery):
    write_gallery(toy_gallery, tmp_path / "gallery")
    return tmp_path / "gallery"


@pytest.fixture
def toy_queries(rng, toy_gallery, tmp_path) -> QuerySet:
    records, vectors = make_query_records(rng, toy_gallery, with_categories=True)
    return queryset_from_records(records, vectors, toy_gallery, tmp_path)


@pytest.fixture
def disk_roundtrip(tmp_path):
    """Write a gallery plus queries to disk and reload both."""

    def _build(gallery, records, vectors):
        gdir = tmp_path / "gallery"
        write_gallery(gallery, gdir)
        loaded = load_gallery(gdir / "manifest.json")
        qdir = tmp_path / "queries"
        write_queries(records, vectors, qdir)
        return loaded, load_queries(qdir / "queries.jsonl", loaded)

    return _build
