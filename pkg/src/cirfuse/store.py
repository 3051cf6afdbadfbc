"""On-disk embedding interchange format and validated in-memory indices.

A gallery lives in a directory: `manifest.json` describing shapes and file
names, `ids.txt` with one item ID per line, and raw little-endian float32
blobs (`*.f32le`, row-major, no header). Query sets are JSONL records with a
sibling `modifier_vectors.f32le` aligned by line number. Everything is
validated and unit-normalized once at load; loaded indices are immutable and
safe to share across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-5
MODIFIER_BLOB_NAME = "modifier_vectors.f32le"

_REQUIRED_MANIFEST_KEYS = (
    "format_version",
    "dataset",
    "split",
    "embedder_id",
    "dim",
    "num_items",
    "captions_per_item",
    "files",
)
_REQUIRED_QUERY_KEYS = ("query_id", "reference_id", "target_id", "modifier_text")


class StoreError(ValueError):
    """A manifest, blob, or query record failed validation."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-aligned unit-L2 float32 vectors for one modality of one split."""

    dim: int
    count: int
    data: np.ndarray  # (count, dim) float32, read-only, rows unit within NORM_TOLERANCE

    def __post_init__(self):
        if self.data.shape != (self.count, self.dim):
            raise StoreError(
                f"embedding matrix shape {self.data.shape} does not match "
                f"count={self.count}, dim={self.dim}"
            )

    def row(self, index: int) -> np.ndarray:
        return self.data[index]


def _check_finite(raw: np.ndarray, context: str) -> None:
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        bad = int(np.nonzero(~finite)[0][0])
        raise StoreError(f"{context}: non-finite value in row {bad}")


def normalize_rows(raw: np.ndarray, context: str = "embeddings") -> EmbeddingMatrix:
    """Divide every row by its L2 norm and return a frozen float32 matrix.

    Norms are computed in float64; zero rows and non-finite values are
    rejected with the offending row index.
    """
    raw = np.ascontiguousarray(raw)
    if raw.ndim != 2:
        raise StoreError(f"{context}: expected a 2-D array, got shape {raw.shape}")
    _check_finite(raw, context)
    work = raw.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", work, work))
    if (norms == 0.0).any():
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise StoreError(f"{context}: zero-norm row {bad} cannot be normalized")
    out = (work / norms[:, None]).astype(np.float32)
    out.flags.writeable = False
    return EmbeddingMatrix(dim=raw.shape[1], count=raw.shape[0], data=out)


def _ingest_rows(raw32: np.ndarray, context: str) -> EmbeddingMatrix:
    """Validate float32 rows, renormalizing only rows outside NORM_TOLERANCE.

    Rows already unit within tolerance keep their exact bytes, so a
    write -> load round trip is bit-exact.
    """
    _check_finite(raw32, context)
    work = raw32.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", work, work))
    if (norms == 0.0).any():
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise StoreError(f"{context}: zero-norm row {bad} cannot be normalized")
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    if off.any():
        fixed = raw32.copy()
        fixed[off] = (work[off] / norms[off, None]).astype(np.float32)
        raw32 = fixed
    else:
        raw32 = raw32.copy()
    raw32.flags.writeable = False
    return EmbeddingMatrix(dim=raw32.shape[1], count=raw32.shape[0], data=raw32)


def _read_blob(path: Path, count: int, dim: int, context: str) -> np.ndarray:
    if not path.is_file():
        raise StoreError(f"{context}: vector blob not found: {path}")
    expected = count * dim * 4
    actual = path.stat().st_size
    if actual < expected:
        raise StoreError(
            f"{context}: vector blob truncated: {path} holds {actual} bytes, "
            f"expected {expected} ({count}x{dim} float32)"
        )
    if actual > expected:
        raise StoreError(
            f"{context}: vector blob has {actual - expected} trailing bytes: {path} "
            f"(expected {expected} for {count}x{dim} float32)"
        )
    data = np.fromfile(path, dtype="<f4").reshape(count, dim)
    return data


@dataclass(frozen=True)
class GalleryMeta:
    dataset: str
    split: str
    embedder_id: str
    image_urls: Mapping[str, str] | None = None
    caption_texts: Mapping[str, Sequence[str]] | None = None


@dataclass(frozen=True)
class GalleryIndex:
    """The retrieval database: N image vectors plus N*R caption vectors.

    Caption rows are grouped R-contiguous per item: caption r (1-based) of
    item n sits at row n*R + (r-1). Item order follows the manifest.
    """

    items: tuple[str, ...]
    image_vectors: EmbeddingMatrix
    caption_vectors: EmbeddingMatrix
    captions_per_item: int
    meta: GalleryMeta
    row_index: Mapping[str, int] = field(repr=False)
    id_rank: np.ndarray = field(repr=False)  # rank of each row's ID in ascending ID order

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.image_vectors.dim

    def row_of(self, item_id: str) -> int:
        try:
            return self.row_index[item_id]
        except KeyError:
            raise StoreError(f"unknown item ID: {item_id!r}") from None

    def caption_rows(self, item_row: int) -> np.ndarray:
        start = item_row * self.captions_per_item
        return self.caption_vectors.data[start : start + self.captions_per_item]


def _build_gallery(
    items: Sequence[str],
    image_vectors: EmbeddingMatrix,
    caption_vectors: EmbeddingMatrix,
    captions_per_item: int,
    meta: GalleryMeta,
) -> GalleryIndex:
    items = tuple(items)
    if image_vectors.count != len(items):
        raise StoreError(
            f"image vector count {image_vectors.count} does not match "
            f"{len(items)} item IDs"
        )
    if caption_vectors.count != len(items) * captions_per_item:
        raise StoreError(
            f"caption vector count {caption_vectors.count} does not match "
            f"num_items*captions_per_item = {len(items) * captions_per_item}"
        )
    if caption_vectors.count and caption_vectors.dim != image_vectors.dim:
        raise StoreError(
            f"caption dim {caption_vectors.dim} differs from image dim {image_vectors.dim}"
        )
    row_index: dict[str, int] = {}
    for i, item_id in enumerate(items):
        if item_id in row_index:
            raise StoreError(f"duplicate item ID {item_id!r} (rows {row_index[item_id]} and {i})")
        row_index[item_id] = i
    order = sorted(range(len(items)), key=items.__getitem__)
    id_rank = np.empty(len(items), dtype=np.int64)
    for rank, row in enumerate(order):
        id_rank[row] = rank
    id_rank.flags.writeable = False
    return GalleryIndex(
        items=items,
        image_vectors=image_vectors,
        caption_vectors=caption_vectors,
        captions_per_item=captions_per_item,
        meta=meta,
        row_index=row_index,
        id_rank=id_rank,
    )


def gallery_from_arrays(
    items: Sequence[str],
    image_vectors: np.ndarray,
    caption_vectors: np.ndarray,
    captions_per_item: int,
    meta: GalleryMeta | None = None,
) -> GalleryIndex:
    """Build a validated in-memory gallery from raw (unnormalized) arrays."""
    if meta is None:
        meta = GalleryMeta(dataset="in-memory", split="", embedder_id="unspecified")
    return _build_gallery(
        items,
        normalize_rows(np.asarray(image_vectors, dtype=np.float32), "image vectors"),
        normalize_rows(np.asarray(caption_vectors, dtype=np.float32), "caption vectors"),
        captions_per_item,
        meta,
    )


def load_gallery(manifest_path: str | Path) -> GalleryIndex:
    """Load and validate a gallery directory from its manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise StoreError(f"gallery manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreError(f"gallery manifest is not valid JSON: {manifest_path}: {exc}") from exc
    for key in _REQUIRED_MANIFEST_KEYS:
        if key not in manifest:
            raise StoreError(f"gallery manifest missing key {key!r}: {manifest_path}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise StoreError(
            f"unsupported format_version {manifest['format_version']!r} "
            f"(this reader supports {FORMAT_VERSION})"
        )
    dim = int(manifest["dim"])
    num_items = int(manifest["num_items"])
    captions_per_item = int(manifest["captions_per_item"])
    if dim <= 0:
        raise StoreError(f"dim must be positive, got {dim}")
    if num_items < 0:
        raise StoreError(f"num_items must be non-negative, got {num_items}")
    if captions_per_item <= 0:
        raise StoreError(f"captions_per_item must be positive, got {captions_per_item}")

    base = manifest_path.parent
    files = manifest["files"]
    for key in ("ids", "image_vectors", "caption_vectors"):
        if key not in files:
            raise StoreError(f"gallery manifest files section missing {key!r}")

    ids_path = base / files["ids"]
    if not ids_path.is_file():
        raise StoreError(f"ids file not found: {ids_path}")
    with open(ids_path, encoding="utf-8") as fh:
        items = [line.rstrip("\n") for line in fh]
    if items and items[-1] == "":
        items.pop()  # trailing newline
    if len(items) != num_items:
        raise StoreError(
            f"ids file {ids_path} has {len(items)} IDs, manifest declares {num_items}"
        )
    if any(not item for item in items):
        raise StoreError(f"ids file {ids_path} contains an empty ID")

    image_raw = _read_blob(base / files["image_vectors"], num_items, dim, "image vectors")
    caption_raw = _read_blob(
        base / files["caption_vectors"], num_items * captions_per_item, dim, "caption vectors"
    )
    meta = GalleryMeta(
        dataset=str(manifest["dataset"]),
        split=str(manifest["split"]),
        embedder_id=str(manifest["embedder_id"]),
        image_urls=manifest.get("item_image_urls"),
        caption_texts=manifest.get("caption_texts"),
    )
    return _build_gallery(
        items,
        _ingest_rows(image_raw, "image vectors"),
        _ingest_rows(caption_raw, "caption vectors"),
        captions_per_item,
        meta,
    )


def write_gallery(index: GalleryIndex, out_dir: str | Path) -> Path:
    """Persist a gallery; load_gallery(write_gallery(x)) is bit-exact on vectors."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dataset": index.meta.dataset,
        "split": index.meta.split,
        "embedder_id": index.meta.embedder_id,
        "dim": index.dim,
        "num_items": index.num_items,
        "captions_per_item": index.captions_per_item,
        "files": {
            "ids": "ids.txt",
            "image_vectors": "image_vectors.f32le",
            "caption_vectors": "caption_vectors.f32le",
        },
    }
    if index.meta.image_urls is not None:
        manifest["item_image_urls"] = dict(index.meta.image_urls)
    if index.meta.caption_texts is not None:
        manifest["caption_texts"] = {k: list(v) for k, v in index.meta.caption_texts.items()}
    (out_dir / "ids.txt").write_text(
        "".join(item + "\n" for item in index.items), encoding="utf-8"
    )
    index.image_vectors.data.astype("<f4", copy=False).tofile(out_dir / "image_vectors.f32le")
    index.caption_vectors.data.astype("<f4", copy=False).tofile(out_dir / "caption_vectors.f32le")
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    reference_id: str
    target_id: str
    modifier_text: str
    category: str | None = None
    subset_ids: tuple[str, ...] | None = None


@dataclass(frozen=True)
class QuerySet:
    records: tuple[QueryRecord, ...]
    modifier_vectors: EmbeddingMatrix
    by_id: Mapping[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def index_of(self, query_id: str) -> int:
        try:
            return self.by_id[query_id]
        except KeyError:
            raise StoreError(f"unknown query ID: {query_id!r}") from None

    def modifier_for(self, query_id: str) -> np.ndarray:
        return self.modifier_vectors.data[self.index_of(query_id)]

    @property
    def has_categories(self) -> bool:
        return any(r.category for r in self.records)

    @property
    def has_subsets(self) -> bool:
        return bool(self.records) and all(r.subset_ids for r in self.records)


def _parse_query_line(line: str, line_no: int) -> QueryRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StoreError(f"queries line {line_no}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise StoreError(f"queries line {line_no}: expected an object")
    for key in _REQUIRED_QUERY_KEYS:
        if key not in obj:
            raise StoreError(f"queries line {line_no}: missing key {key!r}")
    subset = obj.get("subset_ids")
    if subset is not None:
        if not isinstance(subset, list) or not subset:
            raise StoreError(
                f"queries line {line_no}: subset_ids must be a non-empty list when present"
            )
        subset = tuple(str(s) for s in subset)
    category = obj.get("category")
    return QueryRecord(
        query_id=str(obj["query_id"]),
        reference_id=str(obj["reference_id"]),
        target_id=str(obj["target_id"]),
        modifier_text=str(obj["modifier_text"]),
        category=str(category) if category is not None else None,
        subset_ids=subset,
    )


def load_queries(queries_path: str | Path, gallery: GalleryIndex) -> QuerySet:
    """Load a JSONL query set and its sibling modifier-vector blob.

    Every reference, target, and subset ID must resolve in the gallery;
    records and vectors are aligned by line number.
    """
    queries_path = Path(queries_path)
    if not queries_path.is_file():
        raise StoreError(f"queries file not found: {queries_path}")
    records: list[QueryRecord] = []
    with open(queries_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(_parse_query_line(line, line_no))

    by_id: dict[str, int] = {}
    subset_len: int | None = None
    for i, rec in enumerate(records):
        if rec.query_id in by_id:
            raise StoreError(f"duplicate query ID {rec.query_id!r}")
        by_id[rec.query_id] = i
        if rec.target_id == rec.reference_id:
            raise StoreError(
                f"query {rec.query_id!r}: target_id equals reference_id ({rec.target_id!r})"
            )
        for label, item_id in (("reference", rec.reference_id), ("target", rec.target_id)):
            if item_id not in gallery.row_index:
                raise StoreError(
                    f"query {rec.query_id!r}: {label} ID {item_id!r} not in gallery"
                )
        if rec.subset_ids is not None:
            if rec.target_id not in rec.subset_ids:
                raise StoreError(
                    f"query {rec.query_id!r}: subset_ids does not contain the target "
                    f"{rec.target_id!r}"
                )
            if subset_len is None:
                subset_len = len(rec.subset_ids)
            elif len(rec.subset_ids) != subset_len:
                raise StoreError(
                    f"query {rec.query_id!r}: subset length {len(rec.subset_ids)} differs "
                    f"from the dataset's subset length {subset_len}"
                )
            for item_id in rec.subset_ids:
                if item_id not in gallery.row_index:
                    raise StoreError(
                        f"query {rec.query_id!r}: subset ID {item_id!r} not in gallery"
                    )

    blob_path = queries_path.parent / MODIFIER_BLOB_NAME
    raw = _read_blob(blob_path, len(records), gallery.dim, "modifier vectors")
    vectors = _ingest_rows(raw, "modifier vectors")
    return QuerySet(records=tuple(records), modifier_vectors=vectors, by_id=by_id)


def write_queries(
    records: Sequence[QueryRecord], vectors: np.ndarray, out_dir: str | Path
) -> Path:
    """Persist a query set as queries.jsonl plus the aligned modifier blob."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.shape[0] != len(records):
        raise StoreError(
            f"modifier vector count {vectors.shape[0]} does not match {len(records)} records"
        )
    lines = []
    for rec in records:
        obj: dict = {
            "query_id": rec.query_id,
            "reference_id": rec.reference_id,
            "target_id": rec.target_id,
            "modifier_text": rec.modifier_text,
        }
        if rec.category is not None:
            obj["category"] = rec.category
        if rec.subset_ids is not None:
            obj["subset_ids"] = list(rec.subset_ids)
        lines.append(json.dumps(obj, sort_keys=True))
    queries_path = out_dir / "queries.jsonl"
    queries_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    vectors.tofile(out_dir / MODIFIER_BLOB_NAME)
    return queries_path
