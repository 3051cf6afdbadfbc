"""Writers for the engine's on-disk artifact formats.

Deliberately independent of the engine package: these writers are the
producer side of the contract, and the engine's `ingest` command is the
validator of record. Blobs are raw little-endian float32, row-major, no
header; manifests are canonical JSON.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FORMAT_VERSION = 1


class AdapterError(ValueError):
    pass


def l2_normalize(rows: np.ndarray, context: str = "embeddings") -> np.ndarray:
    """Unit-normalize rows (float64 norms, float32 result)."""
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim != 2:
        raise AdapterError(f"{context}: expected a 2-D array, got shape {rows.shape}")
    if not np.isfinite(rows).all():
        raise AdapterError(f"{context}: non-finite values")
    norms = np.sqrt(np.einsum("ij,ij->i", rows.astype(np.float64), rows.astype(np.float64)))
    if (norms == 0.0).any():
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise AdapterError(f"{context}: zero-norm row {bad}")
    return (rows.astype(np.float64) / norms[:, None]).astype(np.float32)


def write_f32le(path: str | Path, rows: np.ndarray) -> Path:
    path = Path(path)
    rows = np.ascontiguousarray(rows, dtype="<f4")
    path.write_bytes(rows.tobytes(order="C"))
    return path


def manifest_fragment(
    dataset: str,
    split: str,
    embedder_id: str,
    dim: int,
    num_items: int,
    captions_per_item: int,
) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "dataset": dataset,
        "split": split,
        "embedder_id": embedder_id,
        "dim": dim,
        "num_items": num_items,
        "captions_per_item": captions_per_item,
        "files": {
            "ids": "ids.txt",
            "image_vectors": "image_vectors.f32le",
            "caption_vectors": "caption_vectors.f32le",
        },
    }


def write_gallery_dir(
    out_dir: str | Path,
    dataset: str,
    split: str,
    embedder_id: str,
    ids: Sequence[str],
    image_vectors: np.ndarray,
    caption_vectors: np.ndarray,
    captions_per_item: int,
    image_urls: Mapping[str, str] | None = None,
    caption_texts: Mapping[str, Sequence[str]] | None = None,
) -> Path:
    """Write a complete gallery directory; vectors must already be unit rows."""
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise AdapterError("duplicate item IDs")
    if image_vectors.shape[0] != len(ids):
        raise AdapterError(
            f"{image_vectors.shape[0]} image rows for {len(ids)} ids"
        )
    if caption_vectors.shape[0] != len(ids) * captions_per_item:
        raise AdapterError(
            f"{caption_vectors.shape[0]} caption rows, expected "
            f"{len(ids)} * {captions_per_item}"
        )
    if image_vectors.shape[1] != caption_vectors.shape[1]:
        raise AdapterError("image and caption dims differ")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest_fragment(
        dataset, split, embedder_id,
        int(image_vectors.shape[1]), len(ids), captions_per_item,
    )
    if image_urls:
        manifest["item_image_urls"] = dict(sorted(image_urls.items()))
    if caption_texts:
        manifest["caption_texts"] = {
            k: list(v) for k, v in sorted(caption_texts.items())
        }
    (out_dir / "ids.txt").write_text("\n".join(ids) + "\n", encoding="utf-8")
    write_f32le(out_dir / "image_vectors.f32le", image_vectors)
    write_f32le(out_dir / "caption_vectors.f32le", caption_vectors)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out_dir / "manifest.json"


def write_captions_jsonl(path: str | Path, rows: Sequence[dict]) -> Path:
    """One {"item_id", "captions"} record per line, caller-defined order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def read_captions_jsonl(path: str | Path, expect_r: int | None = None) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                item_id, captions = row["item_id"], list(row["captions"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise AdapterError(f"{path}:{lineno}: bad caption record: {exc}") from exc
            if item_id in out:
                raise AdapterError(f"{path}:{lineno}: duplicate item {item_id!r}")
            if expect_r is not None and len(captions) != expect_r:
                raise AdapterError(
                    f"{path}:{lineno}: {len(captions)} captions for {item_id!r}, "
                    f"expected {expect_r}"
                )
            out[item_id] = captions
    return out


def write_queries_jsonl(
    out_dir: str | Path, records: Sequence[dict], modifier_vectors: np.ndarray | None = None
) -> Path:
    """Write queries.jsonl (and the aligned modifier blob when vectors given)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    required = ("query_id", "reference_id", "target_id", "modifier_text")
    path = out_dir / "queries.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i, record in enumerate(records):
            for key in required:
                if key not in record:
                    raise AdapterError(f"query record {i} missing {key!r}")
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    if modifier_vectors is not None:
        if modifier_vectors.shape[0] != len(records):
            raise AdapterError(
                f"{modifier_vectors.shape[0]} modifier rows for {len(records)} queries"
            )
        write_f32le(out_dir / "modifier_vectors.f32le", modifier_vectors)
    return path
