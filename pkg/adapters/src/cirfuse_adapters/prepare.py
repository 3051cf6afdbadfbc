"""Readers for published dataset annotation layouts -> engine query records."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from .formats import AdapterError

log = logging.getLogger("cirfuse_adapters")

FASHIONIQ_CATEGORIES = ("dress", "shirt", "toptee")


def _load_json(path: Path):
    if not path.is_file():
        raise AdapterError(f"annotation file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise AdapterError(f"{path}: not valid JSON: {exc}") from exc


def read_fashioniq_queries(
    root: str | Path,
    split: str,
    categories: Sequence[str] = FASHIONIQ_CATEGORIES,
) -> list[dict]:
    """Records from captions/cap.{category}.{split}.json files.

    Each annotation pairs a candidate (reference) with a target and two
    human modifier phrases; the phrases join with " and " into one
    modifier_text, matching how this benchmark is normally evaluated.
    """
    root = Path(root)
    records: list[dict] = []
    for category in categories:
        path = root / "captions" / f"cap.{category}.{split}.json"
        rows = _load_json(path)
        for i, row in enumerate(rows):
            try:
                reference = str(row["candidate"])
                target = str(row["target"])
                phrases = [str(c).strip() for c in row["captions"] if str(c).strip()]
            except (KeyError, TypeError) as exc:
                raise AdapterError(f"{path}: record {i} malformed: {exc}") from exc
            if not phrases:
                log.warning("%s record %d has no captions, skipped", path.name, i)
                continue
            records.append(
                {
                    "query_id": f"fiq-{category}-{split}-{i:05d}",
                    "reference_id": reference,
                    "target_id": target,
                    "modifier_text": " and ".join(phrases),
                    "category": category,
                }
            )
    if not records:
        raise AdapterError(f"no usable queries under {root} for split {split!r}")
    return records


def read_cirr_queries(root: str | Path, split: str) -> list[dict]:
    """Records from cap.rc2.{split}.json; img_set members become subset_ids."""
    root = Path(root)
    path = root / f"cap.rc2.{split}.json"
    rows = _load_json(path)
    records: list[dict] = []
    for i, row in enumerate(rows):
        try:
            pairid = row["pairid"]
            reference = str(row["reference"])
            target = str(row["target_hard"])
            caption = str(row["caption"]).strip()
            members = [str(m) for m in row["img_set"]["members"]]
        except (KeyError, TypeError) as exc:
            raise AdapterError(f"{path}: record {i} malformed: {exc}") from exc
        if not caption:
            log.warning("%s record %d has an empty caption, skipped", path.name, i)
            continue
        record = {
            "query_id": f"cirr-{pairid}",
            "reference_id": reference,
            "target_id": target,
            "modifier_text": caption,
            "subset_ids": members,
        }
        records.append(record)
    if not records:
        raise AdapterError(f"no usable queries in {path}")
    return records


def filter_to_known_items(
    records: Iterable[dict], known_ids: Iterable[str]
) -> tuple[list[dict], int]:
    """Drop queries whose reference or target is not in the gallery.

    Annotation releases routinely name images missing from the image dump;
    the engine treats an unknown ID as a hard error, so filter here.
    """
    known = set(known_ids)
    kept: list[dict] = []
    dropped = 0
    for record in records:
        if record["reference_id"] in known and record["target_id"] in known:
            if "subset_ids" in record:
                record = dict(record)
                record["subset_ids"] = [
                    m for m in record["subset_ids"] if m in known
                ]
                if not record["subset_ids"]:
                    dropped += 1
                    continue
            kept.append(record)
        else:
            dropped += 1
    if dropped:
        log.warning("dropped %d queries naming items outside the gallery", dropped)
    return kept, dropped
