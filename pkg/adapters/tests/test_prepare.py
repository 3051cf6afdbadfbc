import json

import pytest

from cirfuse_adapters.formats import AdapterError
from cirfuse_adapters.prepare import (
    filter_to_known_items,
    read_cirr_queries,
    read_fashioniq_queries,
)


@pytest.fixture()
def fashioniq_root(tmp_path):
    captions = tmp_path / "fiq" / "captions"
    captions.mkdir(parents=True)
    rows = {
        "dress": [
            {"candidate": "B001", "target": "B002",
             "captions": ["is red", "has no sleeves"]},
            {"candidate": "B003", "target": "B004", "captions": ["is shorter"]},
        ],
        "shirt": [
            {"candidate": "B005", "target": "B006",
             "captions": ["", "has a collar"]},
        ],
        "toptee": [
            {"candidate": "B007", "target": "B008", "captions": []},
        ],
    }
    for category, records in rows.items():
        path = captions / f"cap.{category}.val.json"
        path.write_text(json.dumps(records))
    return tmp_path / "fiq"


@pytest.fixture()
def cirr_root(tmp_path):
    root = tmp_path / "cirr"
    root.mkdir()
    rows = [
        {"pairid": 11, "reference": "dev-1", "target_hard": "dev-2",
         "caption": "swap the dog for a cat",
         "img_set": {"members": ["dev-1", "dev-2", "dev-3"]}},
        {"pairid": 12, "reference": "dev-4", "target_hard": "dev-5",
         "caption": "  ", "img_set": {"members": ["dev-4", "dev-5"]}},
    ]
    (root / "cap.rc2.val.json").write_text(json.dumps(rows))
    return root


class TestFashionIQ:
    def test_joins_phrases_with_and(self, fashioniq_root):
        records = read_fashioniq_queries(fashioniq_root, "val")
        byid = {r["query_id"]: r for r in records}
        assert byid["fiq-dress-val-00000"]["modifier_text"] == \
            "is red and has no sleeves"
        assert byid["fiq-dress-val-00000"]["reference_id"] == "B001"
        assert byid["fiq-dress-val-00000"]["target_id"] == "B002"
        assert byid["fiq-dress-val-00000"]["category"] == "dress"

    def test_single_phrase_kept_as_is(self, fashioniq_root):
        records = read_fashioniq_queries(fashioniq_root, "val")
        byid = {r["query_id"]: r for r in records}
        assert byid["fiq-dress-val-00001"]["modifier_text"] == "is shorter"

    def test_empty_phrases_dropped_not_joined(self, fashioniq_root):
        records = read_fashioniq_queries(fashioniq_root, "val")
        byid = {r["query_id"]: r for r in records}
        assert byid["fiq-shirt-val-00000"]["modifier_text"] == "has a collar"

    def test_captionless_record_skipped(self, fashioniq_root, caplog):
        with caplog.at_level("WARNING", logger="cirfuse_adapters"):
            records = read_fashioniq_queries(fashioniq_root, "val")
        assert not any(r["category"] == "toptee" for r in records)
        assert "no captions" in caplog.text

    def test_query_ids_unique(self, fashioniq_root):
        records = read_fashioniq_queries(fashioniq_root, "val")
        ids = [r["query_id"] for r in records]
        assert len(set(ids)) == len(ids) == 3

    def test_missing_annotation_file(self, fashioniq_root):
        with pytest.raises(AdapterError, match="cap.dress.test.json"):
            read_fashioniq_queries(fashioniq_root, "test")

    def test_malformed_record(self, fashioniq_root):
        path = fashioniq_root / "captions" / "cap.dress.val.json"
        path.write_text(json.dumps([{"candidate": "B001"}]))
        with pytest.raises(AdapterError, match="record 0 malformed"):
            read_fashioniq_queries(fashioniq_root, "val")


class TestCirr:
    def test_members_become_subset(self, cirr_root):
        records = read_cirr_queries(cirr_root, "val")
        assert len(records) == 1
        record = records[0]
        assert record["query_id"] == "cirr-11"
        assert record["reference_id"] == "dev-1"
        assert record["target_id"] == "dev-2"
        assert record["subset_ids"] == ["dev-1", "dev-2", "dev-3"]
        assert "category" not in record

    def test_blank_caption_skipped(self, cirr_root, caplog):
        with caplog.at_level("WARNING", logger="cirfuse_adapters"):
            records = read_cirr_queries(cirr_root, "val")
        assert all(r["query_id"] != "cirr-12" for r in records)
        assert "empty caption" in caplog.text

    def test_missing_file(self, cirr_root):
        with pytest.raises(AdapterError, match="cap.rc2.test.json"):
            read_cirr_queries(cirr_root, "test")


class TestFilter:
    RECORDS = [
        {"query_id": "q0", "reference_id": "a", "target_id": "b"},
        {"query_id": "q1", "reference_id": "a", "target_id": "missing"},
        {"query_id": "q2", "reference_id": "b", "target_id": "c",
         "subset_ids": ["b", "c", "ghost"]},
        {"query_id": "q3", "reference_id": "b", "target_id": "c",
         "subset_ids": ["ghost"]},
    ]

    def test_drops_unknown_refs_and_targets(self):
        kept, dropped = filter_to_known_items(
            [dict(r) for r in self.RECORDS], ["a", "b", "c"])
        assert [r["query_id"] for r in kept] == ["q0", "q2"]
        assert dropped == 2

    def test_prunes_subset_members(self):
        kept, _ = filter_to_known_items(
            [dict(r) for r in self.RECORDS], ["a", "b", "c"])
        q2 = next(r for r in kept if r["query_id"] == "q2")
        assert q2["subset_ids"] == ["b", "c"]

    def test_emptied_subset_drops_query(self):
        kept, dropped = filter_to_known_items(
            [dict(self.RECORDS[3])], ["a", "b", "c"])
        assert kept == []
        assert dropped == 1
