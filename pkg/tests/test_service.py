from __future__ import annotations

import tempfile
import threading
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cirfuse.experiments import ablation_reports, grid_tables
from cirfuse.fusion import RetrievalParams, compose_query
from cirfuse.ranking import fuse_scores, score_candidates, top_k
from cirfuse.service import LoadedDataset, create_app, load_datasets
from cirfuse.store import (
    GalleryMeta,
    StoreError,
    gallery_from_arrays,
    write_gallery,
    write_queries,
)
from conftest import SEED, make_query_records, queryset_from_records


@pytest.fixture(scope="module")
def service():
    rng = np.random.default_rng(SEED)
    n, d, r = 24, 8, 3
    ids = [f"item_{j:03d}" for j in range(n)]
    meta = GalleryMeta(
        dataset="toy",
        split="val",
        embedder_id="unit-test",
        image_urls={ids[0]: "https://img.example/0.jpg"},
        caption_texts={ids[0]: ["first cap", "second cap", "third cap"]},
    )
    gallery = gallery_from_arrays(
        ids, rng.normal(size=(n, d)), rng.normal(size=(n * r, d)), r, meta
    )
    records, vectors = make_query_records(
        rng, gallery, count=9, with_categories=True, with_subsets=True
    )
    tmp = Path(tempfile.mkdtemp())
    qs = queryset_from_records(records, vectors, gallery, tmp)
    app = create_app({"toy": LoadedDataset(gallery, qs)}, heatmap_cell_budget=50)
    client = TestClient(app)
    return client, app, gallery, qs


class TestIntrospection:
    def test_healthz(self, service):
        client = service[0]
        body = client.get("/healthz").json()
        assert body == {"status": "ok", "datasets": ["toy"]}

    def test_datasets_metadata(self, service):
        client, _, gallery, qs = service
        body = client.get("/v1/datasets").json()
        assert body["datasets"] == [
            {
                "dataset": "toy",
                "split": "val",
                "embedder_id": "unit-test",
                "num_items": gallery.num_items,
                "captions_per_item": 3,
                "dim": gallery.dim,
                "num_queries": len(qs),
            }
        ]

    def test_queries_pagination(self, service):
        client = service[0]
        page = client.get("/v1/queries", params={"dataset": "toy", "offset": 2, "limit": 3})
        body = page.json()
        assert body["total"] == 9
        assert [q["query_id"] for q in body["queries"]] == ["q002", "q003", "q004"]
        assert body["queries"][0]["modifier_text"]
        assert body["queries"][0]["subset_ids"]

    def test_queries_unknown_dataset_404(self, service):
        client = service[0]
        resp = client.get("/v1/queries", params={"dataset": "nope"})
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "unknown_dataset"

    def test_root_lists_endpoints_without_ui(self, service):
        client = service[0]
        body = client.get("/").json()
        assert "/v1/retrieve" in body["endpoints"]


class TestRetrieve:
    def test_query_id_form_matches_engine_exactly(self, service):
        client, _, gallery, qs = service
        record = qs.records[3]
        resp = client.post(
            "/v1/retrieve",
            json={"dataset": "toy", "query_id": record.query_id, "alpha": 0.8,
                  "beta": 0.1, "k": 10},
        )
        assert resp.status_code == 200
        body = resp.json()
        params = RetrievalParams(alpha=0.8, beta=0.1, k=10)
        q, qnorm = compose_query(
            gallery.image_vectors.row(gallery.row_of(record.reference_id)),
            qs.modifier_vectors.data[3],
            0.8,
        )
        q2i, q2c = score_candidates(gallery, q, qnorm)
        fused = fuse_scores(q2i, q2c, 0.1)
        expected = top_k(gallery, fused, 10)
        assert [e["item_id"] for e in body["entries"]] == [it.item_id for it in expected]
        for entry in body["entries"]:
            row = gallery.row_of(entry["item_id"])
            assert entry["score"] == float(fused[row])
            assert entry["image_score"] == float(q2i[row])
            assert entry["caption_score"] == float(q2c[row])
        assert body["target_item_id"] == record.target_id
        flagged = [e["item_id"] for e in body["entries"] if e["is_target"]]
        assert flagged == [record.target_id] or flagged == []
        assert body["modifier_text"] == record.modifier_text
        assert body["params"]["alpha"] == 0.8

    def test_scores_descend_with_id_tiebreak(self, service):
        client = service[0]
        body = client.post(
            "/v1/retrieve", json={"dataset": "toy", "query_id": "q000", "k": 24}
        ).json()
        entries = body["entries"]
        for a, b in zip(entries, entries[1:]):
            assert (a["score"], b["item_id"]) >= (b["score"], a["item_id"])

    def test_inline_form(self, service):
        client, _, gallery, _ = service
        modifier = [1.0] + [0.0] * (gallery.dim - 1)
        resp = client.post(
            "/v1/retrieve",
            json={"dataset": "toy", "reference_id": "item_002",
                  "modifier_vector": modifier, "k": 5},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["entries"]) == 5
        assert body["reference_id"] == "item_002"
        assert body["target_item_id"] is None
        assert body["entries"][0]["is_target"] is None

    def test_enrichment_fields(self, service):
        client, _, gallery, _ = service
        modifier = [1.0] + [0.0] * (gallery.dim - 1)
        body = client.post(
            "/v1/retrieve",
            json={"dataset": "toy", "reference_id": "item_005",
                  "modifier_vector": modifier, "k": 24},
        ).json()
        by_id = {e["item_id"]: e for e in body["entries"]}
        assert by_id["item_000"]["image_url"] == "https://img.example/0.jpg"
        assert by_id["item_000"]["captions"] == ["first cap", "second cap", "third cap"]
        assert by_id["item_001"]["image_url"] is None

    def test_beta_boundaries_match_single_channels(self, service):
        client, _, gallery, qs = service
        q, qnorm = compose_query(
            gallery.image_vectors.row(gallery.row_of(qs.records[0].reference_id)),
            qs.modifier_vectors.data[0],
            0.8,
        )
        q2i, q2c = score_candidates(gallery, q, qnorm)
        for beta, channel in ((0.0, q2i), (1.0, q2c)):
            body = client.post(
                "/v1/retrieve",
                json={"dataset": "toy", "query_id": "q000", "beta": beta, "k": 24},
            ).json()
            expected = top_k(gallery, channel, 24)
            assert [e["item_id"] for e in body["entries"]] == [i.item_id for i in expected]
            for entry in body["entries"]:
                assert entry["score"] == float(channel[gallery.row_of(entry["item_id"])])

    def test_identical_requests_identical_bodies(self, service):
        client = service[0]
        payload = {"dataset": "toy", "query_id": "q004", "alpha": 0.4, "beta": 0.3, "k": 8}
        a = client.post("/v1/retrieve", json=payload).json()
        b = client.post("/v1/retrieve", json=payload).json()
        a.pop("timing_ms")
        b.pop("timing_ms")
        assert a == b

    @pytest.mark.parametrize(
        "payload,status,code",
        [
            ({"dataset": "ghost", "query_id": "q000"}, 404, "unknown_dataset"),
            ({"dataset": "toy", "query_id": "zzz"}, 404, "unknown_query"),
            ({"dataset": "toy"}, 400, "invalid_request"),
            (
                {"dataset": "toy", "query_id": "q000", "reference_id": "item_000",
                 "modifier_vector": [0.0]},
                400,
                "invalid_request",
            ),
            ({"dataset": "toy", "reference_id": "item_000"}, 400, "invalid_request"),
            ({"dataset": "toy", "query_id": "q000", "alpha": 1.5}, 400, "invalid_parameter"),
            (
                {"dataset": "toy", "query_id": "q000", "caption_subset": [9]},
                400,
                "invalid_parameter",
            ),
            (
                {"dataset": "toy", "reference_id": "item_000", "modifier_vector": [1.0, 2.0]},
                400,
                "invalid_parameter",
            ),
            (
                {"dataset": "toy", "reference_id": "ghost",
                 "modifier_vector": [1.0] * 8},
                404,
                "unknown_item",
            ),
        ],
    )
    def test_error_envelope(self, service, payload, status, code):
        client = service[0]
        resp = client.post("/v1/retrieve", json=payload)
        assert resp.status_code == status
        assert resp.json()["error"]["code"] == code

    def test_degenerate_query_422(self, rng, tmp_path):
        # one-hot reference so the renormalized inline modifier cancels it exactly
        images = np.zeros((3, 4))
        images[0, 0] = 2.0
        images[1, 1] = 1.0
        images[2, 2] = 1.0
        gallery = gallery_from_arrays(
            ["a", "b", "c"], images, rng.normal(size=(6, 4)), 2,
            GalleryMeta("mini", "val", "unit-test"),
        )
        records, vectors = make_query_records(rng, gallery, count=2)
        qs = queryset_from_records(records, vectors, gallery, tmp_path)
        client = TestClient(create_app({"mini": LoadedDataset(gallery, qs)}))
        resp = client.post(
            "/v1/retrieve",
            json={"dataset": "mini", "reference_id": "a",
                  "modifier_vector": [-1.0, 0.0, 0.0, 0.0], "alpha": 0.5},
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "degenerate_query"


class TestHeatmap:
    def test_cache_and_cross_check(self, service):
        client, app, gallery, qs = service
        params = {
            "dataset": "toy",
            "metric": "R@5",
            "alphas": "0.2,0.8",
            "betas": "0.0,0.5",
        }
        before = app.state.heatmap_computes
        first = client.get("/v1/heatmap", params=params).json()
        assert first["cached"] is False
        assert app.state.heatmap_computes == before + 1
        second = client.get("/v1/heatmap", params=params).json()
        assert second["cached"] is True
        assert app.state.heatmap_computes == before + 1
        first.pop("cached")
        second.pop("cached")
        assert first == second

        table = grid_tables(
            gallery, qs, (0.2, 0.8), (0.0, 0.5), metrics=("R@5",)
        )[0]
        assert first["values"] == [list(row) for row in table.values]
        assert first["alphas"] == [0.2, 0.8]
        assert first["betas"] == [0.0, 0.5]

    def test_budget_enforced(self, service):
        client = service[0]
        resp = client.get(
            "/v1/heatmap",
            params={"dataset": "toy", "alphas": ",".join(["0.5"] * 10),
                    "betas": ",".join(["0.5"] * 10)},
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "grid_too_large"

    def test_unknown_metric(self, service):
        client = service[0]
        resp = client.get(
            "/v1/heatmap",
            params={"dataset": "toy", "metric": "nope", "alphas": "0.5", "betas": "0.5"},
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "unknown_metric"

    def test_bad_grid_values(self, service):
        client = service[0]
        resp = client.get(
            "/v1/heatmap", params={"dataset": "toy", "alphas": "0.5,oops", "betas": "0.5"}
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "invalid_parameter"


class TestAblation:
    def test_matches_driver(self, service):
        client, _, gallery, qs = service
        body = client.get(
            "/v1/ablation", params={"dataset": "toy", "subsets": "1;1+2"}
        ).json()
        expected = ablation_reports(
            gallery, qs, RetrievalParams(), [(1,), (1, 2)]
        )
        assert [row["caption_subset"] for row in body["rows"]] == [[1], [1, 2]]
        for row, (_, report) in zip(body["rows"], expected):
            assert row["metrics"] == report.per_metric

    def test_default_covers_all_subsets(self, service):
        client = service[0]
        body = client.get("/v1/ablation", params={"dataset": "toy"}).json()
        assert len(body["rows"]) == 7


class TestConcurrency:
    def test_interleaved_requests_equal_serial(self, service):
        client = service[0]
        payloads = [
            {"dataset": "toy", "query_id": f"q00{i}", "alpha": 0.5, "beta": 0.2, "k": 6}
            for i in range(6)
        ]
        serial = []
        for p in payloads:
            body = client.post("/v1/retrieve", json=p).json()
            body.pop("timing_ms")
            serial.append(body)

        app = service[1]
        results = [None] * len(payloads)

        def hit(i):
            with TestClient(app) as own:
                body = own.post("/v1/retrieve", json=payloads[i]).json()
            body.pop("timing_ms")
            results[i] = body

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(len(payloads))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == serial


class TestAppConstruction:
    def test_requires_datasets(self):
        with pytest.raises(ValueError, match="at least one dataset"):
            create_app({})

    def test_load_datasets_rejects_duplicate_names(self, rng, tmp_path):
        from conftest import make_gallery

        pairs = []
        for sub in ("a", "b"):
            g = make_gallery(rng, n=6, d=4, r=2, dataset="same")
            records, vectors = make_query_records(rng, g, count=2)
            write_gallery(g, tmp_path / sub)
            write_queries(records, vectors, tmp_path / f"{sub}_q")
            pairs.append(
                (tmp_path / sub / "manifest.json", tmp_path / f"{sub}_q" / "queries.jsonl")
            )
        with pytest.raises(StoreError, match="dataset 'same'"):
            load_datasets(pairs)

    def test_static_ui_served(self, rng, tmp_path):
        from conftest import make_gallery

        g = make_gallery(rng, n=6, d=4, r=2)
        records, vectors = make_query_records(rng, g, count=2)
        qs = queryset_from_records(records, vectors, g, tmp_path)
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>explorer</title>")
        app = create_app({"toy": LoadedDataset(g, qs)}, ui_dir=ui)
        client = TestClient(app)
        assert "explorer" in client.get("/").text
        assert client.get("/healthz").json()["status"] == "ok"

    def test_missing_ui_dir_rejected(self, rng, tmp_path):
        from conftest import make_gallery

        g = make_gallery(rng, n=6, d=4, r=2)
        records, vectors = make_query_records(rng, g, count=2)
        qs = queryset_from_records(records, vectors, g, tmp_path)
        with pytest.raises(ValueError, match="UI directory not found"):
            create_app({"toy": LoadedDataset(g, qs)}, ui_dir=tmp_path / "nope")
