import sys

import numpy as np
import pytest

from cirfuse_adapters.embedders import (
    ClipEmbedder,
    HashProjectionEmbedder,
    make_embedder,
)
from cirfuse_adapters.formats import AdapterError


class TestHashProjection:
    def test_deterministic_across_instances(self, tmp_path):
        path = tmp_path / "a.jpg"
        path.write_bytes(b"pixels")
        one = HashProjectionEmbedder(dim=32).embed_images([path])
        two = HashProjectionEmbedder(dim=32).embed_images([path])
        assert one.tobytes() == two.tobytes()

    def test_content_addressed_not_path_addressed(self, tmp_path):
        a, b = tmp_path / "a.jpg", tmp_path / "renamed.jpg"
        a.write_bytes(b"same bytes")
        b.write_bytes(b"same bytes")
        vecs = HashProjectionEmbedder(dim=16).embed_images([a, b])
        assert np.array_equal(vecs[0], vecs[1])

    def test_different_content_differs(self, tmp_path):
        a, b = tmp_path / "a.jpg", tmp_path / "b.jpg"
        a.write_bytes(b"one")
        b.write_bytes(b"two")
        vecs = HashProjectionEmbedder(dim=16).embed_images([a, b])
        assert not np.array_equal(vecs[0], vecs[1])

    def test_text_matches_same_payload_bytes(self, tmp_path):
        path = tmp_path / "a.jpg"
        path.write_bytes("caption text".encode("utf-8"))
        embedder = HashProjectionEmbedder(dim=24)
        from_image = embedder.embed_images([path])
        from_text = embedder.embed_texts(["caption text"])
        assert from_image.tobytes() == from_text.tobytes()

    def test_unit_rows(self):
        vecs = HashProjectionEmbedder(dim=48).embed_texts(["a", "b", "c"])
        norms = np.linalg.norm(vecs.astype(np.float64), axis=1)
        assert np.abs(norms - 1.0).max() < 1e-6

    def test_embedder_id_names_dim(self):
        assert HashProjectionEmbedder(dim=64).embedder_id == "hashproj-64"

    def test_tiny_dim_rejected(self):
        with pytest.raises(AdapterError, match="dim"):
            HashProjectionEmbedder(dim=1)


class TestClipLazy:
    def test_construction_does_not_load(self):
        embedder = ClipEmbedder()
        assert embedder._model is None
        assert embedder.embedder_id == "clip-vit-l-14"

    def test_missing_extra_raises_install_hint(self, monkeypatch, tmp_path):
        monkeypatch.setitem(sys.modules, "sentence_transformers", None)
        path = tmp_path / "a.jpg"
        path.write_bytes(b"x")
        with pytest.raises(AdapterError, match="clip"):
            ClipEmbedder().embed_texts(["x"])


class TestFactory:
    def test_hash_backend(self):
        embedder = make_embedder("hash", dim=16)
        assert embedder.dim == 16

    def test_unknown_backend_lists_known(self):
        with pytest.raises(AdapterError, match="clip, hash"):
            make_embedder("resnet")
