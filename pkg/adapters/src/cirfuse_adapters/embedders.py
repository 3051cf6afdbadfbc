"""Embedding backends.

Every backend maps bytes or text to unit float32 rows and carries an
`embedder_id` that names the model and dim, so a gallery records what
produced it. The hash backend exists for pipeline work without model
weights: same input bytes, same vector, on any machine.
"""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .formats import AdapterError, l2_normalize


class Embedder(Protocol):
    embedder_id: str
    dim: int

    def embed_images(self, paths: Sequence[Path]) -> np.ndarray: ...

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


def _hash_vector(payload: bytes, dim: int) -> np.ndarray:
    # sha256 -> seed keeps the projection a pure function of the content.
    digest = hashlib.sha256(payload).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim, dtype=np.float64).astype(np.float32)


class HashProjectionEmbedder:
    """Content-hash seeded Gaussian projection. Deterministic, weight-free.

    Useful for exercising the full extract -> ingest -> retrieve pipeline;
    the vectors carry no semantics, so recall numbers are noise.
    """

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise AdapterError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.embedder_id = f"hashproj-{dim}"

    def embed_images(self, paths: Sequence[Path]) -> np.ndarray:
        rows = np.empty((len(paths), self.dim), dtype=np.float32)
        for i, path in enumerate(paths):
            rows[i] = _hash_vector(Path(path).read_bytes(), self.dim)
        return l2_normalize(rows, "image embeddings")

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        rows = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            rows[i] = _hash_vector(text.encode("utf-8"), self.dim)
        return l2_normalize(rows, "text embeddings")


class ClipEmbedder:
    """CLIP via sentence-transformers, loaded lazily on first use."""

    def __init__(self, model_name: str = "clip-ViT-L-14", batch_size: int = 32):
        self.model_name = model_name
        self.batch_size = batch_size
        self.embedder_id = model_name.lower()
        self._model = None
        self.dim = 0

    def _load(self):
        if self._model is not None:
            return self._model
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise AdapterError(
                "CLIP backend needs the 'clip' extra: "
                "pip install 'cirfuse-adapters[clip]'"
            ) from exc
        try:
            self._model = SentenceTransformer(self.model_name)
        except Exception as exc:
            raise AdapterError(
                f"could not load {self.model_name!r} (weights unavailable "
                f"or download blocked): {exc}"
            ) from exc
        self.dim = int(self._model.get_sentence_embedding_dimension() or 768)
        return self._model

    def embed_images(self, paths: Sequence[Path]) -> np.ndarray:
        from PIL import Image

        model = self._load()
        images = [Image.open(p).convert("RGB") for p in paths]
        rows = model.encode(
            images, batch_size=self.batch_size,
            convert_to_numpy=True, show_progress_bar=False,
        )
        return l2_normalize(np.asarray(rows), "image embeddings")

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        model = self._load()
        rows = model.encode(
            list(texts), batch_size=self.batch_size,
            convert_to_numpy=True, show_progress_bar=False,
        )
        return l2_normalize(np.asarray(rows), "text embeddings")


_BACKENDS = {
    "hash": lambda dim: HashProjectionEmbedder(dim=dim),
    "clip": lambda dim: ClipEmbedder(),
}


def make_embedder(backend: str, dim: int = 64) -> Embedder:
    try:
        factory = _BACKENDS[backend]
    except KeyError:
        known = ", ".join(sorted(_BACKENDS))
        raise AdapterError(f"unknown backend {backend!r} (known: {known})") from None
    return factory(dim)
