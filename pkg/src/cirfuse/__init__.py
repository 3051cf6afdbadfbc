"""Training-free composed image retrieval over precomputed embeddings."""
from cirfuse.fusion import DegenerateQueryError, RetrievalParams, compose_query
from cirfuse.ranking import RankedItem, RankedList, retrieve, score_candidates
from cirfuse.store import (
    EmbeddingMatrix,
    GalleryIndex,
    GalleryMeta,
    QueryRecord,
    QuerySet,
    StoreError,
    gallery_from_arrays,
    load_gallery,
    load_queries,
    normalize_rows,
    write_gallery,
    write_queries,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateQueryError",
    "EmbeddingMatrix",
    "GalleryIndex",
    "GalleryMeta",
    "QueryRecord",
    "QuerySet",
    "RankedItem",
    "RankedList",
    "RetrievalParams",
    "StoreError",
    "compose_query",
    "gallery_from_arrays",
    "load_gallery",
    "load_queries",
    "normalize_rows",
    "retrieve",
    "score_candidates",
    "write_gallery",
    "write_queries",
]
