"""Query composition: blend a reference-image embedding with a text modifier.

The composed query is q = (1 - alpha)*v + alpha*t in float64, deliberately
not renormalized; scoring divides by ||q|| instead. alpha = 0 is pure image
search, alpha = 1 pure text.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cirfuse._kernels import vector_norm


class DegenerateQueryError(ValueError):
    """The composed query vector has zero norm, so cosine scores are undefined."""


@dataclass(frozen=True)
class RetrievalParams:
    """Knobs for one retrieval pass.

    caption_subset holds 1-based caption positions (None means all captions);
    it is stored sorted and deduplicated. exclude_reference drops the query's
    own reference item from the candidate pool.
    """

    alpha: float = 0.8
    beta: float = 0.1
    k: int = 50
    caption_subset: tuple[int, ...] | None = None
    exclude_ids: frozenset[str] = frozenset()
    exclude_reference: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.caption_subset is not None:
            subset = tuple(sorted(set(int(p) for p in self.caption_subset)))
            if not subset:
                raise ValueError("caption_subset must not be empty; use None for all")
            if subset[0] < 1:
                raise ValueError(f"caption positions are 1-based, got {subset[0]}")
            object.__setattr__(self, "caption_subset", subset)
        object.__setattr__(self, "exclude_ids", frozenset(self.exclude_ids))


def compose_query(
    reference: np.ndarray, modifier: np.ndarray, alpha: float
) -> tuple[np.ndarray, float]:
    """Blend the two embeddings; returns (q, ||q||) with q in float64.

    Raises DegenerateQueryError when the blend cancels to the zero vector
    (possible when the modifier opposes the reference).
    """
    if reference.shape != modifier.shape or reference.ndim != 1:
        raise ValueError(
            f"reference shape {reference.shape} and modifier shape {modifier.shape} "
            "must be equal 1-D vectors"
        )
    v = reference.astype(np.float64)
    t = modifier.astype(np.float64)
    q = (1.0 - alpha) * v + alpha * t
    qnorm = vector_norm(q)
    if qnorm == 0.0:
        raise DegenerateQueryError(f"composed query has zero norm at alpha={alpha}")
    return q, qnorm
