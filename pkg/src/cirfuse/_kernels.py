"""JIT-compiled inner loops with a pinned summation order.

Every dot product accumulates in float64 in strictly ascending index order,
so results are bit-identical to a plain Python loop and independent of
thread count. Rows are register-blocked four at a time; blocking is across
rows, never within one row's sum. The workqueue threading layer is forced
before numba loads: it is deterministic and available everywhere.
"""
from __future__ import annotations

import math
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba
import numpy as np
from numba import njit, prange

_BLOCK = 4


def max_threads() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def set_threads(n: int) -> int:
    """Clamp n to the launch-time thread budget and apply it."""
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n


@njit(parallel=True, cache=True)
def _matvec(mat, q, out):
    n, d = mat.shape
    nb = n // _BLOCK
    for b in prange(nb):
        i = _BLOCK * b
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        for j in range(d):
            qj = q[j]
            a0 += mat[i, j] * qj
            a1 += mat[i + 1, j] * qj
            a2 += mat[i + 2, j] * qj
            a3 += mat[i + 3, j] * qj
        out[i] = a0
        out[i + 1] = a1
        out[i + 2] = a2
        out[i + 3] = a3
    for i in range(_BLOCK * nb, n):
        acc = 0.0
        for j in range(d):
            acc += mat[i, j] * q[j]
        out[i] = acc


@njit(parallel=True, cache=True)
def _caption_mean_cosine(caps, q, qnorm, stride, rows, out):
    n = out.shape[0]
    r_sel = rows.shape[0]
    d = caps.shape[1]
    for i in prange(n):
        base = i * stride
        total = 0.0
        for s in range(r_sel):
            row = base + rows[s]
            acc = 0.0
            for j in range(d):
                acc += caps[row, j] * q[j]
            c = acc / qnorm
            if c > 1.0:
                c = 1.0
            elif c < -1.0:
                c = -1.0
            total += c
        out[i] = total / r_sel


@njit(cache=True)
def _sq_sum(q):
    acc = 0.0
    for j in range(q.shape[0]):
        acc += q[j] * q[j]
    return acc


def vector_norm(q: np.ndarray) -> float:
    """L2 norm with ascending-order accumulation."""
    return math.sqrt(_sq_sum(q))


def dot_rows(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """float64 row dots of a float32 matrix against a float64 vector."""
    out = np.empty(mat.shape[0], dtype=np.float64)
    _matvec(mat, q, out)
    return out


def caption_mean_cosines(
    caps: np.ndarray, q: np.ndarray, qnorm: float, stride: int, rows: np.ndarray, count: int
) -> np.ndarray:
    """Per item: mean over `rows` (offsets within the item's caption block)
    of the clamped cosine between q and that caption row.

    Cosines are clamped to [-1, 1] individually, then summed in ascending
    offset order and divided by the subset size.
    """
    out = np.empty(count, dtype=np.float64)
    _caption_mean_cosine(caps, q, qnorm, stride, rows, out)
    return out
