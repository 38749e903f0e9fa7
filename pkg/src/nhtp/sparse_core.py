"""Hard thresholding and support-set helpers.

Supports are represented as sorted ``int64`` arrays. All selection uses the
canonical tie-break: larger magnitude first, then lower index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ThresholdResult:
    vector: np.ndarray
    support: np.ndarray
    sth_abs: float


def as_support(indices, n: int | None = None) -> np.ndarray:
    """Normalise an iterable of indices to a strictly increasing int64 array."""
    idx = np.unique(np.asarray(indices, dtype=np.int64).ravel())
    if n is not None and idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError(f"support indices must lie in [0, {n})")
    return idx


def complement(support: np.ndarray, n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[support] = False
    return np.flatnonzero(mask)


def _check_s(s: int) -> int:
    s = int(s)
    if s < 1:
        raise ValueError(f"sparsity level must be >= 1, got {s}")
    return s


def top_s_indices(u: np.ndarray, s: int) -> np.ndarray:
    """Indices of the ``s`` largest ``|u_i|`` under the canonical tie-break.

    Runs in O(n): a partition finds the s-th largest magnitude, everything
    strictly above it is kept, and the remaining slots are filled with the
    lowest-index entries that equal it.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    s = _check_s(s)
    if s >= n:
        return np.arange(n, dtype=np.int64)
    mag = np.abs(u)
    kth = np.partition(mag, n - s)[n - s]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: s - above.size]
    return np.sort(np.concatenate((above, ties)))


def hard_threshold(x, s: int) -> ThresholdResult:
    """Best s-sparse approximation of ``x`` (the operator P_s)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("hard_threshold requires finite input")
    support = top_s_indices(x, s)
    z = np.zeros_like(x)
    z[support] = x[support]
    sth = float(np.min(np.abs(x[support]))) if support.size else 0.0
    return ThresholdResult(vector=z, support=support, sth_abs=sth)


def best_s_support(u, s: int) -> np.ndarray:
    """A member of the best-s support family of ``u`` (canonical choice)."""
    return top_s_indices(u, s)


def sth_largest_abs(x, s: int) -> float:
    """The s-th largest absolute value of ``x`` (0 when s exceeds n)."""
    x = np.asarray(x, dtype=float)
    s = _check_s(s)
    if s > x.size:
        return 0.0
    return float(np.partition(np.abs(x), x.size - s)[x.size - s])


def support_diff(prev, cur) -> np.ndarray:
    """``prev \\ cur`` as a sorted index array."""
    return np.setdiff1d(np.asarray(prev, dtype=np.int64),
                        np.asarray(cur, dtype=np.int64), assume_unique=True)


def dist_to_projection(x, u, s: int) -> float:
    """Euclidean distance from ``x`` to the canonical member of P_s(u)."""
    return float(np.linalg.norm(np.asarray(x, dtype=float) - hard_threshold(u, s).vector))
