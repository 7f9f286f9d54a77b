"""Maximum-similarity matching between the queries of a class and its centroids."""

from __future__ import annotations

import math

import numpy as np

# Slack used when comparing reduced costs in the augmenting search.
EPS = 1e-12


def hungarian_min(cost) -> list[int]:
    """Min-cost perfect assignment for a square matrix.

    Shortest-augmenting-path Hungarian method with row/column potentials,
    O(n^3). Rows are inserted in index order and columns scanned in index
    order; a column only replaces the current best when it is better by more
    than ``EPS``, so ties resolve to the lowest index.

    Returns ``assignment`` with ``assignment[row] = column``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return []
    rows = c.tolist()

    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # owner[j]: 1-based row matched to column j
    way = [0] * (n + 1)

    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = rows[i0 - 1]
            ui = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - ui - v[j]
                if cur < minv[j] - EPS:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta - EPS:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    assignment = [-1] * n
    for j in range(1, n + 1):
        assignment[owner[j] - 1] = j - 1
    return assignment


def hungarian_max(score) -> list[int]:
    """Permutation ``sigma`` maximizing ``sum_i score[i][sigma[i]]``."""
    s = np.asarray(score, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"score matrix must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("score matrix has non-finite entries")
    return hungarian_min(-s)


def assignment_value(score, sigma) -> float:
    s = np.asarray(score, dtype=np.float64)
    return float(sum(s[i, j] for i, j in enumerate(sigma)))


def match_queries_to_centroids(queries, centroids) -> list[int]:
    """Solve ``argmax_sigma sum_i q_i . c_sigma(i)`` for K queries and K centroids."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    c = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if q.shape[0] != c.shape[0]:
        raise ValueError(f"{q.shape[0]} queries but {c.shape[0]} centroids")
    if q.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {c.shape[1]}")
    return hungarian_max(q @ c.T)
