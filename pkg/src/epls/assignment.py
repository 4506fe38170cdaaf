"""Exact capacity-constrained assignment, used to check the greedy targets.

Finding the one-hot target closest to ``H`` in squared error, with every
unit used ``capacity`` times, is a bipartite matching problem.  Since
``||h - e_k||^2 = ||h||^2 + 1 - 2 h_k``, minimising the error is the same
as maximising ``sum_n H[n, k(n)]``.  Each unit is expanded into
``capacity`` slots and the resulting rows-by-slots problem is solved with
the shortest augmenting path (Hungarian) method.

The solvers here are cubic or exponential and guarded to test sizes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GuardError, ShapeError
from .model import l2_loss
from .target import remap_target

MAX_ROWS = 64
MAX_OUTPUTS = 16
MAX_BRUTE_ROWS = 8


def min_cost_matching(cost) -> np.ndarray:
    """Assign each row of ``cost`` to a distinct column, minimising the total.

    ``cost`` is ``(n, m)`` with ``n <= m``.  Returns the column index of
    each row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ShapeError(f"more rows than columns ({n} > {m})")
    # 1-based potentials, column 0 is a sentinel holding the row being inserted
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    rows_to_cols = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j]:
            rows_to_cols[owner[j] - 1] = j - 1
    return rows_to_cols


def max_weight_matching(score) -> np.ndarray:
    """One-to-one matching of rows to columns maximising the summed score."""
    return min_cost_matching(-np.asarray(score, dtype=np.float64))


def default_capacity(n_rows: int, n_outputs: int) -> int:
    return math.ceil(n_rows / n_outputs)


def _check_instance(H, capacity):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] < 1:
        raise ShapeError(f"H must be 2-D with at least one column, got {H.shape}")
    n, n_out = H.shape
    if capacity is None:
        capacity = default_capacity(n, n_out)
    if capacity * n_out < n:
        raise ShapeError(f"{n} rows do not fit in {n_out} outputs x {capacity} slots")
    return H, int(capacity)


def optimal_assignment(H, capacity: int | None = None):
    """Minimal squared-error one-hot target with each unit used at most ``capacity`` times.

    When ``len(H) == capacity * n_outputs`` every unit is used exactly
    ``capacity`` times.  ``capacity`` defaults to ``ceil(N / n_outputs)``.

    Returns
    -------
    winners : (N,) int64 array
    cost : float
        ``l2_loss(H, remap_target(winners))``.
    """
    H, capacity = _check_instance(H, capacity)
    n, n_out = H.shape
    if n > MAX_ROWS or n_out > MAX_OUTPUTS:
        raise GuardError(
            f"instance {n}x{n_out} exceeds the exact-solver guard {MAX_ROWS}x{MAX_OUTPUTS}"
        )
    slots = np.repeat(H, capacity, axis=1)  # column j*capacity+s is slot s of unit j
    winners = max_weight_matching(slots) // capacity
    return winners, l2_loss(H, remap_target(winners, n_out))


def brute_force_assignment(H, capacity: int | None = None):
    """Exhaustive search over every capacity-respecting assignment (N <= 8)."""
    H, capacity = _check_instance(H, capacity)
    n, n_out = H.shape
    if n > MAX_BRUTE_ROWS:
        raise GuardError(f"brute force limited to {MAX_BRUTE_ROWS} rows, got {n}")
    counts = [0] * n_out
    current = [0] * n
    best_score = -math.inf
    best = None

    def visit(row, score):
        nonlocal best_score, best
        if row == n:
            if score > best_score:
                best_score = score
                best = list(current)
            return
        for k in range(n_out):
            if counts[k] < capacity:
                counts[k] += 1
                current[row] = k
                visit(row + 1, score + H[row, k])
                counts[k] -= 1

    visit(0, 0.0)
    winners = np.array(best, dtype=np.int64)
    return winners, l2_loss(H, remap_target(winners, n_out))
