"""Linear assignment with an opt-out ("miss") price per row.

Each of the N rows of a cost matrix is either matched to a distinct column or
declared MISS at ``miss_cost``. The exact solver augments the N x M matrix with
N private miss columns (only the diagonal of that block is allowed) and hands
the square-ish problem to scipy's Hungarian-type solver.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgument, SizeLimitError

MISS = -1
BRUTE_FORCE_MAX_ROWS = 8


@dataclass(frozen=True)
class Assignment:
    """Per-row column index (``MISS`` for opted-out rows) and the total cost."""

    cols: tuple
    total_cost: float

    @property
    def matches(self):
        return [(r, c) for r, c in enumerate(self.cols) if c != MISS]

    def __len__(self):
        return len(self.cols)


def _prepare(c, miss_cost):
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1 and c.size == 0:
        c = c.reshape(0, 0)
    if c.ndim != 2:
        raise InvalidArgument(f"cost matrix must be 2-D, got shape {c.shape}")
    if np.isnan(c).any():
        raise InvalidArgument("cost matrix contains NaN")
    miss = np.broadcast_to(np.asarray(miss_cost, dtype=np.float64), (c.shape[0],))
    if not np.all(np.isfinite(miss)) or np.any(miss < 0):
        raise InvalidArgument("miss_cost must be finite and non-negative")
    return c, miss


def _total(c, miss, cols):
    return math.fsum(miss[r] if j == MISS else c[r, j] for r, j in enumerate(cols))


def solve_lap(c, miss_cost):
    """Minimum-cost one-to-one assignment where rows may opt out.

    ``miss_cost`` is a scalar or one value per row. ``+inf`` entries of ``c``
    mark forbidden pairs.
    """
    c, miss = _prepare(c, miss_cost)
    n, m = c.shape
    if n == 0:
        return Assignment((), 0.0)
    if m == 0:
        return Assignment((MISS,) * n, math.fsum(miss))
    aug = np.full((n, m + n), np.inf)
    aug[:, :m] = c
    aug[np.arange(n), m + np.arange(n)] = miss
    rows, cols = linear_sum_assignment(aug)
    out = [MISS] * n
    for r, j in zip(rows, cols):
        out[r] = int(j) if j < m else MISS
    return Assignment(tuple(out), _total(c, miss, out))


@lru_cache(maxsize=64)
def _injections(n, m):
    """All maps row -> column-or-MISS with distinct columns, in lexicographic
    order where MISS (encoded as ``m``) sorts after every real column."""
    out = []
    chosen = [0] * n
    used = [False] * m

    def rec(r):
        if r == n:
            out.append(tuple(chosen))
            return
        for j in range(m):
            if not used[j]:
                used[j] = True
                chosen[r] = j
                rec(r + 1)
                used[j] = False
        chosen[r] = m
        rec(r + 1)

    rec(0)
    arr = np.array(out, dtype=np.int64).reshape(len(out), n)
    arr.setflags(write=False)
    return arr


def brute_force_lap(c, miss_cost):
    """Exhaustive enumeration of every assignment (test oracle, N <= 8).

    Among exactly tied optima the lexicographically first one wins: lower
    column indices are preferred and MISS comes last.
    """
    c, miss = _prepare(c, miss_cost)
    n, m = c.shape
    if n > BRUTE_FORCE_MAX_ROWS:
        raise SizeLimitError(f"brute force limited to {BRUTE_FORCE_MAX_ROWS} rows, got {n}")
    if n == 0:
        return Assignment((), 0.0)
    aug = np.concatenate([c, miss[:, None]], axis=1)
    inj = _injections(n, m)
    costs = aug[np.arange(n), inj].sum(axis=1)
    best = inj[int(np.argmin(costs))]
    cols = tuple(MISS if j == m else int(j) for j in best)
    return Assignment(cols, _total(c, miss, cols))
