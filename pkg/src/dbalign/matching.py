"""MAP alignment as a maximum-weight perfect matching.

With a uniform prior on bijections the posterior is proportional to the
likelihood, so the MAP matching maximizes ``sum_u w[u, perm[u]]`` where
``w[u, v]`` is the log-probability of pairing entry ``u`` of the first database
with entry ``v`` of the second.  The solver is the O(n^3) shortest augmenting
path Hungarian method with dual potentials.  Forbidden (zero-probability)
cells are replaced by a finite sentinel that no finite-weight matching can
lose to.

Ties are broken towards the lexicographically smallest permutation.  Every
optimal matching lives on the zero-reduced-cost edges of the final duals, so
a greedy pass over that subgraph (row by row, smallest column first, keeping
a perfect matching alive through alternating cycles) finds it.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numba import njit

from dbalign.dist import DatabasePair, Matching, as_model, level_counts, log_likelihood, score_counts
from dbalign.errors import DimensionMismatch, Infeasible, TooLarge

BRUTE_FORCE_MAX_N = 8


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Square matrix of log-probabilities; ``-inf`` marks a forbidden pairing."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"weight matrix must be square, got shape {w.shape}")
        if np.isnan(w).any():
            raise ValueError("weight matrix contains NaN")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def total(self, m: Matching) -> float:
        return float(np.sum(self.w[np.arange(self.n), m.perm]))


@dataclass(frozen=True)
class CycleType:
    """Cycle counts ``{length: number of cycles}`` of ``m2^{-1} o m1``."""

    counts: dict
    n: int

    @property
    def fixed_points(self) -> int:
        return self.counts.get(1, 0)

    @property
    def differences(self) -> int:
        """Number of users on which the two matchings disagree."""
        return self.n - self.fixed_points

    def __getitem__(self, length: int) -> int:
        return self.counts.get(length, 0)


@njit(cache=True)
def _hungarian_min(cost):
    # shortest augmenting path with potentials; 1-based rows/columns, 0 is the virtual root
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm, u[1:].copy(), v[1:].copy()


@njit(cache=True)
def _lexicographic_min(tight, perm):
    n = perm.shape[0]
    perm = perm.copy()
    owner = np.empty(n, dtype=np.int64)
    for r in range(n):
        owner[perm[r]] = r
    parent_row = np.empty(n, dtype=np.int64)
    seen_col = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    for row in range(n):
        target = perm[row]
        for col in range(target):
            if not tight[row, col] or owner[col] < row:
                continue
            # alternating path from owner[col] to the column `row` would free
            start = owner[col]
            seen_col[:] = False
            seen_col[col] = True
            parent_row[start] = -1
            queue[0] = start
            head = 0
            tail = 1
            end_row = -1
            while head < tail and end_row < 0:
                r = queue[head]
                head += 1
                for c in range(n):
                    if seen_col[c] or not tight[r, c]:
                        continue
                    if c == target:
                        end_row = r
                        break
                    if owner[c] <= row:
                        continue
                    seen_col[c] = True
                    parent_row[owner[c]] = r
                    queue[tail] = owner[c]
                    tail += 1
            if end_row < 0:
                continue
            # each row on the path takes the column its successor held
            new_c = target
            r = end_row
            while r >= 0:
                old_c = perm[r]
                perm[r] = new_c
                owner[new_c] = r
                new_c = old_c
                r = parent_row[r]
            perm[row] = col
            owner[col] = row
            break
    return perm


def solve_assignment(weights) -> np.ndarray:
    """Maximum-weight perfect matching of a square weight matrix.

    Returns ``perm`` with ``perm[u] = v``, lexicographically smallest among
    optimal assignments.  Raises ``Infeasible`` if every perfect matching uses
    a ``-inf`` cell.
    """
    w = weights.w if isinstance(weights, WeightMatrix) else WeightMatrix(weights).w
    n = w.shape[0]
    finite = np.isfinite(w)
    if (w == np.inf).any():
        raise ValueError("weights may not be +inf")
    m_abs = float(np.max(np.abs(w[finite]))) if finite.any() else 0.0
    sentinel = -(2.0 * n * m_abs + 2.0)
    cost = -np.where(finite, w, sentinel)
    perm, u, v = _hungarian_min(np.ascontiguousarray(cost))
    if not finite[np.arange(n), perm].all():
        raise Infeasible("every perfect matching uses a zero-probability cell")
    tol = 1e-9 * (1.0 + m_abs) * n
    reduced = cost - u[:, None] - v[None, :]
    tight = (reduced <= tol) & finite
    return _lexicographic_min(tight, perm)


def build_weights(pair: DatabasePair, model) -> WeightMatrix:
    """``w[u, v] = sum_k log q[a_u[k], b_v[k]]``, ``-inf`` on zero cells."""
    model = as_model(model)
    pair.check_model(model)
    counts = level_counts(model, pair.entries_a[:, None, :], pair.entries_b[None, :, :])
    return WeightMatrix(score_counts(counts, model.base.levels[1]).reshape(pair.n, pair.n))


def map_estimate(pair: DatabasePair, model) -> Matching:
    """MAP matching of the two databases under ``model``."""
    model = as_model(model)
    wm = build_weights(pair, model)
    return Matching(solve_assignment(wm))


def brute_force_map(pair: DatabasePair, model) -> Matching:
    """Exhaustive argmax over all ``n!`` matchings; lexicographically first among ties."""
    model = as_model(model)
    pair.check_model(model)
    n = pair.n
    if n > BRUTE_FORCE_MAX_N:
        raise TooLarge(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    counts = level_counts(model, pair.entries_a[:, None, :], pair.entries_b[None, :, :])
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    totals = counts[np.arange(n), perms].sum(axis=1)
    scores = score_counts(totals, model.base.levels[1])
    best = int(np.argmax(scores))
    if scores[best] == -np.inf:
        raise Infeasible("every perfect matching uses a zero-probability cell")
    return Matching(perms[best])


def matching_score(pair: DatabasePair, m: Matching, model) -> float:
    """Total weight of ``m``; identical to its log-likelihood."""
    return log_likelihood(pair, m, model)


def cycle_type(m1: Matching, m2: Matching) -> CycleType:
    """Cycle type of the permutation ``u -> m2^{-1}(m1(u))``."""
    if m1.n != m2.n:
        raise DimensionMismatch(f"matchings have sizes {m1.n} and {m2.n}")
    sigma = m2.inverse().perm[m1.perm]
    seen = np.zeros(m1.n, dtype=bool)
    lengths = Counter()
    for start in range(m1.n):
        if seen[start]:
            continue
        length = 0
        u = start
        while not seen[u]:
            seen[u] = True
            u = sigma[u]
            length += 1
        lengths[length] += 1
    return CycleType(dict(sorted(lengths.items())), m1.n)
