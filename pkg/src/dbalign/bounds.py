"""Generating functions and error-probability bounds for MAP alignment.

For two matchings ``m1``, ``m2`` and matrices ``x``, ``y`` the generating
function ``B_{m1,m2}(x, y)`` sums, over every database pair, the product of the
joint-type monomials of ``m1`` in ``x`` and of ``m2`` in ``y``.  It factorizes
over the cycles of ``m2^{-1} o m1`` into traces ``b_l(x, y) = tr((x y^T)^l)``.
At ``x = y = sqrt(p)`` it upper-bounds the probability that ``m2`` scores at
least as well as the true matching ``m1``; since ``b_1 = 1`` and
``b_l <= b_2^{l/2}``, a matching differing in ``d`` places loses with
probability at most ``b_2^{d/2}``.  Summing over all matchings gives the union
bound behind exact recovery; the converse side is represented by the
Chernoff exponent curve and the second-moment ratio.

Bounds are accumulated in log space; ``b_2^{reps d / 2}`` underflows long
before the interesting regime ends.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from dbalign.dist import (
    Matching,
    ProductForm,
    as_model,
    entrywise_power,
    level_counts,
    make_rng,
    mix_seed,
    score_counts,
)
from dbalign.errors import DegenerateEps, DimensionMismatch, TooLarge
from dbalign.matching import CycleType

MAX_ENUMERATION = 10**7


@dataclass(frozen=True)
class ExponentPoint:
    theta: float
    value: float


@dataclass(frozen=True)
class UnionTerm:
    d: int
    count_cap: float
    term: float


@dataclass(frozen=True)
class UnionBoundReport:
    n: int
    b2: float
    log_b2: float
    cmi2_nats: float
    threshold_nats: float
    margin_nats: float
    condition_holds: bool
    terms: list = field(default_factory=list)
    total: float = math.inf
    log_total: float = math.inf
    geometric_cap: float | None = None
    conclusive: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SecondMomentReport:
    n: int
    eps1: float
    eps2: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mat(x) -> np.ndarray:
    return np.asarray(getattr(x, "matrix", x), dtype=np.float64)


def b_circ(x, y, order: int) -> float:
    """``tr((x y^T)^order)``, evaluated on the smaller of ``x y^T`` and ``y^T x``."""
    x, y = _mat(x), _mat(y)
    if x.shape != y.shape or x.ndim != 2:
        raise DimensionMismatch(f"b_circ needs equal 2-D shapes, got {x.shape} and {y.shape}")
    if int(order) != order or order < 1:
        raise ValueError("order must be an integer >= 1")
    g = x @ y.T if x.shape[0] <= x.shape[1] else y.T @ x
    return float(np.trace(np.linalg.matrix_power(g, int(order))))


def B_via_cycles(ct: CycleType, x, y) -> float:
    """``prod_l b_l(x, y)^{t_l}`` over the cycle type ``ct``."""
    out = 1.0
    for length, count in ct.counts.items():
        out *= b_circ(x, y, length) ** count
    return out


def B_direct(m1: Matching, m2: Matching, x, y) -> float:
    """Brute-force ``B_{m1,m2}(x, y)``: sum over all database pairs of ``t(m1; x) t(m2; y)``."""
    x, y = _mat(x), _mat(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"x and y have shapes {x.shape} and {y.shape}")
    if m1.n != m2.n:
        raise DimensionMismatch(f"matchings have sizes {m1.n} and {m2.n}")
    n = m1.n
    size_a, size_b = x.shape
    if size_a**n * size_b**n > MAX_ENUMERATION:
        raise TooLarge(f"{size_a}^{n} x {size_b}^{n} database pairs exceed {MAX_ENUMERATION}")
    fa = np.array(list(itertools.product(range(size_a), repeat=n)), dtype=np.int64).reshape(-1, n)
    fb = np.array(list(itertools.product(range(size_b), repeat=n)), dtype=np.int64).reshape(-1, n)
    t1 = np.ones((len(fa), len(fb)))
    t2 = np.ones((len(fa), len(fb)))
    for u in range(n):
        t1 *= x[fa[:, u][:, None], fb[:, m1.perm[u]][None, :]]
        t2 *= y[fa[:, u][:, None], fb[:, m2.perm[u]][None, :]]
    return float(np.sum(t1 * t2))


def b2_of(model) -> float:
    """``b_2(z, z)`` of the base distribution, ``z = sqrt(q)``."""
    z = np.sqrt(as_model(model).base.matrix)
    return b_circ(z, z, 2)


def log_b2(model) -> float:
    """``log b_2(sqrt(p), sqrt(p))`` for the full product model; equals ``-cycle_mi(model, 2)``."""
    model = as_model(model)
    return model.reps * math.log(b2_of(model))


def pairwise_error_bound(model, d: int) -> float:
    """Upper bound ``b_2^{d/2}`` on the chance that a matching off by ``d`` users wins."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return math.exp(d / 2 * log_b2(model))


def three_matchings_bound(model, d: int) -> float:
    """Upper bound on the joint chance that two transpositions both beat the truth.

    ``d`` is the number of users on which the two competing matchings differ,
    3 or 4 for pairs of transpositions.
    """
    if d not in (3, 4):
        raise ValueError("d must be 3 or 4")
    return math.exp(d / 2 * log_b2(model))


def union_bound(model, n: int) -> UnionBoundReport:
    """``sum_{d=2}^n n^d b_2^{d/2}`` with its geometric-series cap."""
    if n < 2:
        raise ValueError("n must be >= 2")
    lb2 = log_b2(model)
    log_n = math.log(n)
    log_terms = np.array([d * log_n + d / 2 * lb2 for d in range(2, n + 1)])
    terms = [
        UnionTerm(d, float(n) ** d if d * log_n < 709 else math.inf, math.exp(lt) if lt < 709 else math.inf)
        for d, lt in zip(range(2, n + 1), log_terms)
    ]
    top = log_terms.max()
    log_total = float(top + math.log(np.sum(np.exp(log_terms - top))))
    total = math.exp(log_total) if log_total < 709 else math.inf
    log_ratio = log_n + lb2 / 2
    cap = None
    if log_ratio < 0:
        log_cap = 2 * log_n + lb2 - math.log(-math.expm1(log_ratio))
        cap = math.exp(log_cap)
        # the finite sum is strictly below the series; undo last-ulp rounding
        total = min(total, cap)
        log_total = min(log_total, log_cap)
    cmi2 = -lb2
    threshold = 2 * log_n
    return UnionBoundReport(
        n=n,
        b2=math.exp(lb2),
        log_b2=lb2,
        cmi2_nats=cmi2,
        threshold_nats=threshold,
        margin_nats=cmi2 - threshold,
        condition_holds=cmi2 >= threshold,
        terms=terms,
        total=total,
        log_total=log_total,
        geometric_cap=cap,
        conclusive=cap is not None and total < 1.0,
    )


def exponent_curve(q, thetas) -> list[ExponentPoint]:
    """Chernoff moment curve ``theta -> b_2(q^theta, q^(1-theta))`` of one coordinate."""
    q = _mat(q)
    out = []
    for theta in thetas:
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        out.append(ExponentPoint(theta, b_circ(entrywise_power(q, theta), entrywise_power(q, 1.0 - theta), 2)))
    return out


def curve_diagnostics(points: list[ExponentPoint]) -> dict:
    """Symmetry error, worst discrete log-convexity defect and argmin of a curve on a uniform grid."""
    thetas = np.array([p.theta for p in points])
    vals = np.array([p.value for p in points])
    order = np.argsort(thetas)
    thetas, vals = thetas[order], vals[order]
    sym = float(np.max(np.abs(vals - vals[::-1]))) if np.allclose(thetas, 1 - thetas[::-1]) else math.nan
    logs = np.log(vals)
    second = logs[:-2] - 2 * logs[1:-1] + logs[2:] if len(logs) >= 3 else np.zeros(0)
    return {
        "symmetry_error": sym,
        "min_second_difference": float(second.min()) if second.size else 0.0,
        "argmin_theta": float(thetas[int(np.argmin(vals))]),
    }


def second_moment_ratio(n: int, eps1: float, eps2: float) -> SecondMomentReport:
    """Chebyshev bound ``E[X^2]/E[X]^2 - 1`` on ``Pr[X = 0]``, X the number of transposition errors.

    Inconsistent inputs (``eps2`` too far below ``eps1**2``) would give a
    negative variance; the ratio is clamped at 0.
    """
    if n < 4:
        raise ValueError("n must be >= 4")
    for name, e in (("eps1", eps1), ("eps2", eps2)):
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if eps1 == 0:
        raise DegenerateEps("eps1 = 0 makes E[X] vanish")
    c2, c3 = math.comb(n, 2), math.comb(n, 3)
    num = c2 * (eps1 - eps1 * eps1) + 6 * c3 * (eps2 - eps1 * eps1)
    return SecondMomentReport(n, eps1, eps2, max(0.0, num / (c2 * eps1) ** 2))


# --- error probabilities of transposition events ---------------------------

TRANSPOSITION = Matching([1, 0])
PAIR_OF_TRANSPOSITIONS = (Matching([1, 0, 2]), Matching([2, 1, 0]))


def _cell_counts(model: ProductForm) -> np.ndarray:
    """Level counts of every cell of the materialized ``q^{(x)reps}``, shape ``(A, B, K)``."""
    level_of_cell, log_level = model.base.levels
    k = len(log_level)
    onehot = np.eye(k, dtype=np.int64)[level_of_cell]
    out = onehot
    for _ in range(model.reps - 1):
        a1, b1, _k = out.shape
        out = (out[:, None, :, None, :] + onehot[None, :, None, :, :]).reshape(
            a1 * model.size_a, b1 * model.size_b, k
        )
    return out


def _events(model: ProductForm, a: np.ndarray, b: np.ndarray, cell_counts, rivals) -> list[np.ndarray]:
    """For entries ``a[..., u]``, ``b[..., u]`` drawn along the identity, whether each rival scores >= truth."""
    log_level = model.base.levels[1]
    users = a.shape[-1]
    truth = score_counts(sum(cell_counts[a[..., u], b[..., u]] for u in range(users)), log_level)
    out = []
    for m in rivals:
        rival = score_counts(sum(cell_counts[a[..., u], b[..., m.perm[u]]] for u in range(users)), log_level)
        out.append(rival >= truth)
    return out


def _exact(model, rivals) -> list[float]:
    model = as_model(model)
    users = rivals[0].n
    cells = (model.size_a * model.size_b) ** model.reps
    if cells**users > MAX_ENUMERATION:
        raise TooLarge(f"{cells}^{users} joint outcomes exceed {MAX_ENUMERATION}")
    p = model.materialize().matrix
    cc = _cell_counts(model)
    grid = np.array(list(itertools.product(range(cells), repeat=users)), dtype=np.int64).reshape(-1, users)
    a, b = np.divmod(grid, p.shape[1])
    prob = np.prod(p[a, b], axis=1)
    events = _events(model, a, b, cc, rivals)
    return [float(np.sum(prob[np.logical_and.reduce(events[: i + 1])])) for i in range(len(events))]


def transposition_error_exact(model) -> float:
    """Exact ``Pr[a transposition scores >= the truth]`` by enumeration (ties count as errors)."""
    return _exact(model, [TRANSPOSITION])[0]


def joint_transposition_error_exact(model) -> float:
    """Exact probability that two transpositions sharing one user both beat the truth."""
    return _exact(model, list(PAIR_OF_TRANSPOSITIONS))[1]


def _sample_users(model: ProductForm, rng, trials: int, users: int) -> tuple[np.ndarray, np.ndarray]:
    cdf = np.cumsum(model.base.matrix.ravel())
    cdf /= cdf[-1]
    last_positive = int(np.flatnonzero(model.base.matrix.ravel() > 0)[-1])
    cell = np.minimum(np.searchsorted(cdf, rng.random((trials, users, model.reps)), side="right"), last_positive)
    return np.divmod(cell, model.size_b)


def estimate_error_probs(model, trials: int, seed: int, chunk: int = 20000) -> dict:
    """Monte-Carlo ``eps1`` and ``eps2`` with shared draws for both events.

    Each trial draws three matched users; ``eps1`` is the rate at which
    swapping users 0 and 1 wins, ``eps2`` the rate at which that swap and the
    swap of users 0 and 2 both win.  Chunks are seeded by index so results
    depend only on ``(model, trials, seed, chunk)``.
    """
    model = as_model(model)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rivals = [Matching([1, 0, 2]), Matching([2, 1, 0])]
    hits1 = hits2 = 0
    for index, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = make_rng(mix_seed(seed, index))
        a, b = _sample_users(model, rng, size, 3)
        e1, e2 = _per_coordinate_events(model, a, b, rivals)
        hits1 += int(e1.sum())
        hits2 += int((e1 & e2).sum())
    eps1, eps2 = hits1 / trials, hits2 / trials
    return {
        "trials": trials,
        "eps1": eps1,
        "eps1_se": math.sqrt(eps1 * (1 - eps1) / trials),
        "eps2": eps2,
        "eps2_se": math.sqrt(eps2 * (1 - eps2) / trials),
    }


def _per_coordinate_events(model: ProductForm, a, b, rivals) -> list[np.ndarray]:
    # a, b: (trials, users, reps) symbol indices of the base alphabet
    log_level = model.base.levels[1]
    users = a.shape[1]
    truth = score_counts(sum(level_counts(model, a[:, u], b[:, u]) for u in range(users)), log_level)
    out = []
    for m in rivals:
        rival = score_counts(sum(level_counts(model, a[:, u], b[:, m.perm[u]]) for u in range(users)), log_level)
        out.append(rival >= truth)
    return out
