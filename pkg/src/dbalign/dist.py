"""Joint distributions, product models and correlated database pairs.

A database pair is generated by drawing a uniformly random bijection between
the two user sets and then, for every matched pair of users, ``reps``
independent coordinate pairs from a base joint distribution ``q``.  The
effective per-user distribution is therefore the tensor power ``q^{(x)reps}``,
which is never materialized by the sampler or by the likelihood code.

Log-likelihoods are evaluated through *levels*: the distinct positive values of
``q``.  A matching's score is the integer count of cells that fall on each
level, dotted with the log of the levels in a fixed order.  Two matchings with
the same level counts therefore get bit-identical scores, which makes ties and
argmax comparisons exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from dbalign.errors import DimensionMismatch, NegativeEntry, NotNormalized, SizeOverflow

NORMALIZATION_TOL = 1e-9
MAX_MATERIALIZED = 10**7
SEED_MASK = (1 << 64) - 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability matrix over ``X_a x X_b`` with cached marginals."""

    matrix: np.ndarray
    marginal_a: np.ndarray = field(init=False)
    marginal_b: np.ndarray = field(init=False)

    def __post_init__(self):
        m = _frozen(np.asarray(self.matrix, dtype=np.float64))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "marginal_a", _frozen(m.sum(axis=1)))
        object.__setattr__(self, "marginal_b", _frozen(m.sum(axis=0)))

    @property
    def size_a(self) -> int:
        return self.matrix.shape[0]

    @property
    def size_b(self) -> int:
        return self.matrix.shape[1]

    @property
    def T(self) -> "JointDistribution":
        return JointDistribution(self.matrix.T)

    @cached_property
    def levels(self) -> tuple[np.ndarray, np.ndarray]:
        """``(level_of_cell, log_level)``.

        ``level_of_cell[i, j]`` indexes into ``log_level``; zero cells map to the
        last index whose log is ``-inf``.
        """
        values, inverse = np.unique(self.matrix.ravel(), return_inverse=True)
        positive = values > 0
        n_pos = int(positive.sum())
        # np.unique sorts ascending so a zero value, if present, is index 0
        if n_pos < len(values):
            inverse = np.where(inverse == 0, n_pos, inverse - 1)
        log_level = np.append(np.log(values[positive]), -np.inf)
        return _frozen(inverse.reshape(self.matrix.shape)), _frozen(log_level)

    def __repr__(self):
        return f"JointDistribution({self.matrix.tolist()!r})"


@dataclass(frozen=True, eq=False)
class ProductForm:
    """``base`` tensored ``reps`` times; each database entry has ``reps`` coordinates."""

    base: JointDistribution
    reps: int = 1

    def __post_init__(self):
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValueError(f"reps must be a positive integer, got {self.reps!r}")
        object.__setattr__(self, "reps", int(self.reps))

    @property
    def size_a(self) -> int:
        return self.base.size_a

    @property
    def size_b(self) -> int:
        return self.base.size_b

    def materialize(self) -> JointDistribution:
        return tensor_power(self.base, self.reps)


def as_model(model) -> ProductForm:
    """Accept a ``ProductForm``, a ``JointDistribution`` or a raw matrix."""
    if isinstance(model, ProductForm):
        return model
    if isinstance(model, JointDistribution):
        return ProductForm(model, 1)
    return ProductForm(new_joint(model), 1)


@dataclass(frozen=True, eq=False)
class DatabasePair:
    """Two databases of ``n`` entries; entry ``u`` is a vector of ``reps`` symbols."""

    entries_a: np.ndarray
    entries_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries_a, dtype=np.int64)
        b = np.asarray(self.entries_b, dtype=np.int64)
        if a.ndim == 1:
            a = a[:, None]
        if b.ndim == 1:
            b = b[:, None]
        if a.ndim != 2 or a.shape != b.shape:
            raise DimensionMismatch(f"entry arrays must have equal 2-D shapes, got {a.shape} and {b.shape}")
        object.__setattr__(self, "entries_a", _frozen(a))
        object.__setattr__(self, "entries_b", _frozen(b))

    @property
    def n(self) -> int:
        return self.entries_a.shape[0]

    @property
    def reps(self) -> int:
        return self.entries_a.shape[1]

    def check_model(self, model: ProductForm) -> None:
        if self.reps != model.reps:
            raise DimensionMismatch(f"entries have {self.reps} coordinates, model has reps={model.reps}")
        for name, e, size in (("a", self.entries_a, model.size_a), ("b", self.entries_b, model.size_b)):
            if e.size and (e.min() < 0 or e.max() >= size):
                raise DimensionMismatch(f"entries_{name} has symbols outside alphabet of size {size}")


@dataclass(frozen=True, eq=False)
class Matching:
    """Bijection stored as ``perm[u] = v``."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.perm, dtype=np.int64).ravel()
        if not np.array_equal(np.sort(p), np.arange(len(p))):
            raise ValueError(f"not a permutation: {p.tolist()}")
        object.__setattr__(self, "perm", _frozen(p))

    @classmethod
    def identity(cls, n: int) -> "Matching":
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        return len(self.perm)

    def inverse(self) -> "Matching":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n)
        return Matching(inv)

    def agreements(self, other: "Matching") -> int:
        """``|self & other|``, the number of users matched identically."""
        return int(np.sum(self.perm == other.perm))

    def __eq__(self, other):
        return isinstance(other, Matching) and np.array_equal(self.perm, other.perm)

    def __hash__(self):
        return hash(self.perm.tobytes())

    def __repr__(self):
        return f"Matching({self.perm.tolist()})"


def new_joint(matrix) -> JointDistribution:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatch(f"joint distribution must be a nonempty 2-D matrix, got shape {m.shape}")
    if np.isnan(m).any():
        raise NotNormalized("matrix contains NaN")
    if (m < 0).any():
        raise NegativeEntry("joint distribution has a negative entry")
    total = m.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"entries sum to {total!r}, expected 1")
    return JointDistribution(m)


def entrywise_power(x, theta: float) -> np.ndarray:
    """``x ** theta`` entrywise, with ``0 ** 0 = 0`` so the support is kept."""
    x = np.asarray(x.matrix if isinstance(x, JointDistribution) else x, dtype=np.float64)
    if (x < 0).any():
        raise NegativeEntry("entrywise_power needs a nonnegative matrix")
    if theta < 0:
        raise ValueError("theta must be >= 0")
    out = np.power(x, theta)
    out[x == 0] = 0.0
    return out


def tensor_power(p: JointDistribution, k: int) -> JointDistribution:
    """Row/column ``a``/``b`` tuples in row-major order, first coordinate most significant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if (p.size_a * p.size_b) ** k > MAX_MATERIALIZED:
        raise SizeOverflow(f"{p.size_a}^{k} x {p.size_b}^{k} exceeds {MAX_MATERIALIZED} entries")
    out = p.matrix
    for _ in range(k - 1):
        out = np.kron(out, p.matrix)
    return JointDistribution(out)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 seeded from the low 64 bits of ``seed``; the only generator used."""
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def mix_seed(seed: int, index: int) -> int:
    """SplitMix64 finalizer applied to ``seed + golden * (index + 1)``."""
    mask = (1 << 64) - 1
    z = (int(seed) + 0x9E3779B97F4A7C15 * (int(index) + 1)) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def sample_pair(model, n: int, seed: int) -> tuple[DatabasePair, Matching]:
    """Draw a uniformly random matching, then correlated entries along it.

    Stream layout: one ``permutation(n)`` call (Fisher-Yates), then an
    ``(n, reps)`` block of uniforms consumed user by user, each mapped through
    the inverse CDF of ``q`` flattened row-major.
    """
    model = as_model(model)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    perm = rng.permutation(n)
    u = rng.random((n, model.reps))
    cdf = np.cumsum(model.base.matrix.ravel())
    cdf /= cdf[-1]
    last_positive = int(np.flatnonzero(model.base.matrix.ravel() > 0)[-1])
    cell = np.minimum(np.searchsorted(cdf, u, side="right"), last_positive)
    a, b_of_u = np.divmod(cell, model.size_b)
    b = np.empty_like(b_of_u)
    b[perm] = b_of_u
    return DatabasePair(a, b), Matching(perm)


def level_counts(model: ProductForm, rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    """Integer count of coordinates per level for each aligned row pair.

    ``rows_a`` and ``rows_b`` have shape ``(..., reps)`` and broadcast against
    each other; the result has shape ``(..., n_levels)``.
    """
    level_of_cell, log_level = model.base.levels
    n_levels = len(log_level)
    shape = np.broadcast_shapes(rows_a.shape[:-1], rows_b.shape[:-1])
    counts = np.zeros(shape + (n_levels,), dtype=np.int64)
    for k in range(rows_a.shape[-1]):
        lv = level_of_cell[rows_a[..., k], rows_b[..., k]]
        for j in range(n_levels):
            counts[..., j] += lv == j
    return counts


def score_counts(counts: np.ndarray, log_level: np.ndarray) -> np.ndarray | float:
    """Deterministic log-likelihood from level counts; ``-inf`` if a zero cell is hit.

    The accumulation order is fixed (level by level), so equal count vectors
    always produce bit-identical scores.
    """
    counts = np.asarray(counts)
    total = np.zeros(counts.shape[:-1])
    for k in range(len(log_level) - 1):
        total = total + counts[..., k] * log_level[k]
    total = np.where(counts[..., -1] > 0, -np.inf, total)
    return float(total) if total.ndim == 0 else total


def log_likelihood(pair: DatabasePair, m: Matching, model) -> float:
    """``log r(f_a, f_b; m)``: sum over users and coordinates of ``log q``."""
    model = as_model(model)
    pair.check_model(model)
    if m.n != pair.n:
        raise DimensionMismatch(f"matching has {m.n} users, databases have {pair.n}")
    counts = level_counts(model, pair.entries_a, pair.entries_b[m.perm]).sum(axis=0)
    return score_counts(counts, model.base.levels[1])
