"""Spectrum of ``z = sqrt(p)`` and the cycle mutual information built on it.

The squared singular values of ``z`` sum to one (``tr(z z^T) = sum_ij p_ij``),
so they form a probability vector.  The order-``l`` cycle mutual information is
the Renyi entropy of that vector, which equals ``log tr((z z^T)^l) / (1 - l)``
for integer ``l >= 2``.  Both routes are implemented here and checked against
each other.

Eigenvalues come from a cyclic Jacobi solver on the (small) Gram matrix.  The
singular vectors are never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from dbalign.dist import JointDistribution, ProductForm, new_joint
from dbalign.errors import ComputationError, EigenNoConvergence, NotADistribution, NotStochastic

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
RANK_THRESHOLD = 1e-12
DUAL_PATH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """Squared singular values of ``sqrt(p)``, nonincreasing."""

    sigma_sq: np.ndarray

    @property
    def singular_values(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)

    def __len__(self):
        return len(self.sigma_sq)


class MajorizationResult(NamedTuple):
    holds: bool
    max_violation: float


@njit(cache=True)
def _jacobi_eigvals(a, tol, max_sweeps):
    a = a.copy()
    m = a.shape[0]
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                off += 2.0 * a[i, j] * a[i, j]
        if math.sqrt(off) <= tol:
            return np.diag(a).copy(), sweep
        if sweep == max_sweeps:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(m):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(m):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return np.diag(a).copy(), -1


def jacobi_eigvalsh(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations (unsorted)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    vals, sweeps = _jacobi_eigvals(a, tol, max_sweeps)
    if sweeps < 0:
        raise EigenNoConvergence(f"Jacobi did not reach off-diagonal norm {tol} in {max_sweeps} sweeps")
    return vals


def _base_reps(model) -> tuple[JointDistribution, int]:
    if isinstance(model, ProductForm):
        return model.base, model.reps
    return _joint(model), 1


def _joint(p) -> JointDistribution:
    if isinstance(p, ProductForm):
        return p.base
    if isinstance(p, JointDistribution):
        return p
    return new_joint(p)


def gram_matrix(p) -> np.ndarray:
    """``z z^T`` or ``z^T z``, whichever is smaller; its diagonal is a marginal."""
    z = np.sqrt(_joint(p).matrix)
    g = z @ z.T if z.shape[0] <= z.shape[1] else z.T @ z
    return (g + g.T) / 2


def spectral_profile(p) -> SpectralProfile:
    g = gram_matrix(p)
    vals = jacobi_eigvalsh(g)
    # below this the eigenvalue is roundoff; sub-unit orders would amplify it
    floor = len(vals) * np.finfo(np.float64).eps * max(float(vals.max()), 0.0)
    vals = np.where(vals > floor, vals, 0.0)
    return SpectralProfile(np.sort(vals)[::-1].copy())


def _check_distribution(dist) -> np.ndarray:
    d = np.asarray(dist.sigma_sq if isinstance(dist, SpectralProfile) else dist, dtype=np.float64).ravel()
    if d.size == 0 or np.isnan(d).any() or (d < 0).any() or abs(d.sum() - 1.0) > 1e-9:
        raise NotADistribution("expected a nonnegative vector summing to 1")
    return d


def renyi_entropy(dist, order: float) -> float:
    """Renyi entropy in nats; order 1 is Shannon, order 0 is log of the support size."""
    if order < 0 or math.isnan(order):
        raise ValueError("order must be >= 0")
    d = _check_distribution(dist)
    if order == 0:
        return math.log(int(np.sum(d > RANK_THRESHOLD)))
    pos = d[d > 0]
    if order == 1:
        return float(-np.sum(pos * np.log(pos)))
    if math.isinf(order):
        return float(-math.log(pos.max()))
    return float(math.log(np.sum(pos**order)) / (1.0 - order))


def cycle_mi_trace(model, order: int) -> float:
    """Cycle mutual information from ``log tr(G^order)``; integer order >= 2 only."""
    if int(order) != order or order < 2:
        raise ValueError("trace route needs an integer order >= 2")
    base, reps = _base_reps(model)
    g = gram_matrix(base)
    tr = np.trace(np.linalg.matrix_power(g, int(order)))
    return reps * math.log(tr) / (1.0 - order)


def cycle_mi(model, order: float) -> float:
    """Order-``order`` cycle mutual information in nats (per database entry).

    For a product model this is ``reps`` times the value for the base
    distribution.  Integer orders >= 2 are cross-checked against the trace
    route and raise ``ComputationError`` on disagreement.
    """
    base, reps = _base_reps(model)
    h = renyi_entropy(spectral_profile(base).sigma_sq, order)
    if order >= 2 and float(order).is_integer():
        alt = cycle_mi_trace(base, int(order))
        if abs(alt - h) > DUAL_PATH_TOL:
            raise ComputationError(f"eigenvalue route {h!r} and trace route {alt!r} disagree at order {order}")
    return reps * h


def check_majorization(profile, marginal) -> MajorizationResult:
    """Whether the profile majorizes ``marginal`` (prefix sums of sorted vectors)."""
    x = np.sort(np.asarray(getattr(profile, "sigma_sq", profile), dtype=np.float64).ravel())[::-1]
    y = np.sort(np.asarray(marginal, dtype=np.float64).ravel())[::-1]
    if abs(x.sum() - y.sum()) > 1e-9:
        raise ValueError("profile and marginal must have equal total mass")
    m = max(len(x), len(y))
    cx = np.cumsum(np.pad(x, (0, m - len(x))))
    cy = np.cumsum(np.pad(y, (0, m - len(y))))
    violation = float(max(0.0, np.max(cy - cx)))
    return MajorizationResult(violation <= 1e-9, violation)


def _stochastic(ch, name: str) -> np.ndarray:
    ch = np.asarray(ch, dtype=np.float64)
    if ch.ndim != 2 or (ch < 0).any() or np.abs(ch.sum(axis=1) - 1.0).max() > 1e-9:
        raise NotStochastic(f"{name} must be a nonnegative matrix with rows summing to 1")
    return ch


def channel_joints(prior, channel_q, channel_r) -> tuple[np.ndarray, np.ndarray]:
    """``(diag(prior) q, diag(prior) q r)``."""
    prior = np.asarray(prior, dtype=np.float64).ravel()
    if (prior < 0).any() or abs(prior.sum() - 1.0) > 1e-9:
        raise NotADistribution("prior must be a probability vector")
    q = _stochastic(channel_q, "channel_q")
    r = _stochastic(channel_r, "channel_r")
    if q.shape[0] != len(prior) or r.shape[0] != q.shape[1]:
        raise ValueError("channel shapes do not chain")
    first = prior[:, None] * q
    return first, first @ r


def dpi_gap(prior, channel_q, channel_r, order: int) -> float:
    """Loss of cycle mutual information from post-processing the output by ``channel_r``."""
    if int(order) != order or order < 2:
        raise ValueError("dpi_gap is defined for integer order >= 2")
    first, second = channel_joints(prior, channel_q, channel_r)
    # renormalize roundoff so the validated constructor accepts the products
    return cycle_mi(JointDistribution(first / first.sum()), order) - cycle_mi(
        JointDistribution(second / second.sum()), order
    )
