"""Fast invariant checks on built-in fixtures, run by ``dbalign selfcheck``."""

from __future__ import annotations

import itertools
import math

import numpy as np

from dbalign import bounds
from dbalign.dist import Matching, ProductForm, new_joint, sample_pair, tensor_power
from dbalign.matching import brute_force_map, cycle_type, map_estimate
from dbalign.spectral import check_majorization, cycle_mi, cycle_mi_trace, renyi_entropy, spectral_profile

FIXTURES = {
    "uniform": [[0.25, 0.25], [0.25, 0.25]],
    "bsc": [[0.45, 0.05], [0.05, 0.45]],
    "skew3": [[0.3, 0.05, 0.0], [0.1, 0.2, 0.05], [0.0, 0.1, 0.2]],
    "rect": [[0.1, 0.2, 0.05, 0.05], [0.3, 0.0, 0.2, 0.1]],
}


def _checks():
    for name, m in FIXTURES.items():
        p = new_joint(m)
        prof = spectral_profile(p)
        yield f"normalization[{name}]", abs(prof.sigma_sq.sum() - 1) <= 1e-9, float(prof.sigma_sq.sum())
        for order in (2, 3):
            gap = abs(cycle_mi(p, order) - cycle_mi_trace(p, order))
            yield f"dual_path[{name},{order}]", gap <= 1e-9, gap
        for marg in (p.marginal_a, p.marginal_b):
            res = check_majorization(prof, marg)
            yield f"majorization[{name}]", res.holds, res.max_violation
        bound = min(renyi_entropy(p.marginal_a, 2), renyi_entropy(p.marginal_b, 2))
        yield f"entropy_bound[{name}]", cycle_mi(p, 2) <= bound + 1e-9, bound - cycle_mi(p, 2)
        t = abs(cycle_mi(p, 2) - cycle_mi(p.T, 2))
        yield f"symmetry[{name}]", t <= 1e-9, t
        z = np.sqrt(p.matrix)
        b1 = bounds.b_circ(z, z, 1)
        yield f"b1_is_one[{name}]", abs(b1 - 1) <= 1e-12, b1

    q = new_joint(FIXTURES["bsc"])
    value = cycle_mi(q, 2)
    yield "cmi2[bsc]", abs(value - (-math.log(0.68))) <= 1e-12, value
    tens = abs(cycle_mi(tensor_power(q, 2), 2) - 2 * value)
    yield "tensorization[bsc,k=2]", tens <= 1e-7, tens

    for n in (2, 3):
        worst = 0.0
        for perm in itertools.permutations(range(n)):
            m1, m2 = Matching.identity(n), Matching(perm)
            direct = bounds.B_direct(m1, m2, z := np.sqrt(q.matrix), z)
            worst = max(worst, abs(direct - bounds.B_via_cycles(cycle_type(m1, m2), z, z)))
        yield f"factorization[n={n}]", worst <= 1e-12, worst

    pts = bounds.exponent_curve(q, np.linspace(0, 1, 21))
    diag = bounds.curve_diagnostics(pts)
    yield "exponent_symmetry", diag["symmetry_error"] <= 1e-9, diag["symmetry_error"]
    yield "exponent_min_at_half", diag["argmin_theta"] == 0.5, diag["argmin_theta"]

    model = ProductForm(q, 3)
    mismatches = 0
    for seed in range(20):
        pair, _ = sample_pair(model, 5, seed)
        mismatches += map_estimate(pair, model) != brute_force_map(pair, model)
    yield "map_vs_brute_force", mismatches == 0, mismatches


def run() -> list[tuple[str, bool, float]]:
    return [(name, bool(ok), float(detail)) for name, ok, detail in _checks()]
