"""Seeded Monte-Carlo trials of MAP alignment and threshold sweeps.

Each trial samples a database pair, runs the MAP matching and records whether
the hidden matching was recovered exactly.  Trial ``i`` is seeded with
``mix_seed(master_seed, i)`` so that a sweep is a pure function of its
configuration, whatever the number of worker processes.  The same trial seeds
are reused at every sweep point.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from dbalign.dist import JointDistribution, ProductForm, log_likelihood, mix_seed, new_joint, sample_pair
from dbalign.matching import map_estimate
from dbalign.spectral import cycle_mi

log = logging.getLogger(__name__)

AXES = ("reps", "n", "epsilon")
CSV_HEADER = ("axis_value", "cmi2_nats", "threshold_ratio", "recovery_rate", "wilson_lo", "wilson_hi")
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class ExperimentConfig:
    model: ProductForm
    n: int
    trials: int
    master_seed: int = 0
    sweep_axis: str = "reps"
    sweep_values: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sweep_axis not in AXES:
            raise ValueError(f"sweep_axis must be one of {AXES}")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        for value in self.sweep_values:
            if self.sweep_axis in ("reps", "n") and (int(value) != value or value < 1):
                raise ValueError(f"{self.sweep_axis} values must be positive integers, got {value!r}")
            if self.sweep_axis == "epsilon" and not 0.0 <= value <= 1.0:
                raise ValueError(f"epsilon values must lie in [0, 1], got {value!r}")

    def at(self, value) -> "ExperimentConfig":
        """Configuration of a single sweep point (no sweep values)."""
        model, n = self.model, self.n
        if self.sweep_axis == "reps":
            model = ProductForm(model.base, int(value))
        elif self.sweep_axis == "n":
            n = int(value)
        else:
            model = ProductForm(mix_with_independent(model.base, float(value)), model.reps)
        return ExperimentConfig(model, n, self.trials, self.master_seed, self.sweep_axis, ())

    def to_dict(self) -> dict:
        return {
            "q": self.model.base.matrix.tolist(),
            "reps": self.model.reps,
            "n": self.n,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        sweep = d.get("sweep") or {}
        return cls(
            model=ProductForm(new_joint(d["q"]), int(d.get("reps", 1))),
            n=int(d["n"]),
            trials=int(d["trials"]),
            master_seed=int(d.get("master_seed", 0)),
            sweep_axis=sweep.get("axis", "reps"),
            sweep_values=tuple(sweep.get("values", ())),
        )


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    success: bool
    map_loglik: float
    true_loglik: float
    hamming_errors: int
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    cmi2_nats: float
    threshold_ratio: float
    recovery_rate: float
    wilson_lo: float
    wilson_hi: float
    successes: int = 0
    trials: int = 0

    def csv_fields(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_HEADER]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def mix_with_independent(q: JointDistribution, epsilon: float) -> JointDistribution:
    """``(1 - epsilon) q + epsilon p_a p_b^T``: same marginals, correlation dialled down."""
    indep = np.outer(q.marginal_a, q.marginal_b)
    m = (1.0 - epsilon) * q.matrix + epsilon * indep
    return JointDistribution(m / m.sum())


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialResult:
    """One sample-align-compare round at the config's model and ``n``."""
    if not 0 <= trial_index < config.trials:
        raise ValueError(f"trial_index must lie in [0, {config.trials})")
    start = time.perf_counter()
    pair, truth = sample_pair(config.model, config.n, mix_seed(config.master_seed, trial_index))
    estimate = map_estimate(pair, config.model)
    errors = config.n - estimate.agreements(truth)
    return TrialResult(
        trial_index=trial_index,
        success=errors == 0,
        map_loglik=log_likelihood(pair, estimate, config.model),
        true_loglik=log_likelihood(pair, truth, config.model),
        hamming_errors=errors,
        wall_time=time.perf_counter() - start,
    )


def _run_block(args) -> list[TrialResult]:
    config, lo, hi = args
    return [run_trial(config, i) for i in range(lo, hi)]


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_trials(config: ExperimentConfig, workers: int = 1) -> list[TrialResult]:
    """All trials of a single-point config, in index order."""
    if workers <= 1 or config.trials < 2:
        return _run_block((config, 0, config.trials))
    step = max(1, math.ceil(config.trials / (4 * workers)))
    blocks = [(config, lo, min(lo + step, config.trials)) for lo in range(0, config.trials, step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [r for block in pool.map(_run_block, blocks) for r in block]


def summarize(config: ExperimentConfig, results: list[TrialResult], axis_value=None) -> SweepRow:
    successes = sum(r.success for r in results)
    cmi2 = cycle_mi(config.model, 2)
    ratio = cmi2 / (2 * math.log(config.n)) if config.n > 1 else math.inf
    lo, hi = wilson_interval(successes, len(results))
    return SweepRow(
        axis_value=axis_value if axis_value is not None else config.model.reps,
        cmi2_nats=cmi2,
        threshold_ratio=ratio,
        recovery_rate=successes / len(results),
        wilson_lo=lo,
        wilson_hi=hi,
        successes=successes,
        trials=len(results),
    )


def recovery_rate(config: ExperimentConfig, workers: int = 1, axis_value=None) -> SweepRow:
    """Exact-recovery rate of one configuration with its 95% Wilson interval."""
    if config.trials < 30:
        log.warning("only %d trials; the Wilson interval is unreliable below 30", config.trials)
    return summarize(config, run_trials(config, workers), axis_value)


def sweep(config: ExperimentConfig, workers: int = 1, keep_trials: dict | None = None) -> list[SweepRow]:
    """One row per sweep value, in the order given.

    ``keep_trials``, if passed, is filled with the per-trial results keyed by
    axis value.
    """
    if not config.sweep_values:
        raise ValueError("sweep needs at least one axis value")
    rows = []
    for value in config.sweep_values:
        point = config.at(value)
        results = run_trials(point, workers)
        rows.append(summarize(point, results, value))
        if keep_trials is not None:
            keep_trials[value] = results
        log.info("%s=%s rate=%.3f ratio=%.3f", config.sweep_axis, value, rows[-1].recovery_rate, rows[-1].threshold_ratio)
    return rows


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def sidecar_json(config: ExperimentConfig, rows: list[SweepRow], trials: dict) -> str:
    return json.dumps(
        {
            "config": config.to_dict(),
            "rows": [asdict(r) for r in rows],
            "trials": {str(k): [asdict(t) for t in v] for k, v in trials.items()},
        },
        indent=1,
    )


def crossing_ratio(rows: list[SweepRow], level: float = 0.5) -> float | None:
    """Threshold ratio at which the recovery rate first crosses ``level`` (linear interpolation)."""
    for prev, cur in zip(rows, rows[1:]):
        if prev.recovery_rate < level <= cur.recovery_rate:
            frac = (level - prev.recovery_rate) / (cur.recovery_rate - prev.recovery_rate)
            return prev.threshold_ratio + frac * (cur.threshold_ratio - prev.threshold_ratio)
    if rows and rows[0].recovery_rate >= level:
        return rows[0].threshold_ratio
    return None
