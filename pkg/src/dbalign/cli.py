"""Command-line interface.

Exit status 0 on success, 1 on invalid input, 2 when a computation fails.
Errors go to stderr as one JSON line ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from dbalign import bounds, experiments, formats, selfcheck
from dbalign.dist import log_likelihood, sample_pair
from dbalign.errors import AlignError, ValidationError
from dbalign.matching import map_estimate
from dbalign.spectral import cycle_mi

SEED_ENV = "DBALIGN_SEED"


class UsageError(ValidationError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, newline="\n")
    else:
        sys.stdout.write(text)


def _seed(args) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args.seed


def cmd_cmi(args) -> int:
    orders = args.order or [2.0]
    for order in orders:
        if not order >= 0:
            raise UsageError("order must be ≥ 0")
    model = formats.load_model(args.dist)
    records = []
    for order in orders:
        key = int(order) if float(order).is_integer() else order
        records.append({"order": key, "value_nats": cycle_mi(model, order)})
    if args.format == "csv":
        text = "order,value_nats\n" + "".join(f"{r['order']},{r['value_nats']!r}\n" for r in records)
    else:
        text = "".join(formats.dumps(r) + "\n" for r in records)
    _emit(text, args.out)
    return 0


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("n must be ≥ 1")
    model = formats.load_model(args.dist)
    pair, truth = sample_pair(model, args.n, _seed(args))
    record = formats.pair_to_dict(pair)
    out = Path(args.out)
    if args.single_file:
        record["perm"] = truth.perm.tolist()
    else:
        truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.json")
        truth_path.write_text(formats.dumps({"perm": truth.perm.tolist()}) + "\n", newline="\n")
    out.write_text(formats.dumps(record) + "\n", newline="\n")
    return 0


def cmd_align(args) -> int:
    model = formats.load_model(args.dist)
    pair, _ = formats.load_pair(args.pair)
    estimate = map_estimate(pair, model)
    record = {"perm": estimate.perm.tolist(), "log_likelihood": log_likelihood(pair, estimate, model)}
    if args.truth:
        truth = formats.load_truth(args.truth)
        record["success"] = bool(estimate == truth)
        record["hamming_errors"] = int(pair.n - estimate.agreements(truth))
    _emit(formats.dumps(record) + "\n", args.out)
    return 0


def cmd_bound(args) -> int:
    if args.n < 2:
        raise UsageError("n must be ≥ 2")
    model = formats.load_model(args.dist)
    report = bounds.union_bound(model, args.n)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "count_cap", "term"])
        for t in report.terms:
            w.writerow([t.d, repr(t.count_cap), repr(t.term)])
        text = buf.getvalue()
    else:
        text = formats.dumps(report.to_dict()) + "\n"
    _emit(text, args.out)
    return 0


def cmd_exponent(args) -> int:
    if args.points < 2:
        raise UsageError("points must be ≥ 2")
    model = formats.load_model(args.dist)
    pts = bounds.exponent_curve(model.base, np.linspace(0.0, 1.0, args.points))
    if args.format == "json":
        text = formats.dumps([{"theta": p.theta, "value": p.value} for p in pts]) + "\n"
    else:
        text = "theta,value\n" + "".join(f"{p.theta!r},{p.value!r}\n" for p in pts)
    _emit(text, args.out)
    return 0


def cmd_experiment(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise formats.FormatError(f"no such file: {path}")
    try:
        config = experiments.ExperimentConfig.from_dict(json.loads(path.read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise formats.FormatError(f"bad experiment config: {exc}") from None
    seed = _seed(args)
    if seed is not None:
        config = experiments.ExperimentConfig(
            config.model, config.n, config.trials, seed, config.sweep_axis, config.sweep_values
        )
    if args.trials is not None:
        config = experiments.ExperimentConfig(
            config.model, config.n, args.trials, config.master_seed, config.sweep_axis, config.sweep_values
        )
    if args.verbose and not args.out:
        raise UsageError("--verbose writes a sidecar next to --out; give --out")
    if not config.sweep_values:
        config = experiments.ExperimentConfig(
            config.model, config.n, config.trials, config.master_seed, "reps", (config.model.reps,)
        )
    workers = args.workers if args.workers is not None else experiments.default_workers()
    trials = {} if args.verbose else None
    rows = experiments.sweep(config, workers=workers, keep_trials=trials)
    _emit(experiments.rows_to_csv(rows), args.out)
    if args.verbose:
        Path(args.out + ".json").write_text(experiments.sidecar_json(config, rows, trials) + "\n")
    return 0


def cmd_selfcheck(args) -> int:
    results = selfcheck.run()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail:.3g}")
    return 0 if all(ok for _, ok, _ in results) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbalign", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        return p

    p = add("cmi", cmd_cmi, "cycle mutual information of a distribution file")
    p.add_argument("--dist", required=True)
    p.add_argument("--order", type=float, action="append")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")

    p = add("sample", cmd_sample, "sample a correlated database pair")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="truth file path (default: <out stem>.truth.json)")
    p.add_argument("--single-file", action="store_true", help="embed the truth permutation in the pair file")

    p = add("align", cmd_align, "MAP alignment of a sampled pair")
    p.add_argument("--dist", required=True)
    p.add_argument("--pair", required=True)
    p.add_argument("--truth", help="optional truth file to score against")
    p.add_argument("--out")

    p = add("bound", cmd_bound, "union bound on the MAP error probability")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")

    p = add("exponent", cmd_exponent, "Chernoff moment curve on a uniform theta grid")
    p.add_argument("--dist", required=True)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--out")

    p = add("experiment", cmd_experiment, "recovery-rate sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config's master_seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--verbose", action="store_true")

    add("selfcheck", cmd_selfcheck, "run built-in invariant checks")
    return parser


def _fail(exc: Exception, status: int) -> int:
    code = getattr(exc, "code", None) or type(exc).__name__
    sys.stderr.write(json.dumps({"code": code, "message": str(exc)}) + "\n")
    return status


def dispatch(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        return _fail(exc, 1)
    except (AlignError, ArithmeticError) as exc:
        return _fail(exc, 2)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
