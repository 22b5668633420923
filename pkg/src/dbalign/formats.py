"""JSON file formats: distribution, sampled pair, truth permutation.

Distribution: ``{"q": [[...], ...], "reps": k}`` (rows index the first
alphabet).  Pair: ``{"entries_a": [[...]], "entries_b": [[...]]}``, one symbol
vector per user.  Truth: ``{"perm": [...]}``.  A single-file pair may carry
``"perm"`` alongside the entries.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from dbalign.dist import DatabasePair, Matching, ProductForm, new_joint
from dbalign.errors import ValidationError


class FormatError(ValidationError):
    code = "bad_file"


def _read(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return data


def model_from_dict(d: dict) -> ProductForm:
    if "q" not in d:
        raise FormatError('distribution needs a "q" matrix')
    reps = d.get("reps", 1)
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise FormatError('"reps" must be a positive integer')
    return ProductForm(new_joint(d["q"]), reps)


def model_to_dict(model: ProductForm) -> dict:
    return {"q": model.base.matrix.tolist(), "reps": model.reps}


def load_model(path) -> ProductForm:
    return model_from_dict(_read(path))


def save_model(model: ProductForm, path) -> None:
    Path(path).write_text(dumps(model_to_dict(model)) + "\n")


def pair_to_dict(pair: DatabasePair) -> dict:
    return {"entries_a": pair.entries_a.tolist(), "entries_b": pair.entries_b.tolist()}


def load_pair(path) -> tuple[DatabasePair, Matching | None]:
    d = _read(path)
    if "entries_a" not in d or "entries_b" not in d:
        raise FormatError('pair file needs "entries_a" and "entries_b"')
    pair = DatabasePair(d["entries_a"], d["entries_b"])
    truth = Matching(d["perm"]) if "perm" in d else None
    return pair, truth


def load_truth(path) -> Matching:
    d = _read(path)
    if "perm" not in d:
        raise FormatError('truth file needs "perm"')
    return Matching(d["perm"])


def sanitize(obj):
    """Replace non-finite floats with ``null`` / strings so output stays strict JSON."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(sanitize(obj), allow_nan=False, **kw)
