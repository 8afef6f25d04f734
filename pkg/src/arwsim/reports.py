"""Deterministic CSV/JSON serialization for experiment outputs.

Outputs must be byte-identical across reruns with the same config and seed,
so nothing time- or environment-dependent is ever written, floats go
through repr, and JSON keys are sorted.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

__all__ = ["config_hash", "write_csv", "dump_json", "write_json"]


def _canonical(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None  # strict JSON has no NaN/Inf
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_canonical(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v: Any) -> Any:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def dump_json(obj: Any) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding="utf-8")
