from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

HASH_EXCLUDED = frozenset({"threads", "output"})


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def config_hash(config: dict[str, Any]) -> str:
    """First 16 hex digits of sha256 over canonical JSON; thread count and output path excluded."""
    payload = {k: v for k, v in config.items() if k not in HASH_EXCLUDED}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def header_line(experiment: str, digest: str) -> str:
    return f"# matern-lab {experiment} config-hash={digest}"


def render_csv(experiment: str, digest: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    buffer.write(header_line(experiment, digest) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buffer.getvalue()


def render_matrix(matrix: np.ndarray) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for row in np.atleast_2d(matrix):
        writer.writerow([fmt(v) for v in row])
    return buffer.getvalue()


def write_text(path: str | Path | None, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_csv(path: str | Path | None, experiment: str, digest: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    write_text(path, render_csv(experiment, digest, columns, rows))


def write_json(path: str | Path | None, obj: Any) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_matrix_csv(path: str | Path | None, matrix: np.ndarray) -> None:
    write_text(path, render_matrix(matrix))


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
