from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from app.core.config import Settings
from app.core.errors import ConfigError
from app.services import gp_service as gp
from app.services import kernel_service as ks
from app.services import linalg_service as la
from app.services import render_service as render
from app.services.parallel_service import ParallelMap, derive_rng

logger = logging.getLogger(__name__)

_MISSING = object()
SITES_STREAM = 99


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def _as_float(key: str, raw: Any, allow_inf: bool = False) -> float:
    if isinstance(raw, bool):
        raise ConfigError(f"{key} must be a number (got {raw!r})")
    if isinstance(raw, str) and raw.strip().lower() in {"inf", "infinity", "+inf"}:
        raw = math.inf
    try:
        value = float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number (got {raw!r})") from exc
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(f"{key} must be finite (got {raw!r})")
    return value


def read_dataset_csv(path: str, replicate: int = 0) -> gp.GpDataset:
    """Reads the CSV written by the simulate command (replicate, site, x0..x{d-1}, value)."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [line for line in fh if not line.startswith("#")]
    except FileNotFoundError as exc:
        raise ConfigError(f"data file not found: {path}") from exc
    reader = csv.reader(lines)
    header = next(reader, None)
    if not header or header[:2] != ["replicate", "site"] or header[-1] != "value":
        raise ConfigError(f"{path} is not a simulate output (header {header})")
    points, values = [], []
    for row in reader:
        if int(row[0]) != replicate:
            continue
        points.append([float(v) for v in row[2:-1]])
        values.append(float(row[-1]))
    if not points:
        raise ConfigError(f"{path} has no rows for replicate {replicate}")
    return gp.make_dataset(la.make_sites(points), values)


@dataclass
class CommandContext:
    name: str
    settings: Settings
    config: dict[str, Any]
    seed: int
    threads: int
    pmap: ParallelMap
    output: str | None
    dry_run: bool
    digest: str
    args: argparse.Namespace
    sparsity_reports: list[la.SparsityReport] = field(default_factory=list)

    # ------------------------------------------------------------ readers

    def get(self, key: str, default: Any = _MISSING) -> Any:
        if key in self.config:
            return self.config[key]
        if default is _MISSING:
            raise ConfigError(f"{self.name}: config key {key!r} is required")
        return default

    def number(self, key: str, default: Any = _MISSING, positive: bool = False, allow_inf: bool = False) -> float:
        value = _as_float(key, self.get(key, default), allow_inf)
        if positive and not value > 0:
            raise ConfigError(f"{key} must be positive (got {value})")
        return value

    def integer(self, key: str, default: Any = _MISSING, minimum: int | None = None) -> int:
        raw = self.get(key, default)
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
            raise ConfigError(f"{key} must be an integer (got {raw!r})")
        value = int(raw)
        if minimum is not None and value < minimum:
            noun = "positive" if minimum == 1 else f">= {minimum}"
            raise ConfigError(f"{key} must be {noun}")
        return value

    def numbers(self, key: str, default: Any = _MISSING, allow_inf: bool = False) -> list[float]:
        raw = self.get(key, default)
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{key} must be a nonempty list")
        return [_as_float(key, v, allow_inf) for v in raw]

    def integers(self, key: str, default: Any = _MISSING, minimum: int = 1) -> list[int]:
        values = self.numbers(key, default)
        if any(int(v) != v or v < minimum for v in values):
            raise ConfigError(f"{key} must be a list of integers >= {minimum}")
        return [int(v) for v in values]

    def kernel(self, key: str = "kernel") -> ks.KernelSpec:
        return ks.spec_from_json(self.get(key))

    def model(self, key: str = "model") -> ks.CovarianceModel:
        raw = self.get(key)
        if isinstance(raw, dict) and "fit" in raw:
            fitted = load_config(raw["fit"])
            return ks.CovarianceModel(ks.spec_from_json(fitted.get("theta_hat")), _as_float("sigma2_hat", fitted.get("sigma2_hat")))
        return ks.model_from_json(raw)

    def sites(self, key: str = "sites") -> la.SiteSet:
        raw = self.get(key)
        if not isinstance(raw, dict):
            raise ConfigError(f"{key} must be an object")
        if "points" in raw:
            sites = la.make_sites(raw["points"])
        elif "grid" in raw:
            sites = la.grid_sites(_as_float(f"{key}.grid", raw["grid"]), int(raw.get("d", 1)))
        elif "linspace" in raw:
            sites = la.make_sites(np.linspace(0.0, 1.0, int(raw["linspace"])))
        elif "random" in raw:
            n, d = int(raw["random"]), int(raw.get("d", 1))
            sites = la.make_sites(derive_rng(self.seed, SITES_STREAM).uniform(0.0, 1.0, size=(n, d)))
        else:
            raise ConfigError(f"{key} needs one of points, grid, linspace or random")
        ordering = raw.get("ordering")
        if ordering:
            sites = la.reorder(sites, ordering, self.seed)
        return sites

    def dataset(self, key: str = "data") -> gp.GpDataset:
        raw = self.get(key)
        if isinstance(raw, dict) and "csv" in raw:
            return read_dataset_csv(raw["csv"], int(raw.get("replicate", 0)))
        if isinstance(raw, dict) and "points" in raw and "values" in raw:
            return gp.make_dataset(la.make_sites(raw["points"]), raw["values"])
        raise ConfigError(f"{key} needs either csv or points + values")

    # ------------------------------------------------------------ output

    def plan(self, **sizes: Any) -> bool:
        """In dry-run mode print the resolved config and size estimates; True means stop here."""
        if not self.dry_run:
            return False
        payload = {
            "subcommand": self.name,
            "config": self.config,
            "config_hash": self.digest,
            "seed": self.seed,
            "threads": self.threads,
            "output": self.output,
            "estimates": sizes,
        }
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
        return True

    def sibling(self, suffix: str) -> str | None:
        if self.output is None or self.output == "-":
            return None
        path = Path(self.output)
        stem = path.name[: -len(path.suffix)] if path.suffix else path.name
        return str(path.with_name(f"{stem}{suffix}"))

    def write_csv(self, columns: Sequence[str], rows: Iterable[Sequence[Any]], path: str | None = _MISSING) -> None:  # type: ignore[assignment]
        target = self.output if path is _MISSING else path
        render.write_csv(target, self.name, self.digest, columns, rows)
        logger.info("Wrote %s output=%s", self.name, target or "-")

    def write_json(self, obj: Any) -> None:
        render.write_json(self.output, obj)
        logger.info("Wrote %s output=%s", self.name, self.output or "-")
