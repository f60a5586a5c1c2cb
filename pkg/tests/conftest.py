from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable

import pytest

from app.core.config import Settings
from app.services import specfun_service as sf


@pytest.fixture(autouse=True)
def _default_policy():
    sf.set_policy(sf.DEFAULT_POLICY)
    yield
    sf.set_policy(sf.DEFAULT_POLICY)


@pytest.fixture
def settings(tmp_path: Path) -> Settings:
    return Settings(database_url=f"sqlite:///{tmp_path / 'ledger.db'}", default_threads=1, default_seed=0)


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[dict[str, Any]], str]:
    counter = {"n": 0}

    def write(config: dict[str, Any]) -> str:
        counter["n"] += 1
        path = tmp_path / f"config{counter['n']}.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)

    return write


def _read_rows(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    comment, columns, *rows = lines
    return comment, columns.split(","), [r.split(",") for r in rows]


@pytest.fixture
def read_csv() -> Callable[[str | Path], tuple[str, list[str], list[list[str]]]]:
    """(header comment, column names, data rows) of a CSV artifact."""
    return _read_rows
