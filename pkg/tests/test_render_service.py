from __future__ import annotations

import json
import math

import numpy as np

from app.services import render_service as render
from app.services.parallel_service import SerialMap, ThreadPoolMap, derive_rng


def test_fmt_round_trips_floats():
    assert render.fmt(math.exp(-1.0)) == "0.36787944117144233"
    assert float(render.fmt(0.1)) == 0.1
    assert render.fmt(np.float64(2.5)) == "2.5"
    assert render.fmt(np.int64(7)) == "7"
    assert render.fmt(True) == "true"
    assert render.fmt(math.inf) == "inf"
    assert render.fmt(-math.inf) == "-inf"
    assert render.fmt(math.nan) == "nan"


def test_config_hash_ignores_threads_and_output():
    base = {"kernel": {"family": "Matern", "params": {"nu": 0.5, "alpha": 1.0}}, "x": [1.0]}
    digest = render.config_hash(base)
    assert len(digest) == 16
    assert render.config_hash({**base, "threads": 8, "output": "a.csv"}) == digest
    assert render.config_hash(dict(reversed(list(base.items())))) == digest
    assert render.config_hash({**base, "x": [2.0]}) != digest


def test_render_csv_layout():
    text = render.render_csv("eval", "0123456789abcdef", ["x", "correlation"], [(1, 0.5), (2.0, math.inf)])
    assert text.splitlines() == [
        "# matern-lab eval config-hash=0123456789abcdef",
        "x,correlation",
        "1,0.5",
        "2,inf",
    ]


def test_write_targets(tmp_path, capsys):
    path = tmp_path / "nested" / "out.json"
    render.write_json(path, {"b": np.float64(1.5), "a": np.arange(2)})
    assert json.loads(path.read_text(encoding="utf-8")) == {"a": [0, 1], "b": 1.5}

    render.write_matrix_csv("-", np.eye(2))
    assert capsys.readouterr().out == "1,0\n0,1\n"


def test_thread_pool_map_keeps_order():
    items = list(range(40))
    with ThreadPoolMap(4) as pmap:
        assert pmap.map(lambda i: i * i, items) == [i * i for i in items]
    assert SerialMap().map(str, [1, 2]) == ["1", "2"]
    assert ThreadPoolMap(0).threads == 1


def test_derive_rng_is_keyed():
    a = derive_rng(5, 1, 2).standard_normal(4)
    b = derive_rng(5, 1, 2).standard_normal(4)
    c = derive_rng(5, 2, 1).standard_normal(4)
    d = derive_rng(6, 1, 2).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
