from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from momentflow import jsonio


def test_fixed_precision_floats():
    assert jsonio.dumps(0.1) == "0.10000000000000001"
    assert jsonio.dumps(1.0) == "1.0"
    assert jsonio.dumps(1e300) == "1.0000000000000001e+300"
    assert jsonio.dumps([math.nan, math.inf, -math.inf]) == "[NaN, Infinity, -Infinity]"


def test_keys_sorted_and_types_mapped():
    obj = {"b": np.float64(2.5), "a": [np.int64(3), True, None, Fraction(1, 3)]}
    assert jsonio.dumps(obj) == '{"a": [3, true, null, "1/3"], "b": 2.5}'
    assert jsonio.dumps(np.arange(3)) == "[0, 1, 2]"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_round_trip(x):
    assert json.loads(jsonio.dumps(x)) == x


def test_files(tmp_path):
    jsonio.write_json(tmp_path / "a.json", {"x": [1.5]})
    assert jsonio.read_json(tmp_path / "a.json") == {"x": [1.5]}
    jsonio.write_jsonl(tmp_path / "a.jsonl", [{"t": 0.0}, {"t": 0.5}])
    assert (tmp_path / "a.jsonl").read_text() == '{"t": 0.0}\n{"t": 0.5}\n'
    jsonio.write_csv(tmp_path / "a.csv", ("k", "v"), [(1, 0.25)])
    assert (tmp_path / "a.csv").read_text() == "k,v\n1,0.25\n"


def test_unserializable():
    try:
        jsonio.dumps(object())
    except TypeError:
        return
    raise AssertionError("expected TypeError")
