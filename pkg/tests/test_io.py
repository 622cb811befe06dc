import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from calibnet.io import dumps

json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10 ** 12, 10 ** 12) | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=8),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=6), children, max_size=4),
    max_leaves=20)


@given(json_values)
def test_round_trip(value):
    assert json.loads(dumps(value)) == value


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip_exactly(x):
    back = json.loads(dumps({"x": x}))["x"]
    assert back == x and isinstance(back, float)


def test_keys_sorted_and_numpy_converted():
    text = dumps({"b": np.float64(0.1), "a": np.arange(2), "c": (np.int64(3), np.bool_(True))})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [0, 1], "b": 0.1, "c": [3, True]}
    assert "0.10000000000000001" in text


def test_non_finite_and_unknown():
    assert json.loads(dumps([math.nan]))[0] != json.loads(dumps([math.nan]))[0]
    with pytest.raises(TypeError):
        dumps(object())
