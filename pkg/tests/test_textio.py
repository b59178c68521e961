import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdstrap.flow import integrate
from kdstrap.textio import (
    dump_json,
    dump_kv,
    parse_kv,
    read_trajectory_csv,
    table_csv,
    to_jsonable,
    trajectory_csv,
)

keys = st.from_regex(r"[a-z][a-z0-9_]{0,12}", fullmatch=True)
floats = st.floats(allow_nan=False)
values = st.one_of(floats, st.integers(-10**12, 10**12), st.booleans(),
                   st.lists(floats, min_size=2, max_size=5))


@given(st.dictionaries(keys, values, max_size=8))
def test_kv_round_trip(d):
    back = parse_kv(dump_kv(d))
    assert back.keys() == d.keys()
    for k, v in d.items():
        assert back[k] == v
        assert type(back[k]) is type(v)


def test_kv_comments_and_errors():
    assert parse_kv("# header\nlambda = 0.02  # comment\n\nname = affine\n") == {"lambda": 0.02, "name": "affine"}
    with pytest.raises(ValueError):
        parse_kv("lambda 0.02\n")
    with pytest.raises(ValueError):
        parse_kv(" = 3\n")


def test_trajectory_csv_round_trip(headline_profile):
    hz = headline_profile.horizons
    y = np.array([3.0, 0.0, 1.0, 0.2, 1.0, 0.5])
    traj = integrate("mode-rot", headline_profile, y, 5.0, r_thresholds=(hz.r_e + 0.1, hz.r_c - 0.1))
    header, data, comments = read_trajectory_csv(trajectory_csv(traj))
    assert header == ["s", "tau", "r", "psi", "theta", "xi_r", "xi_psi", "xi_theta", "q", "K"]
    assert np.array_equal(data[:, 0], traj.s)
    assert np.array_equal(data[:, 2:8], traj.states)
    assert np.all(data[:, 1] == 0.0)
    assert np.array_equal(data[:, 8], traj.q)
    assert "kind = mode-rot" in comments
    assert f"termination = {traj.termination}" in comments


def test_wave_trajectory_header(headline_profile):
    y = np.array([0.0, 3.0, 0.0, 1.2, -1.0, 0.1, 0.3, 0.4])
    traj = integrate("wave-rot", headline_profile, y, 1.0)
    header, data, _ = read_trajectory_csv(trajectory_csv(traj))
    assert header[1:9] == ["tau", "r", "psi", "theta", "xi_tau", "xi_r", "xi_psi", "xi_theta"]
    assert np.array_equal(data[:, 1:9], traj.states)


def test_table_csv():
    text = table_csv([{"a": 1.5, "b": "x"}, {"a": True}], ["a", "b"])
    assert text == "a,b\n1.5,x\ntrue,\n"


def test_json_is_deterministic_and_strict():
    obj = {"b": np.float64(1.0), "a": [np.int64(2), float("nan"), float("inf")], "c": np.array([1.0, 2.0]),
           "d": np.bool_(True)}
    text = dump_json(obj)
    assert text == dump_json(dict(reversed(list(obj.items()))))
    assert text.endswith("\n")
    back = json.loads(text)
    assert back == {"a": [2, "nan", "inf"], "b": 1.0, "c": [1.0, 2.0], "d": True}
    assert to_jsonable(math.pi) == math.pi
