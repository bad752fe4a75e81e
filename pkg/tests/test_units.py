import numpy as np
from hypothesis import given, strategies as st

from hris_dfrc.units import DB_FLOOR, db_to_linear, linear_to_db


def test_hand_values():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(10) == 10.0
    assert np.isclose(db_to_linear(5), 3.1622776601683795, rtol=1e-15)
    assert linear_to_db(100.0) == 20.0


def test_zero_power():
    assert linear_to_db(0.0) == -np.inf
    assert linear_to_db(0.0, floor=DB_FLOOR) == -300.0
    out = linear_to_db(np.array([0.0, 1.0]), floor=DB_FLOOR)
    assert out.tolist() == [-300.0, 0.0]


def test_shapes_preserved():
    assert isinstance(db_to_linear(3.0), float)
    assert db_to_linear(np.zeros((2, 3))).shape == (2, 3)


@given(st.floats(-200, 200))
def test_db_round_trip(x_db):
    back = linear_to_db(db_to_linear(x_db))
    assert abs(db_to_linear(back) - db_to_linear(x_db)) <= 1e-12 * db_to_linear(x_db)


@given(st.floats(1e-30, 1e30))
def test_linear_round_trip(x):
    assert abs(db_to_linear(linear_to_db(x)) - x) <= 1e-12 * x
