import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qwalk.classical import galton_sample
from qwalk.distribution import Distribution, total_variation
from qwalk.walk import circular_state, evolve, make_coin, position_distribution

probs = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12)


def hadamard5():
    return position_distribution(evolve(circular_state(), make_coin(math.radians(22.5)), 5))


def test_csv_round_trip_exact():
    d = hadamard5()
    back = Distribution.from_csv(d.to_csv())
    np.testing.assert_array_equal(back.positions, d.positions)
    np.testing.assert_array_equal(back.probabilities, d.probabilities)
    assert back.sigma is None


def test_csv_round_trip_with_sigma():
    d = galton_sample(0.4, 4, 100, seed=0)
    back = Distribution.from_csv(d.to_csv())
    np.testing.assert_array_equal(back.sigma, d.sigma)
    assert d.to_csv().splitlines()[0] == "position,probability,sigma"


def test_json_round_trip():
    d = galton_sample(0.4, 4, 100, seed=0)
    back = Distribution.from_json(d.to_json())
    np.testing.assert_array_equal(back.probabilities, d.probabilities)
    np.testing.assert_array_equal(back.sigma, d.sigma)
    assert back.n_samples == 100


@given(probs, st.integers(-20, 20))
def test_round_trip_property(ps, x0):
    d = Distribution(np.arange(x0, x0 + len(ps)), np.array(ps))
    for back in (Distribution.from_csv(d.to_csv()), Distribution.from_json(d.to_json())):
        np.testing.assert_array_equal(back.probabilities, d.probabilities)
        np.testing.assert_array_equal(back.positions, d.positions)


def test_positions_are_sorted():
    d = Distribution.from_mapping({3: 0.25, -1: 0.5, 1: 0.25})
    assert list(d.positions) == [-1, 1, 3]
    assert d.prob(2) == 0.0


@pytest.mark.parametrize("pos, p", [([0, 0], [0.5, 0.5]), ([0, 1], [1.2, -0.2]), ([0], [0.5, 0.5])])
def test_validation(pos, p):
    with pytest.raises(ValueError):
        Distribution(np.array(pos), np.array(p))


def test_renormalized_and_support():
    d = Distribution.from_mapping({0: 0.2, 2: 0.6})
    r = d.renormalized()
    assert r.total == pytest.approx(1.0)
    assert r.prob(2) == pytest.approx(0.75)
    s = d.on_support([-2, 0, 2, 4])
    assert list(s.positions) == [-2, 0, 2, 4]
    assert s.prob(4) == 0.0


def test_total_variation():
    a = Distribution.from_mapping({0: 1.0})
    b = Distribution.from_mapping({1: 1.0})
    assert total_variation(a, b) == 1.0
    assert total_variation(a, a) == 0.0


def test_malformed_csv():
    with pytest.raises(ValueError):
        Distribution.from_csv("pos,prob\n1,0.5\n")
