import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwalk.classical import ClassicalState, classical_evolve
from qwalk.distribution import Distribution, total_variation
from qwalk.walk import (
    H,
    V,
    WalkState,
    apply_coin,
    apply_step,
    circular_state,
    dephased_evolve,
    evolve,
    fidelity,
    make_coin,
    moments,
    position_distribution,
    prepare_state,
    prepare_state_from_ratio,
)

from oracles import hwp, path_probabilities, path_sum

HADAMARD = math.radians(22.5)
S2 = 1 / math.sqrt(2)


def amps(state):
    return state.as_dict(atol=1e-15)


def assert_amps(state, expected, tol=1e-12):
    got = amps(state)
    keys = set(got) | set(expected)
    for k in keys:
        assert abs(got.get(k, 0) - expected.get(k, 0)) < tol, k


# -- preparation --------------------------------------------------------------

def test_prepare_basis_state():
    s = prepare_state(1, 0, 0)
    assert_amps(s, {(0, H): 1})
    assert s.step_count == 0


def test_prepare_circular():
    s = prepare_state(S2, S2, math.pi / 2)
    assert_amps(s, {(0, H): S2, (0, V): 1j * S2})
    assert fidelity(s, circular_state()) == pytest.approx(1.0, abs=1e-12)


def test_prepare_rejects_zero_and_unnormalized():
    with pytest.raises(ValueError):
        prepare_state(0, 0, 0, normalize=True)
    with pytest.raises(ValueError):
        prepare_state(1, 1, 0)
    s = prepare_state(3, 4, 0, normalize=True)
    assert s.norm2 == pytest.approx(1.0, abs=1e-15)


def test_imbalanced_preparation_fidelity():
    # |a_H|^2/|a_V|^2 = 0.94 at the ideal phase
    s = prepare_state_from_ratio(0.94, math.pi / 2)
    a = s.amplitudes[0]
    assert abs(a[H]) ** 2 / abs(a[V]) ** 2 == pytest.approx(0.94, rel=1e-12)
    assert fidelity(s, circular_state()) >= 0.999


# -- coins ----------------------------------------------------------------------

@pytest.mark.parametrize("deg, expected", [
    (22.5, S2 * np.array([[1, 1], [1, -1]])),
    (0.0, np.array([[1, 0], [0, -1]])),
    (45.0, np.array([[0, 1], [1, 0]])),
])
def test_make_coin_special_angles(deg, expected):
    np.testing.assert_allclose(make_coin(math.radians(deg)), expected, atol=1e-15)


@given(st.floats(-10, 10, allow_nan=False))
def test_coin_is_involutive_reflection(theta):
    c = make_coin(theta)
    np.testing.assert_allclose(c @ c, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(c, c.conj().T, atol=1e-15)
    assert abs(np.linalg.det(c)) <= 1 + 1e-12


def test_apply_coin_examples():
    assert_amps(apply_coin(prepare_state(1, 0), make_coin(HADAMARD)), {(0, H): S2, (0, V): S2})
    assert_amps(apply_coin(prepare_state(0, 1), make_coin(math.radians(45))), {(0, H): 1})
    s = evolve(circular_state(), make_coin(HADAMARD), 3)
    flipped = apply_coin(s, make_coin(0.0))
    np.testing.assert_allclose(flipped.amplitudes[:, V], -s.amplitudes[:, V])
    np.testing.assert_allclose(position_distribution(flipped).probabilities,
                               position_distribution(s).probabilities, atol=1e-15)
    assert flipped.step_count == s.step_count


# -- shift ------------------------------------------------------------------------

def test_step_moves_h_right_v_left():
    assert_amps(apply_step(prepare_state(1, 0)), {(1, H): 1})
    assert_amps(apply_step(prepare_state(0, 1)), {(-1, V): 1})
    s = apply_step(WalkState(np.array([[S2, S2]])))
    assert_amps(s, {(1, H): S2, (-1, V): S2})
    assert s.step_count == 1


@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=12).filter(lambda v: len(v) % 2 == 0),
       st.integers(-5, 5))
def test_step_preserves_norm_exactly(values, x_min):
    a = np.array(values, dtype=complex).reshape(-1, 2)
    s = WalkState(a, x_min)
    moved = apply_step(s)
    # amplitudes are moved, never recombined
    nz = lambda v: sorted((z.real, z.imag) for z in v.reshape(-1).tolist() if z != 0)  # noqa: E731
    assert nz(moved.amplitudes) == nz(s.amplitudes)
    assert moved.norm2 == pytest.approx(s.norm2, rel=1e-15)


# -- evolution ---------------------------------------------------------------------

def test_one_hadamard_step():
    s = evolve(prepare_state(1, 0), make_coin(HADAMARD), 1)
    assert_amps(s, {(1, H): S2, (-1, V): S2})


def test_three_hadamard_steps_from_h():
    d = position_distribution(evolve(prepare_state(1, 0), make_coin(HADAMARD), 3))
    expected = path_probabilities((1, 0), hwp(HADAMARD), 3)
    assert expected == pytest.approx({3: 0.125, 1: 0.625, -1: 0.125, -3: 0.125}, abs=1e-12)
    for x, p in expected.items():
        assert d.prob(x) == pytest.approx(p, abs=1e-12)


def test_zero_steps_is_identity():
    s = prepare_state_from_ratio(0.7, 0.3)
    out = evolve(s, make_coin(0.4), 0)
    np.testing.assert_array_equal(out.amplitudes, s.amplitudes)
    assert out.step_count == 0


@pytest.mark.parametrize("deg", [0, 15, 22.5, 30, 45])
@pytest.mark.parametrize("n", range(0, 9))
def test_matches_path_enumeration(deg, n):
    coin_amps = (0.6, 0.8j)
    s = evolve(prepare_state(0.6, 0.8, math.pi / 2), make_coin(math.radians(deg)), n)
    for (x, c), a in path_sum(coin_amps, hwp(math.radians(deg)), n).items():
        assert abs(s.amplitude(x, c) - a) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0, math.pi, allow_nan=False))
def test_unitarity_over_many_steps(theta):
    s = evolve(circular_state(), make_coin(theta), 120)
    assert abs(s.norm2 - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 30), st.floats(0, math.pi, allow_nan=False))
def test_support_parity(n, theta):
    d = position_distribution(evolve(circular_state(), make_coin(theta), n))
    for x, p in d.as_dict().items():
        if (x - n) % 2 or abs(x) > n:
            assert p == 0


@pytest.mark.parametrize("n", [1, 2, 5, 10, 25])
def test_hadamard_circular_symmetry(n):
    d = position_distribution(evolve(circular_state(), make_coin(HADAMARD), n))
    for x in range(-n, n + 1):
        assert d.prob(x) == pytest.approx(d.prob(-x), abs=1e-10)


def test_lossy_coin_norm_non_increasing():
    lossy = np.diag([1.0, 0.9]) @ make_coin(HADAMARD)
    norms = [evolve(circular_state(), lossy, n).norm2 for n in range(12)]
    assert all(b <= a + 1e-15 for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1


# -- distributions and moments ----------------------------------------------------------

def test_position_distribution_examples():
    assert position_distribution(prepare_state(1, 0)).as_dict(nonzero=True) == {0: 1.0}
    half = WalkState(np.array([[0.5, 0.5j]]), 4)
    assert half.norm2 == pytest.approx(0.5)
    assert position_distribution(half, renormalize=True).as_dict() == pytest.approx({4: 1.0})


def test_position_distribution_zero_norm():
    with pytest.raises(ValueError):
        position_distribution(WalkState(np.zeros((3, 2))), renormalize=True)


def test_moments():
    assert moments(Distribution.from_mapping({0: 1.0})) == (0.0, 0.0)
    with pytest.raises(ValueError):
        moments(Distribution(np.array([], dtype=int), np.array([])))
    d = position_distribution(evolve(circular_state(), make_coin(HADAMARD), 5))
    assert moments(d)[1] == pytest.approx(2.83, abs=0.005)
    binom = Distribution.from_mapping({x: math.comb(5, (5 + x) // 2) / 32 for x in range(-5, 6, 2)})
    assert moments(binom)[1] == pytest.approx(math.sqrt(5), abs=1e-12)


def test_fidelity_examples():
    s = prepare_state_from_ratio(1.3, 0.2)
    assert fidelity(s, s) == pytest.approx(1.0)
    assert fidelity(prepare_state(1, 0), prepare_state(0, 1)) == 0.0
    # different supports are aligned by position
    a = evolve(circular_state(), make_coin(0.2), 3)
    b = WalkState(np.vstack([np.zeros((2, 2)), a.amplitudes]), a.x_min - 2)
    assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)


# -- dephasing --------------------------------------------------------------------------

def test_dephasing_off_is_coherent():
    d = dephased_evolve(prepare_state(1, 0), make_coin(HADAMARD), 3, 0.0)
    assert d.as_dict(nonzero=True) == pytest.approx({3: 0.125, 1: 0.625, -1: 0.125, -3: 0.125}, abs=1e-12)


def test_full_dephasing_is_classical_three_steps():
    d = dephased_evolve(prepare_state(1, 0), make_coin(HADAMARD), 3, 1.0)
    assert d.as_dict(nonzero=True) == pytest.approx({3: 1 / 8, 1: 3 / 8, -1: 3 / 8, -3: 1 / 8}, abs=1e-12)


def test_full_dephasing_spread():
    d = dephased_evolve(circular_state(), make_coin(HADAMARD), 5, 1.0)
    assert moments(d)[1] == pytest.approx(math.sqrt(5), abs=1e-12)


@pytest.mark.parametrize("deg", [10, 22.5, 33])
@pytest.mark.parametrize("state", [prepare_state(1, 0), circular_state(), prepare_state_from_ratio(0.3, 1.0)])
def test_full_dephasing_matches_classical_oracle(deg, state):
    th = math.radians(deg)
    d = dephased_evolve(state, make_coin(th), 7, 1.0)
    c = classical_evolve(ClassicalState.from_walk_state(state), th, 7)
    assert total_variation(d, c) < 1e-9


def test_trajectory_mode_agrees_within_sampling_error():
    n_traj = 4000
    state = circular_state()
    exact = dephased_evolve(state, make_coin(HADAMARD), 5, 0.4)
    sampled = dephased_evolve(state, make_coin(HADAMARD), 5, 0.4, mode="trajectory",
                              trajectories=n_traj, seed=11)
    assert total_variation(exact, sampled) < 3 / math.sqrt(n_traj)
    classical = classical_evolve(ClassicalState.from_walk_state(state), HADAMARD, 5)
    full = dephased_evolve(state, make_coin(HADAMARD), 5, 1.0, mode="trajectory",
                           trajectories=n_traj, seed=3)
    assert total_variation(full, classical) < 3 / math.sqrt(n_traj)


def test_trajectory_mode_is_reproducible():
    args = (circular_state(), make_coin(0.3), 6, 0.5)
    a = dephased_evolve(*args, mode="trajectory", trajectories=200, seed=5)
    b = dephased_evolve(*args, mode="trajectory", trajectories=200, seed=5)
    np.testing.assert_array_equal(a.probabilities, b.probabilities)


def test_partial_dephasing_interpolates_spread():
    sig = [moments(dephased_evolve(circular_state(), make_coin(HADAMARD), 8, p))[1] for p in (0, 0.3, 1)]
    assert sig[0] > sig[1] > sig[2]


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_dephasing_strength_bounds(p):
    with pytest.raises(ValueError):
        dephased_evolve(circular_state(), make_coin(HADAMARD), 2, p)


def test_amplitude_csv_round_trip():
    s = evolve(prepare_state_from_ratio(0.94), make_coin(0.31), 4)
    back = WalkState.from_csv(s.to_csv(), step_count=4)
    assert back.x_min == s.x_min
    np.testing.assert_array_equal(back.amplitudes, s.amplitudes)
    assert s.to_csv().splitlines()[0] == "position,coin,re,im"
