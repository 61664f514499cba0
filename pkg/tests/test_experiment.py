import math

import numpy as np
import pytest
from scipy.stats import chi2

from qwalk.classical import galton_sample
from qwalk.distribution import Distribution, total_variation
from qwalk.experiment import (
    ClickLog,
    DetectorModel,
    estimate_distribution,
    expected_clicks_per_run,
    model_distribution,
    run_experiment,
    runs_for_clicks,
    spread_standard_error,
    step_gate,
)
from qwalk.hardware import HardwareParams, arrival_time
from qwalk.walk import circular_state, moments

PARAMS = HardwareParams()
IDEAL = DetectorModel.ideal()


def gated(step, clicks, seed, det=IDEAL, params=PARAMS, mean_n=8.0):
    runs = runs_for_clicks(clicks, step, params, det, mean_n)
    return run_experiment(circular_state(), params, det, mean_n, runs, step, seed=seed,
                          gate=step_gate(step, params))


def test_detector_validation():
    for bad in (dict(efficiency=0.0), dict(efficiency=1.5), dict(jitter_sigma=-1), dict(dead_time=-1),
                dict(dark_rate=-1e-9)):
        with pytest.raises(ValueError):
            DetectorModel(**bad)


@pytest.mark.parametrize("kw", [dict(runs=0), dict(max_step=0), dict(mean_n=-1.0)])
def test_run_experiment_validation(kw):
    args = dict(initial=circular_state(), params=PARAMS, det=IDEAL, mean_n=8.0, runs=10, max_step=3)
    args.update(kw)
    with pytest.raises(ValueError):
        run_experiment(**args)


def test_expected_click_rate():
    rate = expected_clicks_per_run(PARAMS, DetectorModel(), 8.0, 5)
    assert rate == pytest.approx(8 * 0.5 ** 5 * 0.18 ** 5 * 0.24)
    assert runs_for_clicks(3016, 5, PARAMS, DetectorModel(), 8.0) == math.ceil(3016 / rate)


@pytest.mark.parametrize("step", [1, 2, 3, 4, 5])
def test_histogram_converges_to_model(step):
    log = gated(step, 1e5, seed=step)
    est = estimate_distribution(log, step)
    assert est.n_samples > 0.97e5
    assert total_variation(est, model_distribution(circular_state(), PARAMS, step)) < 0.02


def test_ungated_run_resolves_every_step():
    log = run_experiment(circular_state(), PARAMS, IDEAL, 8.0, 200_000, 3, seed=0)
    assert set(np.unique(log.step)) == {1, 2, 3}
    for k in (1, 2, 3):
        est = estimate_distribution(log, k)
        assert total_variation(est, model_distribution(circular_state(), PARAMS, k)) < 0.05


def test_zero_mean_photon_number_gives_only_darks():
    det = DetectorModel(dark_rate=1e-4, dead_time=0.0)
    log = run_experiment(circular_state(), PARAMS, det, 0.0, 50_000, 5, seed=1)
    assert len(log) > 0
    assert log.is_dark.all()
    assert len(run_experiment(circular_state(), PARAMS, IDEAL, 0.0, 1000, 5, seed=1)) == 0


def test_fixed_seed_is_bit_identical():
    det = DetectorModel(dark_rate=1e-6)
    a = run_experiment(circular_state(), PARAMS, det, 8.0, 20_000, 5, seed=42)
    b = run_experiment(circular_state(), PARAMS, det, 8.0, 20_000, 5, seed=42)
    c = run_experiment(circular_state(), PARAMS, det, 8.0, 20_000, 5, seed=43)
    assert a == b
    assert a != c


def test_log_is_sorted_by_run_then_time():
    log = run_experiment(circular_state(), PARAMS, DetectorModel(dark_rate=1e-5), 8.0, 20_000, 5, seed=5)
    order = np.lexsort((log.raw_time, log.run))
    np.testing.assert_array_equal(order, np.arange(len(log)))


def test_dead_time_separates_clicks_within_a_run():
    det = DetectorModel(dead_time=50.0, dark_rate=2e-3, jitter_sigma=0.5)
    log = run_experiment(circular_state(), PARAMS, det, 50.0, 20_000, 5, seed=7)
    same = log.run[1:] == log.run[:-1]
    assert same.any()
    assert np.all(np.diff(log.raw_time)[same] >= 50.0)


def test_dead_time_zero_keeps_everything():
    det = DetectorModel(dead_time=0.0, jitter_sigma=0.0)
    log = run_experiment(circular_state(), PARAMS, det, 50.0, 20_000, 3, seed=7)
    same = log.run[1:] == log.run[:-1]
    assert same.any()


def test_dark_fraction_matches_rate():
    det = DetectorModel(dark_rate=2e-5, dead_time=0.0)
    runs = 100_000
    log = run_experiment(circular_state(), PARAMS, det, 1.0, runs, 5, seed=9)
    lo, hi = 0.0, 5 * PARAMS.t_V + PARAMS.bin_pitch / 2
    expected = det.dark_rate * (hi - lo) * runs
    assert abs(log.is_dark.sum() - expected) < 4 * math.sqrt(expected)


def test_dark_counts_confined_to_gate():
    det = DetectorModel(dark_rate=1e-4, dead_time=0.0)
    gate = step_gate(5, PARAMS)
    log = run_experiment(circular_state(), PARAMS, det, 0.0, 10_000, 5, seed=2, gate=gate)
    assert np.all((log.raw_time > gate[0]) & (log.raw_time <= gate[1]))


def test_jitter_free_clicks_all_resolve():
    log = run_experiment(circular_state(), PARAMS, IDEAL, 8.0, 50_000, 7, seed=3)
    assert log.resolved.all()
    for r in (log[i] for i in range(50)):
        assert r.raw_time_ns == r.resolved_bin.arrival_ns


def test_large_jitter_leaves_some_unresolved():
    det = DetectorModel(efficiency=1.0, jitter_sigma=3.0, dead_time=0.0)
    log = run_experiment(circular_state(), PARAMS, det, 8.0, 50_000, 5, seed=3)
    assert (~log.resolved).any()
    assert list(log)[np.flatnonzero(~log.resolved)[0]].resolved_bin is None


def test_chi_square_goodness_of_fit():
    model = model_distribution(circular_state(), PARAMS, 5)
    passed = 0
    for seed in range(200):
        est = estimate_distribution(gated(5, 3016, seed), 5)
        n = est.n_samples
        stat = np.sum((est.probabilities * n - model.probabilities * n) ** 2 / (model.probabilities * n))
        passed += chi2.sf(stat, df=len(model) - 1) > 0.001
    assert passed >= 198


def test_error_bar_coverage():
    model = model_distribution(circular_state(), PARAMS, 5)
    hits = total = 0
    for seed in range(1000):
        est = estimate_distribution(gated(5, 3016, seed, det=DetectorModel()), 5)
        hits += np.sum(np.abs(est.probabilities - model.probabilities) <= 2 * est.sigma)
        total += len(est)
    assert hits / total >= 0.93


def test_sigma_hat_within_three_standard_errors():
    model = model_distribution(circular_state(), PARAMS, 5)
    _, sigma_model = moments(model)
    ok = 0
    for seed in range(100):
        est = estimate_distribution(gated(5, 3016, seed), 5)
        se = spread_standard_error(model, est.n_samples)
        ok += abs(moments(est)[1] - sigma_model) <= 3 * se
    assert ok >= 95


def test_spread_standard_error_against_bootstrap():
    model = model_distribution(circular_state(), PARAMS, 5)
    rng = np.random.default_rng(0)
    draws = rng.choice(model.positions, size=(4000, 3016), p=model.probabilities)
    assert np.std(draws.std(axis=1)) == pytest.approx(spread_standard_error(model, 3016), rel=0.05)
    assert spread_standard_error(Distribution.from_mapping({3: 1.0}), 10) == 0.0


def test_single_click_estimate():
    tb = arrival_time(5, 1)
    log = ClickLog(np.array([0]), np.array([tb.arrival_ns]), np.array([5]), np.array([1]),
                   np.array([False]))
    est = estimate_distribution(log, 5)
    assert est.as_dict(nonzero=True) == {1: 1.0}
    np.testing.assert_array_equal(est.sigma, 0.0)
    with pytest.raises(ValueError):
        estimate_distribution(log, 4)


def test_classical_clicks_reproduce_galton_sample():
    g = galton_sample(math.radians(22.5), 5, 3016, seed=4)
    counts = np.rint(g.probabilities * g.n_samples).astype(int)
    xs = np.repeat(g.positions, counts)
    t = np.array([arrival_time(5, int(x)).arrival_ns for x in xs])
    log = ClickLog(np.arange(xs.size), t, np.full(xs.size, 5), xs, np.zeros(xs.size, dtype=bool))
    est = estimate_distribution(log, 5)
    on = g.on_support(est.positions)
    np.testing.assert_allclose(est.probabilities, on.probabilities, atol=1e-15)
    np.testing.assert_allclose(est.sigma, np.sqrt(on.probabilities * (1 - on.probabilities) / 3016))


def test_click_log_csv_round_trip():
    log = run_experiment(circular_state(), PARAMS, DetectorModel(dark_rate=1e-5, jitter_sigma=2.0),
                         8.0, 20_000, 5, seed=6)
    assert (~log.resolved).any()
    text = log.to_csv()
    assert text.splitlines()[0] == "run,raw_time_ns,step,position,is_dark"
    assert ClickLog.from_csv(text) == log


def test_click_log_rejects_bad_header():
    with pytest.raises(ValueError):
        ClickLog.from_csv("run,time\n1,2\n")


def test_concatenate_offsets_runs():
    a = gated(3, 100, seed=1)
    b = gated(3, 100, seed=2)
    joined = ClickLog.concatenate([a, b], [0, 10**9])
    assert len(joined) == len(a) + len(b)
    assert joined.run[len(a):].min() >= 10**9
    assert len(ClickLog.concatenate([], [])) == 0
