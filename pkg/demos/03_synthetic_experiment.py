"""Click-level emulation of the measurement at the scale of the recorded data set."""

# %%
import numpy as np

from qwalk.experiment import (
    DetectorModel,
    estimate_distribution,
    model_distribution,
    run_experiment,
    runs_for_clicks,
    spread_standard_error,
    step_gate,
)
from qwalk.hardware import HardwareParams
from qwalk.walk import circular_state, moments

params = HardwareParams.default()
det = DetectorModel()
state = circular_state()

# about 3000 step-5 clicks need a quarter of a billion pulses at eight photons each
runs = runs_for_clicks(3016, 5, params, det, mean_n=8.0)
print(f"runs needed: {runs:,}")

# %% Gate the detector on the step-5 bins and estimate the histogram
log = run_experiment(state, params, det, 8.0, runs, 5, seed=2, gate=step_gate(5, params))
est = estimate_distribution(log, 5)
model = model_distribution(state, params, 5)
for x, p, s, m in zip(est.positions, est.probabilities, est.sigma, model.probabilities):
    print(f"x = {x:+d}: {p:.4f} +- {s:.4f}   model {m:.4f}")

# %% Spread with its standard error
sig, sig_model = moments(est)[1], moments(model)[1]
se = spread_standard_error(model, est.n_samples)
print(f"N = {est.n_samples}, sigma_hat = {sig:.3f} +- {se:.3f}, model {sig_model:.3f}")
print("dark clicks in the gate:", int(log.is_dark.sum()), "unresolved clicks:", int((~log.resolved).sum()))

# %% Dark counts at 100 Hz
# The gate stays open for about 30 ns on each of a quarter billion pulses, so even a
# quiet detector adds hundreds of clicks spread evenly over the bins. That flattens
# the histogram and inflates the measured spread.
noisy = DetectorModel(dark_rate=1e-7)
log = run_experiment(state, params, noisy, 8.0, runs, 5, seed=2, gate=step_gate(5, params))
est = estimate_distribution(log, 5)
print(f"with darks: N = {est.n_samples} ({int(log.is_dark.sum())} dark), sigma_hat = {moments(est)[1]:.3f}")
