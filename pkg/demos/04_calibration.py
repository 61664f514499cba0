"""Recovering the loop imperfections from histograms."""

# %%
import math

from qwalk.calibration import FitProblem, fit, identifiability_report, synthesize_observed
from qwalk.hardware import HardwareParams

truth = HardwareParams.default()
observed = synthesize_observed(truth, steps=range(1, 6), n_total=10**6, seed=1, a_H_ratio=0.94)

# start from a perfect loop and let phi, the lumped loss and the input imbalance float
problem = FitProblem(observed, fixed=HardwareParams.ideal(math.radians(22.5)))
result = fit(problem)
est = result.estimates
print(f"phi       {math.degrees(est['phi']):.3f} deg   (true 1.400)")
print(f"lumped    {est['lumped_eps']:.4f}       (true {truth.lumped_eps:.4f})")
print(f"a_H ratio {est['a_H_ratio']:.4f}       (true 0.9400)")
print(f"objective {result.objective:.2f} after {result.iterations} iterations")

# %% Equal loss shares are a slight misfit
# The lumped parameter spreads one loss product evenly over the three elements.
# The true split is uneven, which a million counts can resolve: the leftover
# chi-square is large and the input imbalance soaks up part of it. Taking the
# shares from the measured values removes most of that bias.
shared = FitProblem(observed, fixed=truth)
res2 = fit(shared, problem.start_vector())
est2 = res2.estimates
print(f"measured shares: phi {math.degrees(est2['phi']):.3f} deg, lumped {est2['lumped_eps']:.4f}, "
      f"a_H ratio {est2['a_H_ratio']:.4f}, objective {res2.objective:.2f}")

# %% The three losses separately are nearly interchangeable
full = FitProblem(observed, ("eps_bs", "eps_loop", "eps_hwp", "phi"), truth, a_H_ratio=0.94)
print(identifiability_report(full).table())
print()
print(identifiability_report(problem, result.x).table())
