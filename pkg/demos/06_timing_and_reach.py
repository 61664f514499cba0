"""Time-bin bookkeeping, aliasing and how many steps the photon budget allows."""

# %%
from qwalk.hardware import (
    HardwareParams,
    arrival_time,
    detect_aliasing,
    feasible_steps,
    legal_bins,
    photon_budget,
)

params = HardwareParams.default()
print("(1,+1) arrives at", arrival_time(1, 1).arrival_ns, "ns; (5,-5) at", arrival_time(5, -5).arrival_ns, "ns")
print("bins up to step 7:", len(legal_bins(7)), "collisions:", len(detect_aliasing(7)))
for a in detect_aliasing(9):
    print(f"({a.first.step},{a.first.position:+d}) collides with ({a.second.step},{a.second.position:+d})"
          f" at {a.first.arrival_ns:g} ns")

# %% Photons left for the detector per step
budget = photon_budget(8.0, params, 5)
for k, n in enumerate(budget.mean_n_per_step):
    print(f"step {k}: {n:.2e} photons per pulse")

# %% Reach of the present setup against an upgraded loop (1 W at 250 kHz, 805 nm, active switch)
print("measured setup:", feasible_steps(params), "steps")
photons = 1.0 / 250e3 / (6.62607015e-34 * 299792458 / 805e-9)
upgraded = params.replace(eta_setup=0.71, out_couple_prob=1.0)
print("upgraded setup:", feasible_steps(upgraded, mean_n_initial=photons, max_steps=400), "steps")
