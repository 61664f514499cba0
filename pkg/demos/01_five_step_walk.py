"""Five steps of the Hadamard walk, ideal and with the measured loop imperfections."""

# %% Ideal walk from the circular input
import math

import numpy as np

from qwalk.classical import ClassicalState, classical_evolve
from qwalk.hardware import HardwareParams, lossy_evolve
from qwalk.walk import circular_state, evolve, make_coin, moments, position_distribution

coin = make_coin(math.radians(22.5))
state = circular_state()
for k in range(6):
    d = position_distribution(evolve(state, coin, k))
    print(f"step {k}: sigma = {moments(d)[1]:.3f}  " +
          " ".join(f"{x:+d}:{p:.3f}" for x, p in d.as_dict(nonzero=True).items()))

# %% Ballistic against diffusive spreading
for n in (5, 10, 20, 40):
    sq = moments(position_distribution(evolve(state, coin, n)))[1]
    sc = moments(classical_evolve(ClassicalState.coin(0.5), math.radians(22.5), n))[1]
    print(f"n = {n:>2}: quantum {sq:6.3f} ({sq / n:.3f} n), classical {sc:6.3f} (sqrt n = {math.sqrt(n):.3f})")

# %% The measured loop: losses shrink the norm and skew the distribution
params = HardwareParams.default()
lossy = lossy_evolve(state, params, 5)
d = position_distribution(lossy, renormalize=True)
print("survival after 5 round trips:", round(lossy.norm2, 4))
print("post-selected sigma:", round(moments(d)[1], 4))
print("left/right mass:", round(float(d.probabilities[d.positions < 0].sum()), 3),
      round(float(d.probabilities[d.positions > 0].sum()), 3))
