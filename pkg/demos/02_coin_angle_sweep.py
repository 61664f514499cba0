"""Three-step distributions from |H> as the coin angle is swept from identity to flip."""

# %%
import math

import numpy as np

from qwalk.classical import ClassicalState, classical_evolve
from qwalk.walk import evolve, make_coin, position_distribution, prepare_state

bins = (3, 1, -1, -3)
print("theta   quantum(+3 +1 -1 -3)        classical(+3 +1 -1 -3)")
for deg in np.arange(0, 46, 7.5):
    th = math.radians(deg)
    q = position_distribution(evolve(prepare_state(1, 0), make_coin(th), 3))
    c = classical_evolve(ClassicalState.coin(1.0), th, 3)
    print(f"{deg:5.1f}   " + " ".join(f"{q.prob(b):.3f}" for b in bins) + "   " +
          " ".join(f"{c.prob(b):.3f}" for b in bins))

# %% At 45 degrees every step flips the coin, so the walker zigzags H, V, H, V and ends at -1.
# At 22.5 degrees the outer bins carry 1/8 in both descriptions; interference only shows inside.
