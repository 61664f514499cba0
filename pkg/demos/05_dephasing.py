"""Coin dephasing interpolates between the quantum and the classical walk."""

# %%
import math

from qwalk.classical import ClassicalState, classical_evolve
from qwalk.distribution import total_variation
from qwalk.walk import circular_state, dephased_evolve, make_coin, moments

coin = make_coin(math.radians(22.5))
classical = classical_evolve(ClassicalState.coin(0.5), math.radians(22.5), 10)
for p in (0.0, 0.05, 0.1, 0.2, 0.5, 1.0):
    d = dephased_evolve(circular_state(), coin, 10, p)
    print(f"p = {p:4.2f}: sigma = {moments(d)[1]:.3f}, distance to classical = {total_variation(d, classical):.4f}")

# %% Quantum trajectories reproduce the density-matrix result within sampling error
exact = dephased_evolve(circular_state(), coin, 10, 0.2)
traj = dephased_evolve(circular_state(), coin, 10, 0.2, mode="trajectory", trajectories=4000, seed=0)
print("trajectory vs density matrix:", round(total_variation(exact, traj), 4))
