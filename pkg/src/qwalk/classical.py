"""Classical random-walk counterpart of the coined walk.

The coin label is kept as part of the Markov state: from label ``c`` the walker
moves to label ``c'`` with probability ``|C(θ)[c', c]|^2`` and is then shifted
like the quantum walker (``H`` right, ``V`` left). For the Hadamard angle this
is the fair Galton board; for other angles the chain has memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import Distribution
from .walk import H, V, WalkState, make_coin

__all__ = ["ClassicalState", "transition_matrix", "classical_evolve", "galton_sample"]


@dataclass(frozen=True, eq=False)
class ClassicalState:
    """Probabilities ``probabilities[i, c]`` of being at ``x_min + i`` with coin ``c``."""

    probabilities: np.ndarray
    x_min: int = 0

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"probabilities must have shape (L, 2), got {p.shape}")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def coin(cls, p_h: float = 1.0) -> "ClassicalState":
        """Walker at the origin holding ``H`` with probability ``p_h``."""
        return cls(np.array([[p_h, 1.0 - p_h]]), 0)

    @classmethod
    def from_walk_state(cls, state: WalkState) -> "ClassicalState":
        """Measure a quantum state in the position-coin basis."""
        p = np.abs(state.amplitudes) ** 2
        return cls(p / p.sum(), state.x_min)


def transition_matrix(coin) -> np.ndarray:
    """Column-stochastic coin transition ``T[c', c] = |C[c', c]|^2``."""
    t = np.abs(np.asarray(coin)) ** 2
    return t / t.sum(axis=0, keepdims=True)


def classical_evolve(initial: ClassicalState, theta: float, n: int, coin=None) -> Distribution:
    """Position marginal after ``n`` steps of the classical chain.

    ``coin`` overrides the HWP matrix built from ``theta`` when given.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    t = transition_matrix(make_coin(theta) if coin is None else coin)
    p = np.zeros((initial.probabilities.shape[0] + 2 * n, 2))
    p[n:n + initial.probabilities.shape[0]] = initial.probabilities
    for _ in range(n):
        p = p @ t.T
        p[1:, H] = p[:-1, H].copy()
        p[0, H] = 0
        p[:-1, V] = p[1:, V].copy()
        p[-1, V] = 0
    positions = np.arange(p.shape[0], dtype=np.int64) + initial.x_min - n
    return Distribution(positions, p.sum(axis=1))


def galton_sample(theta: float, n: int, runs: int, seed=None,
                  initial: ClassicalState | None = None) -> Distribution:
    """Monte Carlo histogram of the classical chain with multinomial error bars."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if n < 0:
        raise ValueError("n must be non-negative")
    initial = ClassicalState.coin(1.0) if initial is None else initial
    rng = np.random.default_rng(seed)
    t = transition_matrix(make_coin(theta))
    flat = initial.probabilities.reshape(-1)
    start = rng.choice(flat.size, size=runs, p=flat / flat.sum())
    x = start // 2 + initial.x_min
    c = start % 2
    for _ in range(n):
        stay_h = rng.random(runs) < t[H, c]
        c = np.where(stay_h, H, V)
        x = x + np.where(c == H, 1, -1)
    lo = initial.x_min - n
    hi = initial.x_min + initial.probabilities.shape[0] - 1 + n
    positions = np.arange(lo, hi + 1, dtype=np.int64)
    counts = np.bincount(x - lo, minlength=positions.size)
    p = counts / runs
    return Distribution(positions, p, np.sqrt(p * (1 - p) / runs), runs)
