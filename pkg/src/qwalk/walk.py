"""
State-vector evolution of the one-dimensional coined quantum walk.

The walker lives on integer positions ``x`` with a two-level coin (the photon
polarization) in the basis order ``(H, V)``. One step is a coin toss followed
by the conditional shift that moves ``H`` amplitude to ``x + 1`` and ``V``
amplitude to ``x - 1``.

Amplitudes are stored densely over a contiguous window ``[x_min, x_min + L)``;
the window grows by one site on each side per shift.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .distribution import Distribution

__all__ = [
    "H",
    "V",
    "WalkState",
    "prepare_state",
    "prepare_state_from_ratio",
    "circular_state",
    "make_coin",
    "apply_coin",
    "apply_step",
    "evolve",
    "position_distribution",
    "moments",
    "fidelity",
    "dephased_evolve",
]

H = 0
V = 1
_COIN_LABELS = ("H", "V")

INPUT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WalkState:
    """Walker amplitudes over positions ``x_min .. x_min + len - 1``.

    ``amplitudes[i, c]`` is the amplitude of ``|x_min + i, c>``.
    """

    amplitudes: NDArray[np.complex128]
    x_min: int = 0
    step_count: int = 0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 2 or amps.shape[1] != 2:
            raise ValueError(f"amplitudes must have shape (L, 2), got {amps.shape}")
        if self.step_count < 0:
            raise ValueError("step_count must be non-negative")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def positions(self) -> NDArray[np.int64]:
        return np.arange(self.amplitudes.shape[0], dtype=np.int64) + self.x_min

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def amplitude(self, x: int, coin: int) -> complex:
        i = x - self.x_min
        if 0 <= i < self.amplitudes.shape[0]:
            return complex(self.amplitudes[i, coin])
        return 0j

    def as_dict(self, atol: float = 0.0) -> dict[tuple[int, int], complex]:
        out = {}
        for i, x in enumerate(self.positions):
            for c in (H, V):
                a = complex(self.amplitudes[i, c])
                if abs(a) > atol:
                    out[(int(x), c)] = a
        return out

    def padded(self, x_min: int, x_max: int) -> NDArray[np.complex128]:
        """Amplitudes copied onto the window ``[x_min, x_max]``."""
        if x_min > self.x_min or x_max < self.x_min + self.amplitudes.shape[0] - 1:
            raise ValueError("padding window does not contain the state support")
        out = np.zeros((x_max - x_min + 1, 2), dtype=np.complex128)
        i0 = self.x_min - x_min
        out[i0:i0 + self.amplitudes.shape[0]] = self.amplitudes
        return out

    def to_csv(self) -> str:
        """Amplitudes as CSV with header ``position,coin,re,im``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["position", "coin", "re", "im"])
        for i, x in enumerate(self.positions):
            for c in (H, V):
                a = self.amplitudes[i, c]
                writer.writerow([int(x), _COIN_LABELS[c], repr(float(a.real)), repr(float(a.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, step_count: int = 0) -> "WalkState":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["position", "coin", "re", "im"]:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        entries = {}
        for row in reader:
            coin = _COIN_LABELS.index(row["coin"])
            entries[(int(row["position"]), coin)] = complex(float(row["re"]), float(row["im"]))
        if not entries:
            raise ValueError("no amplitudes in CSV")
        xs = [x for x, _ in entries]
        lo, hi = min(xs), max(xs)
        amps = np.zeros((hi - lo + 1, 2), dtype=np.complex128)
        for (x, c), a in entries.items():
            amps[x - lo, c] = a
        return cls(amps, lo, step_count)


def prepare_state(a_H: float, a_V: float, phi: float = 0.0, normalize: bool = False) -> WalkState:
    """Localized walker at ``x = 0`` with coin ``a_H|H> + exp(i*phi) a_V|V>``.

    Parameters
    ----------
    a_H, a_V : float
        Real coin amplitudes.
    phi : float
        Relative phase of the ``V`` component, in radians.
    normalize : bool
        Rescale the amplitudes to unit norm instead of rejecting them.
    """
    n2 = a_H * a_H + a_V * a_V
    if n2 == 0:
        raise ValueError("a_H and a_V cannot both be zero")
    if normalize:
        scale = 1.0 / np.sqrt(n2)
        a_H, a_V = a_H * scale, a_V * scale
    elif abs(n2 - 1.0) > INPUT_TOL:
        raise ValueError(f"a_H^2 + a_V^2 = {n2!r} is not 1; pass normalize=True")
    amps = np.array([[a_H, a_V * np.exp(1j * phi)]], dtype=np.complex128)
    return WalkState(amps, 0, 0)


def prepare_state_from_ratio(ratio: float, phi: float = np.pi / 2) -> WalkState:
    """Prepared coin state with intensity imbalance ``|a_H|^2 / |a_V|^2 = ratio``."""
    if not ratio > 0:
        raise ValueError("intensity ratio must be positive")
    a_V = 1.0 / np.sqrt(1.0 + ratio)
    a_H = np.sqrt(ratio) * a_V
    return prepare_state(a_H, a_V, phi, normalize=True)


def circular_state() -> WalkState:
    """The balanced input ``(|H> + i|V>)/sqrt(2)``."""
    return prepare_state(1.0, 1.0, np.pi / 2, normalize=True)


def make_coin(theta: float) -> NDArray[np.complex128]:
    """Half-wave-plate coin at angle ``theta`` (radians).

    Returns ``[[cos 2θ, sin 2θ], [sin 2θ, -cos 2θ]]``. The matrix is a
    reflection: unitary, Hermitian and its own inverse.
    """
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=np.complex128)


def apply_coin(state: WalkState, coin) -> WalkState:
    coin = np.asarray(coin, dtype=np.complex128)
    return WalkState(state.amplitudes @ coin.T, state.x_min, state.step_count)


def apply_step(state: WalkState) -> WalkState:
    amps = state.amplitudes
    out = np.zeros((amps.shape[0] + 2, 2), dtype=np.complex128)
    out[2:, H] = amps[:, H]
    out[:-2, V] = amps[:, V]
    return WalkState(out, state.x_min - 1, state.step_count + 1)


def evolve(state: WalkState, coin, n: int) -> WalkState:
    """Apply ``n`` rounds of coin-then-shift.

    A non-unitary ``coin`` (for instance the lossy effective coin of the loop
    hardware) leaves a sub-normalized state whose squared norm is the survival
    probability.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    coin_t = np.asarray(coin, dtype=np.complex128).T
    L = state.amplitudes.shape[0]
    buf = state.padded(state.x_min - n, state.x_min + L - 1 + n)
    # in-place on the padded window; the support never reaches the edge
    for _ in range(n):
        buf = buf @ coin_t
        buf[1:, H] = buf[:-1, H].copy()
        buf[0, H] = 0
        buf[:-1, V] = buf[1:, V].copy()
        buf[-1, V] = 0
    return WalkState(buf, state.x_min - n, state.step_count + n)


def position_distribution(state: WalkState, renormalize: bool = False) -> Distribution:
    """Marginal position probabilities ``p(x) = sum_c |amp(x, c)|^2``.

    With ``renormalize`` the probabilities are divided by the surviving norm,
    which models post-selection on detection.
    """
    probs = np.sum(np.abs(state.amplitudes) ** 2, axis=1)
    if renormalize:
        total = probs.sum()
        if total <= 0:
            raise ValueError("cannot renormalize a zero-norm state")
        probs = probs / total
    return Distribution(state.positions, probs)


def moments(dist: Distribution) -> tuple[float, float]:
    """Mean position and standard deviation of a normalized distribution."""
    if len(dist) == 0:
        raise ValueError("empty distribution")
    x = dist.positions.astype(float)
    p = dist.probabilities
    mean = float(np.dot(x, p))
    var = float(np.dot(x * x, p)) - mean * mean
    return mean, float(np.sqrt(max(var, 0.0)))


def fidelity(a: WalkState, b: WalkState) -> float:
    """``|<a|b>|^2`` for two normalized states."""
    lo = min(a.x_min, b.x_min)
    hi = max(a.x_min + a.amplitudes.shape[0], b.x_min + b.amplitudes.shape[0]) - 1
    va = a.padded(lo, hi).reshape(-1)
    vb = b.padded(lo, hi).reshape(-1)
    return float(min(abs(np.vdot(va, vb)) ** 2, 1.0))


def dephased_evolve(state: WalkState, coin, n: int, p: float, mode: str = "density",
                    trajectories: int = 1000, seed=None) -> Distribution:
    """Walk evolution with a coin-dephasing channel, returning the renormalized
    position distribution.

    At the start of every step the coin is projectively measured in the
    ``{H, V}`` basis with probability ``p``; then the coin is tossed and the
    walker shifted. ``p = 0`` is the coherent walk, ``p = 1`` the classical
    random walk of :func:`qwalk.classical.classical_evolve` (the initial coin
    is measured before the first toss, so the chain starts from ``|a_H|^2,
    |a_V|^2``).

    ``mode="density"`` propagates the density matrix exactly.
    ``mode="trajectory"`` averages ``trajectories`` stochastic pure-state
    unravelings drawn from ``seed``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dephasing strength must lie in [0, 1], got {p}")
    if n < 0:
        raise ValueError("n must be non-negative")
    coin = np.asarray(coin, dtype=np.complex128)
    if mode == "density":
        return _dephase_density(state, coin, n, p)
    if mode == "trajectory":
        return _dephase_trajectories(state, coin, n, p, trajectories, seed)
    raise ValueError(f"unknown dephasing mode {mode!r}")


def _shift_axis(a, shift, axis):
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if shift > 0:
        src[axis], dst[axis] = slice(None, -shift), slice(shift, None)
    else:
        src[axis], dst[axis] = slice(-shift, None), slice(None, shift)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _dephase_density(state, coin, n, p):
    L = state.amplitudes.shape[0]
    x_min = state.x_min - n
    psi = state.padded(x_min, state.x_min + L - 1 + n)
    rho = np.einsum("ia,jb->iajb", psi, psi.conj())
    moves = (1, -1)
    for _ in range(n):
        rho[:, H, :, V] *= 1.0 - p
        rho[:, V, :, H] *= 1.0 - p
        rho = np.einsum("ab,ibjd,cd->iajc", coin, rho, coin.conj())
        new = np.empty_like(rho)
        for c in (H, V):
            for d in (H, V):
                block = _shift_axis(rho[:, c, :, d], moves[c], 0)
                new[:, c, :, d] = _shift_axis(block, moves[d], 1)
        rho = new
    diag = np.einsum("icic->i", rho).real
    positions = np.arange(diag.size, dtype=np.int64) + x_min
    return Distribution(positions, np.clip(diag, 0.0, None)).renormalized()


def _dephase_trajectories(state, coin, n, p, trajectories, seed):
    if trajectories < 1:
        raise ValueError("need at least one trajectory")
    rng = np.random.default_rng(seed)
    L = state.amplitudes.shape[0]
    x_min = state.x_min - n
    psi0 = state.padded(x_min, state.x_min + L - 1 + n)
    psi = np.broadcast_to(psi0, (trajectories,) + psi0.shape).copy()
    coin_t = coin.T
    for _ in range(n):
        measure = rng.random(trajectories) < p
        w = np.sum(np.abs(psi) ** 2, axis=1)  # (T, 2) weight per coin label
        total = w.sum(axis=1)
        prob_h = np.divide(w[:, H], total, out=np.zeros_like(total), where=total > 0)
        outcome_h = rng.random(trajectories) < prob_h
        for mask, keep, drop in ((measure & outcome_h, H, V), (measure & ~outcome_h, V, H)):
            if not mask.any():
                continue
            wk = w[mask, keep]
            scale = np.sqrt(np.divide(total[mask], wk, out=np.zeros_like(wk), where=wk > 0))
            psi[mask, :, keep] *= scale[:, None]
            psi[mask, :, drop] = 0
        psi = psi @ coin_t
        psi[:, 1:, H] = psi[:, :-1, H].copy()
        psi[:, 0, H] = 0
        psi[:, :-1, V] = psi[:, 1:, V].copy()
        psi[:, -1, V] = 0
    probs = np.sum(np.abs(psi) ** 2, axis=2).mean(axis=0)
    positions = np.arange(probs.size, dtype=np.int64) + x_min
    return Distribution(positions, probs).renormalized()
