"""
Fiber-loop hardware model.

Covers the effective (lossy, slightly rotated) coin of the time-multiplexed
loop, the mapping from walker position to detector arrival time, time-bin
aliasing checks, and a simple photon-budget estimate.

Angles are in radians, times in nanoseconds. Efficiency ratios ``eps_*`` act
as Jones-matrix amplitude factors on the ``V`` polarization.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .walk import WalkState, circular_state, evolve, make_coin, position_distribution

__all__ = [
    "HardwareParams",
    "TimeBin",
    "Alias",
    "PhotonBudget",
    "loss_matrix",
    "rotation",
    "effective_coin",
    "lossy_evolve",
    "arrival_time",
    "legal_bins",
    "detect_aliasing",
    "photon_budget",
    "weakest_bin_probability",
    "feasible_steps",
    "ALIAS_TOL_NS",
    "DEFAULT_NOISE_FLOOR",
]

ALIAS_TOL_NS = 0.1
# mean dark counts per time bin per pulse: a ~500 Hz APD over a 5 ns bin
DEFAULT_NOISE_FLOOR = 2.5e-6


@dataclass(frozen=True)
class HardwareParams:
    """Constants of the loop architecture (defaults: the measured setup)."""

    eps_bs: float = 0.99
    eps_loop: float = 0.96
    eps_hwp: float = 0.98
    phi: float = math.radians(1.4)
    theta: float = math.radians(22.5)
    eta_setup: float = 0.18
    eta_det: float = 0.24
    t_H: float = 40.0
    t_V: float = 45.0
    rep_period: float = 1000.0
    out_couple_prob: float = 0.5

    def __post_init__(self):
        for name in ("eps_bs", "eps_loop", "eps_hwp", "eta_setup", "eta_det", "out_couple_prob"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not 0.0 < self.t_H < self.t_V:
            raise ValueError(f"need 0 < t_H < t_V, got t_H={self.t_H}, t_V={self.t_V}")
        if not self.rep_period > self.t_V:
            raise ValueError(f"rep_period must exceed t_V, got {self.rep_period}")
        for name in ("phi", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def ideal(cls, theta: float = math.radians(22.5), **overrides) -> "HardwareParams":
        """Lossless, rotation-free loop at HWP angle ``theta``."""
        base = dict(eps_bs=1.0, eps_loop=1.0, eps_hwp=1.0, phi=0.0, theta=theta)
        base.update(overrides)
        return cls(**base)

    @property
    def bin_pitch(self) -> float:
        return self.t_V - self.t_H

    @property
    def lumped_eps(self) -> float:
        return self.eps_bs * self.eps_loop * self.eps_hwp

    def replace(self, **changes) -> "HardwareParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareParams":
        """Build from a flat mapping; missing keys keep their defaults."""
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown hardware parameter(s): {', '.join(unknown)}")
        values = {}
        for key, value in data.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"parameter {key} must be a number, got {value!r}")
            values[key] = float(value)
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "HardwareParams":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a flat JSON object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def default(cls) -> "HardwareParams":
        """Parameters from the packaged default file."""
        text = resources.files("qwalk").joinpath("data/default_params.json").read_text()
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, order=True)
class TimeBin:
    step: int
    position: int
    arrival_ns: float = dataclasses.field(compare=False)

    def __post_init__(self):
        _check_bin(self.step, self.position)


class Alias(NamedTuple):
    """Two time bins whose arrival times coincide.

    ``repetition_shift`` is how many source pulses later ``second`` was
    emitted; 0 means both belong to the same pulse.
    """

    first: TimeBin
    second: TimeBin
    repetition_shift: int = 0


@dataclass(frozen=True)
class PhotonBudget:
    mean_n_per_step: list[float]

    def __getitem__(self, k: int) -> float:
        return self.mean_n_per_step[k]

    def __len__(self) -> int:
        return len(self.mean_n_per_step)


def loss_matrix(eps: float) -> np.ndarray:
    """Differential loss ``diag(1, eps)``."""
    return np.array([[1.0, 0.0], [0.0, eps]], dtype=np.complex128)


def rotation(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [-s, c]], dtype=np.complex128)


def effective_coin(params: HardwareParams) -> np.ndarray:
    """Jones matrix of one loop round trip.

    ``L(eps_loop) R(phi) R(-theta) L(-eps_hwp) R(theta) L(eps_bs)``. The HWP
    is sandwiched as ``R(-theta) . R(theta)`` so that the lossless,
    rotation-free limit is exactly :func:`qwalk.walk.make_coin` (the opposite
    order reproduces it with ``theta -> -theta``).
    """
    th = params.theta
    hwp = rotation(-th) @ loss_matrix(-params.eps_hwp) @ rotation(th)
    return loss_matrix(params.eps_loop) @ rotation(params.phi) @ hwp @ loss_matrix(params.eps_bs)


def lossy_evolve(state: WalkState, params: HardwareParams, n: int) -> WalkState:
    """Evolve with the effective coin; the squared norm is the differential-loss survival."""
    return evolve(state, effective_coin(params), n)


def _check_bin(step: int, position: int) -> None:
    if step < 1:
        raise ValueError(f"time bins start at step 1, got step {step}")
    if abs(position) > step or (step - position) % 2:
        raise ValueError(f"position {position} is not reachable after {step} steps")


def arrival_time(step: int, position: int, params: HardwareParams | None = None) -> TimeBin:
    """Arrival time of the walker leaving the loop after ``step`` steps at ``position``.

    Reaching ``position`` takes ``(step + position)/2`` fast (H) and
    ``(step - position)/2`` slow (V) round trips.
    """
    _check_bin(step, position)
    params = params or HardwareParams()
    n_v = (step - position) // 2
    t = (step - n_v) * params.t_H + n_v * params.t_V
    return TimeBin(step, position, t)


def legal_bins(max_step: int, params: HardwareParams | None = None) -> list[TimeBin]:
    params = params or HardwareParams()
    return [arrival_time(n, x, params) for n in range(1, max_step + 1) for x in range(-n, n + 1, 2)]


def detect_aliasing(max_step: int, params: HardwareParams | None = None,
                    tol: float = ALIAS_TOL_NS) -> list[Alias]:
    """Pairs of time bins from different steps that arrive within ``tol`` ns.

    When the slowest bin at ``max_step`` reaches the next source pulse, bins
    are also compared across repetitions.
    """
    if max_step < 1:
        raise ValueError("max_step must be at least 1")
    params = params or HardwareParams()
    bins = sorted(legal_bins(max_step, params), key=lambda b: b.arrival_ns)
    times = np.array([b.arrival_ns for b in bins])
    out = []
    for i, b in enumerate(bins):
        j = i + 1
        while j < len(bins) and times[j] - times[i] <= tol:
            if bins[j].step != b.step:
                first, second = sorted((b, bins[j]))
                out.append(Alias(first, second, 0))
            j += 1
    if max_step * params.t_V >= params.rep_period:
        latest = times[-1]
        m = 1
        while m * params.rep_period - tol <= latest:
            shifted = times + m * params.rep_period
            for i, t in enumerate(shifted):
                lo = np.searchsorted(times, t - tol, side="left")
                hi = np.searchsorted(times, t + tol, side="right")
                for j in range(lo, hi):
                    out.append(Alias(bins[j], bins[i], m))
            m += 1
    return sorted(out, key=lambda a: (a.first.arrival_ns, a.first, a.second))


def photon_budget(mean_n_initial: float, params: HardwareParams, n: int) -> PhotonBudget:
    """Expected mean photon number reaching the detector after each step ``0..n``.

    Modelled as ``mean_n_initial * eta_setup**k * out_couple_prob``: the loop
    losses compound every round trip and the out-coupling is applied once.
    """
    if not mean_n_initial > 0:
        raise ValueError("mean_n_initial must be positive")
    if n < 0:
        raise ValueError("n must be non-negative")
    k = np.arange(n + 1)
    values = mean_n_initial * params.eta_setup ** k * params.out_couple_prob
    return PhotonBudget([float(v) for v in values])


def weakest_bin_probability(dist, bulk: float = 0.99) -> float:
    """Smallest bin probability among the most likely bins that jointly carry ``bulk`` of the mass.

    Exponentially small tails beyond the ballistic peaks are excluded; those
    bins are never resolvable and would pin the answer to zero.
    """
    p = np.sort(dist.probabilities[dist.probabilities > 0])[::-1]
    if p.size == 0:
        return 0.0
    k = int(np.searchsorted(np.cumsum(p), bulk * p.sum())) + 1
    return float(p[:min(k, p.size)].min())


def feasible_steps(params: HardwareParams, noise_floor: float = DEFAULT_NOISE_FLOOR,
                   min_snr: float = 1.0, mean_n_initial: float = 8.0,
                   initial: WalkState | None = None, max_steps: int = 1000) -> float:
    """Largest step count whose weakest resolvable bin still clears ``min_snr``.

    The expected clicks in a bin at step ``n`` is
    ``photon_budget(n) * eta_det * p_weak(n)``, with ``p_weak`` from the ideal
    walk (see :func:`weakest_bin_probability`); it is compared against
    ``noise_floor`` mean dark counts per bin per pulse. Returns ``math.inf``
    when there is no noise, and at most ``max_steps`` otherwise.
    """
    if not min_snr > 0:
        raise ValueError("min_snr must be positive")
    if noise_floor < 0:
        raise ValueError("noise_floor must be non-negative")
    if noise_floor == 0:
        return math.inf
    state = circular_state() if initial is None else initial
    coin = make_coin(params.theta)
    budget = photon_budget(mean_n_initial, params, max_steps).mean_n_per_step
    best = 0
    for n in range(1, max_steps + 1):
        # p_weak <= 1 and the budget never grows, so no later step can pass
        signal_cap = budget[n] * params.eta_det
        if signal_cap / noise_floor < min_snr:
            break
        state = evolve(state, coin, 1)
        clicks = signal_cap * weakest_bin_probability(position_distribution(state, renormalize=True))
        if clicks / noise_floor >= min_snr:
            best = n
    return best
