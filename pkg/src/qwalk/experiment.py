"""
Click-level emulation of the attenuated-laser loop experiment.

Each run injects a Poisson number of photons. A photon leaves the loop after
step ``k`` with probability ``q (1 - q)^(k-1)`` (``q`` the out-coupling
probability), survives the loop and detector with ``eta_setup**k * eta_det``
and lands in a position bin drawn from the post-selected lossy walk at step
``k``. The APD adds Gaussian timing jitter, dark counts and a dead time.

Photons are independent, so the detected photons of a given step form a
Poisson process over runs (Poisson thinning). The emulator draws their total
number directly and scatters them over run indices, which keeps the cost
proportional to the number of clicks instead of the number of runs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .distribution import Distribution
from .hardware import HardwareParams, TimeBin, arrival_time, legal_bins, lossy_evolve
from .walk import WalkState, position_distribution

__all__ = [
    "DetectorModel",
    "ClickRecord",
    "ClickLog",
    "run_experiment",
    "estimate_distribution",
    "model_distribution",
    "exit_probability",
    "expected_clicks_per_run",
    "runs_for_clicks",
    "step_gate",
    "spread_standard_error",
]

# jitter tails beyond this many sigma are not simulated
_JITTER_REACH = 8.0


@dataclass(frozen=True)
class DetectorModel:
    """Avalanche photodiode: efficiency, Gaussian jitter (ns), dead time (ns),
    dark counts per ns.

    Dead time and dark rate are not characterized for the measured setup; the
    defaults (50 ns, no dark counts) are placeholders.
    """

    efficiency: float = 0.24
    jitter_sigma: float = 0.5
    dead_time: float = 50.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if self.jitter_sigma < 0 or self.dead_time < 0 or self.dark_rate < 0:
            raise ValueError("jitter_sigma, dead_time and dark_rate must be non-negative")

    @classmethod
    def ideal(cls) -> "DetectorModel":
        return cls(efficiency=1.0, jitter_sigma=0.0, dead_time=0.0, dark_rate=0.0)


@dataclass(frozen=True)
class ClickRecord:
    run_index: int
    raw_time_ns: float
    resolved_bin: TimeBin | None
    is_dark: bool


@dataclass(frozen=True, eq=False)
class ClickLog:
    """Column store of clicks sorted by ``(run, raw_time)``.

    ``step == 0`` marks a click that does not fall within half a bin pitch of
    any legal time bin. Iterating yields :class:`ClickRecord` objects.
    """

    run: np.ndarray
    raw_time: np.ndarray
    step: np.ndarray
    position: np.ndarray
    is_dark: np.ndarray
    params: HardwareParams = HardwareParams()

    def __len__(self) -> int:
        return int(self.run.size)

    def __getitem__(self, i: int) -> ClickRecord:
        step = int(self.step[i])
        tb = None
        if step:
            tb = arrival_time(step, int(self.position[i]), self.params)
        return ClickRecord(int(self.run[i]), float(self.raw_time[i]), tb, bool(self.is_dark[i]))

    def __iter__(self) -> Iterator[ClickRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClickLog):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("run", "raw_time", "step", "position", "is_dark"))

    @property
    def resolved(self) -> np.ndarray:
        return self.step > 0

    @classmethod
    def empty(cls, params: HardwareParams | None = None) -> "ClickLog":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, np.zeros(0), z, z, np.zeros(0, dtype=bool), params or HardwareParams())

    @classmethod
    def concatenate(cls, logs, run_offsets) -> "ClickLog":
        """Join logs from consecutive series, shifting run indices by ``run_offsets``."""
        logs = list(logs)
        if not logs:
            return cls.empty()
        return cls(
            np.concatenate([log.run + off for log, off in zip(logs, run_offsets)]),
            np.concatenate([log.raw_time for log in logs]),
            np.concatenate([log.step for log in logs]),
            np.concatenate([log.position for log in logs]),
            np.concatenate([log.is_dark for log in logs]),
            logs[0].params,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["run", "raw_time_ns", "step", "position", "is_dark"])
        for i in range(len(self)):
            s = int(self.step[i])
            writer.writerow([
                int(self.run[i]),
                repr(float(self.raw_time[i])),
                s if s else "",
                int(self.position[i]) if s else "",
                int(bool(self.is_dark[i])),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, params: HardwareParams | None = None) -> "ClickLog":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["run", "raw_time_ns", "step", "position", "is_dark"]:
            raise ValueError(f"unexpected click-log header {reader.fieldnames}")
        run, t, step, pos, dark = [], [], [], [], []
        for row in reader:
            run.append(int(row["run"]))
            t.append(float(row["raw_time_ns"]))
            step.append(int(row["step"]) if row["step"] else 0)
            pos.append(int(row["position"]) if row["position"] else 0)
            dark.append(row["is_dark"] == "1")
        return cls(np.array(run, dtype=np.int64), np.array(t, dtype=float),
                   np.array(step, dtype=np.int64), np.array(pos, dtype=np.int64),
                   np.array(dark, dtype=bool), params or HardwareParams())


def exit_probability(params: HardwareParams, step: int) -> float:
    q = params.out_couple_prob
    return q * (1.0 - q) ** (step - 1)


def expected_clicks_per_run(params: HardwareParams, det: DetectorModel, mean_n: float,
                            step: int) -> float:
    """Mean photon clicks per run at ``step``, before dead time."""
    return mean_n * exit_probability(params, step) * params.eta_setup ** step * det.efficiency


def runs_for_clicks(target: float, step: int, params: HardwareParams, det: DetectorModel,
                    mean_n: float) -> int:
    """Number of runs expected to yield ``target`` photon clicks at ``step``."""
    rate = expected_clicks_per_run(params, det, mean_n, step)
    if rate <= 0:
        raise ValueError("no photon clicks expected at this step")
    return max(1, math.ceil(target / rate))


def step_gate(step: int, params: HardwareParams) -> tuple[float, float]:
    """Detector gate covering exactly the time bins of ``step``."""
    half = params.bin_pitch / 2
    return step * params.t_H - half, step * params.t_V + half


def model_distribution(initial: WalkState, params: HardwareParams, step: int) -> Distribution:
    """Post-selected position distribution of the lossy walk at ``step``."""
    d = position_distribution(lossy_evolve(initial, params, step), renormalize=True)
    return d.on_support(np.arange(-step, step + 1, 2))


def run_experiment(initial: WalkState, params: HardwareParams, det: DetectorModel, mean_n: float,
                   runs: int, max_step: int, seed=None,
                   gate: tuple[float, float] | None = None) -> ClickLog:
    """Emulate ``runs`` repetitions of the experiment.

    Parameters
    ----------
    initial : WalkState
        Prepared coin state at the origin.
    mean_n : float
        Mean photon number per pulse (Poisson statistics).
    max_step : int
        Photons that would exit after more than ``max_step`` steps are gated
        out.
    gate : (float, float), optional
        Detector gate in ns; only light arriving inside it can click. Defaults
        to the full record window ``(0, max_step * t_V + pitch/2]``.

    Returns
    -------
    ClickLog
        Clicks that survived dead time, sorted by ``(run, raw_time)``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if max_step < 1:
        raise ValueError("max_step must be at least 1")
    if mean_n < 0:
        raise ValueError("mean_n must be non-negative")
    rng = np.random.default_rng(seed)
    half = params.bin_pitch / 2
    lo, hi = (0.0, max_step * params.t_V + half) if gate is None else gate
    if not hi > lo:
        raise ValueError("empty detector gate")
    margin = half + _JITTER_REACH * det.jitter_sigma

    runs_parts, times_parts, dark_parts = [], [], []
    state = initial
    for k in range(1, max_step + 1):
        state = lossy_evolve(state, params, 1)
        if k * params.t_V + margin < lo or k * params.t_H - margin > hi:
            continue
        mean_clicks = runs * expected_clicks_per_run(params, det, mean_n, k)
        count = rng.poisson(mean_clicks) if mean_clicks > 0 else 0
        if count == 0:
            continue
        dist = position_distribution(state, renormalize=True).on_support(np.arange(-k, k + 1, 2))
        x = rng.choice(dist.positions, size=count, p=dist.probabilities)
        t = k * params.t_H + (k - x) // 2 * params.bin_pitch
        if det.jitter_sigma > 0:
            t = t + rng.normal(0.0, det.jitter_sigma, size=count)
        runs_parts.append(rng.integers(0, runs, size=count))
        times_parts.append(t.astype(float))
        dark_parts.append(np.zeros(count, dtype=bool))

    mean_dark = runs * det.dark_rate * (hi - lo)
    n_dark = rng.poisson(mean_dark) if mean_dark > 0 else 0
    if n_dark:
        runs_parts.append(rng.integers(0, runs, size=n_dark))
        times_parts.append(rng.uniform(lo, hi, size=n_dark))
        dark_parts.append(np.ones(n_dark, dtype=bool))

    if not runs_parts:
        return ClickLog.empty(params)
    run = np.concatenate(runs_parts).astype(np.int64)
    t = np.concatenate(times_parts)
    dark = np.concatenate(dark_parts)
    inside = (t > lo) & (t <= hi)
    run, t, dark = run[inside], t[inside], dark[inside]
    order = np.lexsort((t, run))
    run, t, dark = run[order], t[order], dark[order]
    keep = _apply_dead_time(run, t, det.dead_time)
    run, t, dark = run[keep], t[keep], dark[keep]
    step, pos = _resolve(t, max_step, params)
    return ClickLog(run, t, step, pos, dark, params)


def _apply_dead_time(run: np.ndarray, t: np.ndarray, dead_time: float) -> np.ndarray:
    keep = np.ones(run.size, dtype=bool)
    if dead_time <= 0 or run.size < 2:
        return keep
    shared = np.flatnonzero(run[1:] == run[:-1]) + 1
    # only runs holding more than one candidate click need the sequential pass
    for start in np.unique(np.searchsorted(run, run[shared], side="left")):
        stop = np.searchsorted(run, run[start], side="right")
        last = t[start]
        for i in range(start + 1, stop):
            if t[i] - last < dead_time:
                keep[i] = False
            else:
                last = t[i]
    return keep


def _resolve(t: np.ndarray, max_step: int, params: HardwareParams):
    # aliased bins share a time; the earlier step wins
    bins = sorted(legal_bins(max_step, params), key=lambda b: (b.arrival_ns, b.step))
    bt = np.array([b.arrival_ns for b in bins])
    bs = np.array([b.step for b in bins], dtype=np.int64)
    bx = np.array([b.position for b in bins], dtype=np.int64)
    idx = np.clip(np.searchsorted(bt, t), 1, bt.size - 1)
    left = idx - 1
    idx = np.where(np.abs(t - bt[left]) <= np.abs(bt[idx] - t), left, idx)
    # step back onto the first of a run of equal times
    idx = np.searchsorted(bt, bt[idx], side="left")
    ok = np.abs(t - bt[idx]) <= params.bin_pitch / 2
    step = np.where(ok, bs[idx], 0)
    pos = np.where(ok, bx[idx], 0)
    return step.astype(np.int64), pos.astype(np.int64)


def estimate_distribution(clicks: ClickLog, step: int) -> Distribution:
    """Normalized histogram of resolved clicks at ``step`` with binomial error bars.

    Dark counts that resolve into a bin are indistinguishable from photons
    and are counted.
    """
    sel = clicks.step == step
    n = int(sel.sum())
    if n == 0:
        raise ValueError(f"no resolved clicks at step {step}")
    positions = np.arange(-step, step + 1, 2, dtype=np.int64)
    counts = np.bincount((clicks.position[sel] + step) // 2, minlength=step + 1)
    p = counts / n
    return Distribution(positions, p, np.sqrt(p * (1 - p) / n), n)


def spread_standard_error(dist: Distribution, n_samples: int) -> float:
    """Delta-method standard error of the sample standard deviation.

    ``se(sigma_hat) ~ sqrt(mu4 - sigma^4) / (2 sigma sqrt(N))`` with ``mu4``
    the fourth central moment of ``dist``.
    """
    x = dist.positions.astype(float)
    p = dist.probabilities / dist.probabilities.sum()
    mean = np.dot(x, p)
    var = np.dot((x - mean) ** 2, p)
    mu4 = np.dot((x - mean) ** 4, p)
    if var <= 0:
        return 0.0
    return float(np.sqrt(max(mu4 - var * var, 0.0)) / (2 * np.sqrt(var) * np.sqrt(n_samples)))
