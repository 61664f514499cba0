"""Probability distributions over walker positions, with CSV/JSON round-trip."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = ["Distribution", "total_variation"]


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probabilities on integer positions (or time bins).

    ``sigma`` holds an optional per-bin statistical standard error and
    ``n_samples`` the number of counts the estimate was built from, when the
    distribution came out of a finite sample.
    """

    positions: np.ndarray
    probabilities: np.ndarray
    sigma: np.ndarray | None = None
    n_samples: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        prob = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if pos.shape != prob.shape:
            raise ValueError("positions and probabilities differ in length")
        if np.unique(pos).size != pos.size:
            raise ValueError("duplicate positions")
        if np.any(prob < 0):
            raise ValueError("negative probability")
        order = np.argsort(pos, kind="stable")
        object.__setattr__(self, "positions", pos[order])
        object.__setattr__(self, "probabilities", prob[order])
        if self.sigma is not None:
            sig = np.asarray(self.sigma, dtype=float).reshape(-1)
            if sig.shape != pos.shape:
                raise ValueError("sigma and positions differ in length")
            object.__setattr__(self, "sigma", sig[order])

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float], sigma: Mapping[int, float] | None = None,
                     n_samples: int | None = None) -> "Distribution":
        keys = sorted(probs)
        sig = None if sigma is None else [sigma[k] for k in keys]
        return cls(np.array(keys, dtype=np.int64), np.array([probs[k] for k in keys], dtype=float),
                   sig, n_samples)

    def __len__(self) -> int:
        return int(self.positions.size)

    def as_dict(self, nonzero: bool = False) -> dict[int, float]:
        return {int(x): float(p) for x, p in zip(self.positions, self.probabilities)
                if not nonzero or p > 0}

    def prob(self, x: int) -> float:
        idx = np.searchsorted(self.positions, x)
        if idx < self.positions.size and self.positions[idx] == x:
            return float(self.probabilities[idx])
        return 0.0

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def renormalized(self) -> "Distribution":
        total = self.total
        if total <= 0:
            raise ValueError("cannot renormalize a zero-mass distribution")
        sig = None if self.sigma is None else self.sigma / total
        return Distribution(self.positions, self.probabilities / total, sig, self.n_samples)

    def on_support(self, positions) -> "Distribution":
        """Return the distribution re-indexed onto ``positions`` (missing bins get 0)."""
        positions = np.asarray(positions, dtype=np.int64)
        probs = np.array([self.prob(int(x)) for x in positions])
        sig = None
        if self.sigma is not None:
            lookup = dict(zip(self.positions.tolist(), self.sigma.tolist()))
            sig = np.array([lookup.get(int(x), 0.0) for x in positions])
        return Distribution(positions, probs, sig, self.n_samples)

    # -- serialization -------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["position", "probability", "sigma"])
        for i, x in enumerate(self.positions):
            sig = "" if self.sigma is None else repr(float(self.sigma[i]))
            writer.writerow([int(x), repr(float(self.probabilities[i])), sig])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Distribution":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["position", "probability", "sigma"]:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        pos, prob, sig = [], [], []
        for row in reader:
            pos.append(int(row["position"]))
            prob.append(float(row["probability"]))
            sig.append(None if row["sigma"] == "" else float(row["sigma"]))
        if any(s is None for s in sig):
            if not all(s is None for s in sig):
                raise ValueError("sigma column must be all empty or all filled")
            return cls(np.array(pos, dtype=np.int64), np.array(prob))
        return cls(np.array(pos, dtype=np.int64), np.array(prob), np.array(sig))

    def to_json_obj(self) -> dict:
        obj = {
            "positions": self.positions.tolist(),
            "probabilities": self.probabilities.tolist(),
            "sigma": None if self.sigma is None else self.sigma.tolist(),
        }
        if self.n_samples is not None:
            obj["n_samples"] = int(self.n_samples)
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "Distribution":
        try:
            pos = obj["positions"]
            prob = obj["probabilities"]
        except (KeyError, TypeError) as exc:
            raise ValueError("distribution JSON needs 'positions' and 'probabilities'") from exc
        sig = obj.get("sigma")
        n = obj.get("n_samples")
        return cls(np.array(pos, dtype=np.int64), np.array(prob, dtype=float),
                   None if sig is None else np.array(sig, dtype=float),
                   None if n is None else int(n))

    @classmethod
    def from_json(cls, text: str) -> "Distribution":
        return cls.from_json_obj(json.loads(text))


def total_variation(a: Distribution, b: Distribution) -> float:
    """Total-variation distance, 0.5 * sum |p_a - p_b| over the union of supports."""
    support = np.union1d(a.positions, b.positions)
    pa = a.on_support(support).probabilities
    pb = b.on_support(support).probabilities
    return 0.5 * float(np.abs(pa - pb).sum())
