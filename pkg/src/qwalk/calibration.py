"""
Fitting the loop imperfection model to measured position histograms.

The model distribution for a parameter vector is the post-selected lossy walk
(optionally with coin dephasing) at every observed step. Two objectives are
available:

``chi_square``
    ``sum (p_obs - p_model)^2 / sigma^2`` with ``sigma`` the per-bin error of
    the observation, floored at ``1/N``.
``multinomial_nll``
    multinomial negative log-likelihood of the observed counts, offset by its
    value at the observed frequencies so that it is non-negative and vanishes
    for a perfect match.

``lumped_eps`` stands for the product ``eps_bs * eps_loop * eps_hwp``. When it
is free, each factor is set to ``lumped_eps ** w_i`` where ``w_i`` is that
factor's share of ``log(product)`` in the fixed parameters (equal shares when
the fixed factors are all 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .distribution import Distribution
from .hardware import HardwareParams, effective_coin
from .walk import WalkState, dephased_evolve, evolve, position_distribution, prepare_state_from_ratio

__all__ = [
    "PARAM_NAMES",
    "DEFAULT_FREE",
    "BOUNDS",
    "FitProblem",
    "FitResult",
    "IdentifiabilityReport",
    "model_distributions",
    "objective_value",
    "nelder_mead",
    "fit",
    "sensitivity_matrix",
    "identifiability_report",
    "synthesize_observed",
]

_DEG = math.pi / 180.0
_EPS_NAMES = ("eps_bs", "eps_loop", "eps_hwp")

PARAM_NAMES = ("eps_bs", "eps_loop", "eps_hwp", "lumped_eps", "phi", "theta",
               "a_H_ratio", "Phi", "dephasing")
DEFAULT_FREE = ("phi", "lumped_eps", "a_H_ratio")

BOUNDS = {
    "eps_bs": (1e-6, 1.0),
    "eps_loop": (1e-6, 1.0),
    "eps_hwp": (1e-6, 1.0),
    "lumped_eps": (1e-6, 1.0),
    "phi": (-10 * _DEG, 10 * _DEG),
    "theta": (-90 * _DEG, 90 * _DEG),
    "a_H_ratio": (1e-6, 1e6),
    "Phi": (-2 * math.pi, 2 * math.pi),
    "dephasing": (0.0, 1.0),
}

# initial simplex edge per parameter
_SIMPLEX_STEP = {
    "eps_bs": 0.02, "eps_loop": 0.02, "eps_hwp": 0.02, "lumped_eps": 0.02,
    "phi": 1.0 * _DEG, "theta": 1.0 * _DEG, "a_H_ratio": 0.05, "Phi": 0.1,
    "dephasing": 0.05,
}

_ANGLES = ("phi", "theta", "Phi")
OBJECTIVES = ("chi_square", "multinomial_nll")


@dataclass(frozen=True)
class FitProblem:
    """Observed histograms plus the choice of free parameters.

    ``observed`` maps step number to a normalized :class:`Distribution`.
    Parameters that are not free take their values from ``fixed`` (hardware)
    and ``a_H_ratio`` / ``Phi`` / ``dephasing`` (initial state and channel).
    """

    observed: Mapping[int, Distribution]
    free_params: tuple[str, ...] = DEFAULT_FREE
    fixed: HardwareParams = field(default_factory=HardwareParams)
    objective: str = "chi_square"
    a_H_ratio: float = 1.0
    Phi: float = math.pi / 2
    dephasing: float = 0.0

    def __post_init__(self):
        if not self.observed:
            raise ValueError("no observed distributions")
        object.__setattr__(self, "observed", {int(k): v for k, v in self.observed.items()})
        if min(self.observed) < 1:
            raise ValueError("observed steps must be positive")
        for step, dist in self.observed.items():
            if abs(dist.total - 1.0) > 1e-6:
                raise ValueError(f"observed distribution at step {step} is not normalized")
        free = tuple(self.free_params)
        object.__setattr__(self, "free_params", free)
        if not free:
            raise ValueError("free_params is empty")
        unknown = [p for p in free if p not in PARAM_NAMES]
        if unknown:
            raise ValueError(f"unknown free parameter(s): {unknown}")
        if len(set(free)) != len(free):
            raise ValueError("duplicate free parameters")
        if "lumped_eps" in free and any(p in free for p in _EPS_NAMES):
            raise ValueError("lumped_eps cannot be free together with individual eps parameters")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.objective == "multinomial_nll":
            missing = [s for s, d in self.observed.items() if not d.n_samples]
            if missing:
                raise ValueError(f"multinomial_nll needs n_samples (missing for steps {missing})")

    @property
    def steps(self) -> list[int]:
        return sorted(self.observed)

    def current_values(self) -> dict[str, float]:
        values = {name: getattr(self.fixed, name) for name in ("eps_bs", "eps_loop", "eps_hwp", "phi", "theta")}
        values.update(lumped_eps=self.fixed.lumped_eps, a_H_ratio=self.a_H_ratio, Phi=self.Phi,
                      dephasing=self.dephasing)
        return values

    def start_vector(self) -> np.ndarray:
        values = self.current_values()
        return np.array([values[p] for p in self.free_params], dtype=float)

    def lower(self) -> np.ndarray:
        return np.array([BOUNDS[p][0] for p in self.free_params])

    def upper(self) -> np.ndarray:
        return np.array([BOUNDS[p][1] for p in self.free_params])

    def in_bounds(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower()) and np.all(x <= self.upper()))

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower(), self.upper())

    def resolve(self, x) -> tuple[HardwareParams, float, float, float]:
        """Hardware parameters, intensity ratio, phase and dephasing for vector ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.free_params),):
            raise ValueError(f"expected {len(self.free_params)} parameters, got shape {x.shape}")
        cand = dict(zip(self.free_params, x.tolist()))
        hw = {}
        if "lumped_eps" in cand:
            for name, weight in zip(_EPS_NAMES, _lumped_weights(self.fixed)):
                hw[name] = cand["lumped_eps"] ** weight
        for name in ("eps_bs", "eps_loop", "eps_hwp", "phi", "theta"):
            if name in cand:
                hw[name] = cand[name]
        params = self.fixed.replace(**hw) if hw else self.fixed
        return (params, cand.get("a_H_ratio", self.a_H_ratio), cand.get("Phi", self.Phi),
                cand.get("dephasing", self.dephasing))

    # -- JSON -----------------------------------------------------------

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> tuple["FitProblem", np.ndarray | None]:
        """Parse a problem document; also returns its ``initial_guess`` if present."""
        if not isinstance(obj, Mapping) or "observed" not in obj:
            raise ValueError("fit problem needs an 'observed' object keyed by step")
        observed = {}
        for key, dist in obj["observed"].items():
            try:
                step = int(key)
            except ValueError as exc:
                raise ValueError(f"observed key {key!r} is not a step number") from exc
            observed[step] = Distribution.from_json_obj(dist)
        fixed = HardwareParams.from_dict(obj.get("fixed", {}))
        init = obj.get("initial_state", {})
        problem = cls(
            observed=observed,
            free_params=tuple(obj.get("free_params", DEFAULT_FREE)),
            fixed=fixed,
            objective=obj.get("objective", "chi_square"),
            a_H_ratio=float(init.get("a_H_ratio", 1.0)),
            Phi=float(init.get("Phi", math.pi / 2)),
            dephasing=float(init.get("dephasing", 0.0)),
        )
        guess = obj.get("initial_guess")
        if guess is not None:
            if isinstance(guess, Mapping):
                guess = [guess[p] for p in problem.free_params]
            guess = np.asarray(guess, dtype=float)
        return problem, guess

    def to_json_obj(self) -> dict:
        return {
            "observed": {str(k): v.to_json_obj() for k, v in sorted(self.observed.items())},
            "free_params": list(self.free_params),
            "fixed": self.fixed.to_dict(),
            "objective": self.objective,
            "initial_state": {"a_H_ratio": self.a_H_ratio, "Phi": self.Phi, "dephasing": self.dephasing},
        }


@dataclass
class FitResult:
    free_params: tuple[str, ...]
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    initial_objective: float
    evaluations: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def estimates(self) -> dict[str, float]:
        return dict(zip(self.free_params, (float(v) for v in self.x)))

    def to_json_obj(self) -> dict:
        est = self.estimates
        return {
            "estimates": est,
            "estimates_deg": {k: math.degrees(v) for k, v in est.items() if k in _ANGLES},
            "objective": self.objective,
            "initial_objective": self.initial_objective,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"


def _lumped_weights(fixed: HardwareParams) -> tuple[float, float, float]:
    logs = [math.log(getattr(fixed, n)) for n in _EPS_NAMES]
    total = sum(logs)
    if total == 0:
        return (1 / 3, 1 / 3, 1 / 3)
    return tuple(v / total for v in logs)


def model_distributions(problem: FitProblem, x) -> dict[int, Distribution]:
    """Post-selected model distribution at each observed step, on the observed bins."""
    params, ratio, phase, p = problem.resolve(x)
    state = prepare_state_from_ratio(ratio, phase)
    coin = effective_coin(params)
    out = {}
    if p > 0:
        for step in problem.steps:
            d = dephased_evolve(state, coin, step, p)
            out[step] = d.on_support(problem.observed[step].positions)
        return out
    current, done = state, 0
    for step in problem.steps:
        current = evolve(current, coin, step - done)
        done = step
        d = position_distribution(current, renormalize=True)
        out[step] = d.on_support(problem.observed[step].positions)
    return out


def objective_value(problem: FitProblem, candidate) -> float:
    """Discrepancy between observation and model at ``candidate`` (free-parameter order)."""
    candidate = np.asarray(candidate, dtype=float)
    if not problem.in_bounds(candidate):
        raise ValueError(f"candidate {candidate.tolist()} outside bounds")
    model = model_distributions(problem, candidate)
    total = 0.0
    for step, obs in problem.observed.items():
        p_obs = obs.probabilities
        p_mod = model[step].probabilities
        if problem.objective == "chi_square":
            if obs.sigma is None and not obs.n_samples:
                raise ValueError(f"step {step}: chi_square needs sigma or n_samples")
            floor = 1.0 / obs.n_samples if obs.n_samples else 0.0
            sig = np.full_like(p_obs, floor) if obs.sigma is None else np.maximum(obs.sigma, floor)
            if np.any(sig <= 0):
                raise ValueError(f"step {step}: zero sigma without n_samples for a floor")
            total += float(np.sum(((p_obs - p_mod) / sig) ** 2))
        else:
            counts = p_obs * obs.n_samples
            nz = counts > 0
            p_mod = np.maximum(p_mod, 1e-300)
            total += float(np.sum(counts[nz] * np.log(p_obs[nz] / p_mod[nz])))
    return max(total, 0.0)


def nelder_mead(func: Callable[[np.ndarray], float], x0, steps, lower, upper,
                max_iter: int = 2000, tolerance: float = 1e-10,
                alpha: float = 1.0, gamma: float = 2.0, rho: float = 0.5, sigma: float = 0.5):
    """Nelder-Mead simplex descent with every trial point projected into the box.

    Stops when the spread of objective values over the simplex drops below
    ``tolerance`` or after ``max_iter`` iterations. Returns
    ``(x_best, f_best, iterations, converged, evaluations, history)`` where
    ``history`` is the best value after each iteration.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    dim = x0.size
    n_eval = 0

    def f(x):
        nonlocal n_eval
        n_eval += 1
        return func(x)

    simplex = [x0]
    for i in range(dim):
        v = x0.copy()
        v[i] = min(x0[i] + steps[i], upper[i])
        if v[i] == x0[i]:
            v[i] = max(x0[i] - steps[i], lower[i])
        simplex.append(v)
    simplex = np.array(simplex)
    if np.linalg.matrix_rank(simplex[1:] - simplex[0]) < dim:
        raise ValueError("degenerate initial simplex")
    fvals = np.array([f(v) for v in simplex])
    history = []
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if fvals[-1] - fvals[0] < tolerance:
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        xr = np.clip(centroid + alpha * (centroid - simplex[-1]), lower, upper)
        fr = f(xr)
        if fr < fvals[0]:
            xe = np.clip(centroid + gamma * (xr - centroid), lower, upper)
            fe = f(xe)
            simplex[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = np.clip(centroid + rho * (xr - centroid), lower, upper)
            else:
                xc = np.clip(centroid + rho * (simplex[-1] - centroid), lower, upper)
            fc = f(xc)
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                for j in range(1, dim + 1):
                    simplex[j] = simplex[0] + sigma * (simplex[j] - simplex[0])
                    fvals[j] = f(simplex[j])
        history.append(float(fvals.min()))
    best = int(np.argmin(fvals))
    return simplex[best].copy(), float(fvals[best]), it, converged, n_eval, history


def fit(problem: FitProblem, initial_guess=None, max_iter: int = 2000,
        tolerance: float = 1e-8, restarts: int = 2) -> FitResult:
    """Minimize the problem objective from ``initial_guess``.

    After convergence the simplex is rebuilt around the best point up to
    ``restarts`` times, which guards against the collapsed simplices plain
    Nelder-Mead is prone to; the run stops early when a restart brings no
    improvement. Fully deterministic for a given problem and guess.
    """
    x0 = problem.start_vector() if initial_guess is None else np.asarray(initial_guess, dtype=float)
    x0 = problem.project(x0)
    f0 = objective_value(problem, x0)
    steps = np.array([_SIMPLEX_STEP[p] for p in problem.free_params])
    func = lambda x: objective_value(problem, x)  # noqa: E731
    x, fx, total_it, total_eval, history = x0, f0, 0, 1, []
    converged = False
    for attempt in range(restarts + 1):
        budget = max_iter - total_it
        if budget <= 0:
            break
        xb, fb, it, conv, n_eval, hist = nelder_mead(
            func, x, steps if attempt == 0 else steps / 10, problem.lower(), problem.upper(),
            max_iter=budget, tolerance=tolerance)
        total_it += it
        total_eval += n_eval
        history.extend(min(h, fx) for h in hist)
        improved = fb < fx - tolerance
        if fb < fx:
            x, fx = xb, fb
        converged = conv
        if not conv or not improved:
            break
    return FitResult(problem.free_params, x, fx, total_it, converged, f0, total_eval, history)


def _model_vector(problem: FitProblem, x) -> np.ndarray:
    model = model_distributions(problem, x)
    return np.concatenate([model[s].probabilities for s in problem.steps])


def sensitivity_matrix(problem: FitProblem, x=None, rel_step: float = 1e-5,
                       scheme: str = "central") -> np.ndarray:
    """Finite-difference Jacobian of the stacked model probabilities.

    Rows run over (step, bin), columns over free parameters. Trial points that
    would leave the box are mirrored to the inside (a one-sided difference).
    """
    x = problem.start_vector() if x is None else np.asarray(x, dtype=float)
    lo, hi = problem.lower(), problem.upper()
    base = _model_vector(problem, x)
    cols = []
    for i, name in enumerate(problem.free_params):
        h = rel_step * max(abs(x[i]), _SIMPLEX_STEP[name])
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        if scheme == "central" and up[i] <= hi[i] and dn[i] >= lo[i]:
            cols.append((_model_vector(problem, up) - _model_vector(problem, dn)) / (2 * h))
        elif scheme in ("central", "forward") and up[i] <= hi[i]:
            cols.append((_model_vector(problem, up) - base) / h)
        elif scheme in ("central", "forward", "backward"):
            cols.append((base - _model_vector(problem, dn)) / h)
        else:
            raise ValueError(f"unknown difference scheme {scheme!r}")
    return np.column_stack(cols)


@dataclass
class IdentifiabilityReport:
    free_params: tuple[str, ...]
    point: dict[str, float]
    sensitivity: dict[str, float]
    singular_values: np.ndarray
    condition_number: float
    degenerate: bool
    weakest_direction: dict[str, float]
    jacobian: np.ndarray = field(repr=False)

    def table(self) -> str:
        lines = [f"{'parameter':<12} {'value':>12} {'sensitivity':>12} {'weak dir':>9}"]
        for p in self.free_params:
            lines.append(f"{p:<12} {self.point[p]:>12.6g} {self.sensitivity[p]:>12.4g} "
                         f"{self.weakest_direction[p]:>9.3f}")
        flag = "DEGENERATE" if self.degenerate else "ok"
        lines.append(f"condition number {self.condition_number:.3g} ({flag})")
        return "\n".join(lines)


def identifiability_report(problem: FitProblem, x=None, threshold: float = 1e4,
                           rel_step: float = 1e-5) -> IdentifiabilityReport:
    """Local sensitivity of the model to each free parameter.

    Columns of the Jacobian are scaled by the simplex step of their parameter
    so angles and efficiencies are comparable; a condition number above
    ``threshold`` flags a near-degenerate combination, given by the right
    singular vector of the smallest singular value.
    """
    x = problem.start_vector() if x is None else np.asarray(x, dtype=float)
    jac = sensitivity_matrix(problem, x, rel_step)
    scale = np.array([_SIMPLEX_STEP[p] for p in problem.free_params])
    scaled = jac * scale
    _, s, vt = np.linalg.svd(scaled, full_matrices=False)
    cond = math.inf if s[-1] <= s[0] * 1e-14 else float(s[0] / s[-1])
    if s[0] == 0:
        cond = math.inf
    weak = vt[-1] / np.sign(vt[-1][np.argmax(np.abs(vt[-1]))])
    return IdentifiabilityReport(
        free_params=problem.free_params,
        point=dict(zip(problem.free_params, x.tolist())),
        sensitivity={p: float(np.linalg.norm(jac[:, i])) for i, p in enumerate(problem.free_params)},
        singular_values=s,
        condition_number=cond,
        degenerate=cond > threshold,
        weakest_direction={p: float(v) for p, v in zip(problem.free_params, weak)},
        jacobian=jac,
    )


def synthesize_observed(params: HardwareParams, steps: Sequence[int], n_total: int, seed=None,
                        a_H_ratio: float = 1.0, Phi: float = math.pi / 2,
                        initial: WalkState | None = None) -> dict[int, Distribution]:
    """Multinomial histograms from the model, ``n_total`` counts split evenly over ``steps``."""
    rng = np.random.default_rng(seed)
    state = prepare_state_from_ratio(a_H_ratio, Phi) if initial is None else initial
    coin = effective_coin(params)
    steps = sorted(steps)
    per_step = n_total // len(steps)
    out = {}
    current, done = state, 0
    for step in steps:
        current = evolve(current, coin, step - done)
        done = step
        d = position_distribution(current, renormalize=True).on_support(np.arange(-step, step + 1, 2))
        counts = rng.multinomial(per_step, d.probabilities / d.probabilities.sum())
        p = counts / per_step
        out[step] = Distribution(d.positions, p, np.sqrt(p * (1 - p) / per_step), per_step)
    return out
