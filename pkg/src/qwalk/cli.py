"""Command-line entry point: ``qwalk <subcommand> [options]``.

Exit codes: 0 success, 1 computation error, 2 I/O or configuration error.
Angles on the command line are in degrees.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import svg
from .calibration import DEFAULT_FREE, PARAM_NAMES, FitProblem, fit, identifiability_report, model_distributions
from .classical import ClassicalState, classical_evolve, galton_sample
from .distribution import Distribution
from .experiment import (
    ClickLog,
    DetectorModel,
    estimate_distribution,
    model_distribution,
    run_experiment,
    runs_for_clicks,
    spread_standard_error,
    step_gate,
)
from .hardware import HardwareParams, detect_aliasing, effective_coin
from .walk import circular_state, evolve, make_coin, moments, position_distribution, prepare_state, prepare_state_from_ratio

SEED_ENV = "QWALK_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _config_error(message: str) -> CliError:
    return CliError(message, 2)


# -- output helpers ---------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_dist(out: Path, stem: str, dist: Distribution, fmt: str) -> Path:
    path = out / f"{stem}.{fmt}"
    write_atomic(path, dist.to_csv() if fmt == "csv" else dist.to_json() + "\n")
    return path


def _write_table(out: Path, stem: str, header: list[str], rows: list[list], fmt: str) -> Path:
    path = out / f"{stem}.{fmt}"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
        write_atomic(path, buf.getvalue())
    else:
        write_atomic(path, json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n")
    return path


# -- shared option handling ---------------------------------------------------

def _load_params(args) -> HardwareParams | None:
    if getattr(args, "params", None) is None:
        return None
    try:
        return HardwareParams.from_file(args.params)
    except FileNotFoundError as exc:
        raise _config_error(f"parameter file not found: {args.params}") from exc
    except (OSError, ValueError) as exc:
        raise _config_error(f"invalid parameter file {args.params}: {exc}") from exc


def _initial_state(args):
    if args.ratio is not None:
        phase = math.radians(args.phase if args.phase is not None else 90.0)
        return prepare_state_from_ratio(args.ratio, phase)
    if args.input == "circular":
        return circular_state()
    if args.input == "H":
        return prepare_state(1.0, 0.0)
    return prepare_state(0.0, 1.0)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        raise _config_error(f"a seed is required: pass --seed or set {SEED_ENV}")
    try:
        return int(env)
    except ValueError as exc:
        raise _config_error(f"{SEED_ENV}={env!r} is not an integer") from exc


def _common(p: argparse.ArgumentParser, seed: bool = False) -> None:
    p.add_argument("--params", type=Path, help="hardware parameter JSON file")
    p.add_argument("--out", type=Path, default=Path("qwalk-out"), help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-plot", dest="plot", action="store_false", help="skip SVG output")
    if seed:
        p.add_argument("--seed", type=int, help=f"RNG seed (falls back to ${SEED_ENV})")


def _input_opts(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--input", choices=("circular", "H", "V"), default=default,
                   help="initial coin state")
    p.add_argument("--ratio", type=float, help="prepare |a_H|^2/|a_V|^2 = RATIO instead of --input")
    p.add_argument("--phase", type=float, help="relative V phase in degrees for --ratio (default 90)")


# -- subcommands --------------------------------------------------------------

def cmd_walk(args) -> int:
    if args.steps < 0:
        raise _config_error("--steps must be non-negative")
    params = _load_params(args)
    if params is None and args.lossy:
        params = HardwareParams.default()
    theta = math.radians(args.coin) if args.coin is not None else None
    if params is None:
        coin = make_coin(math.radians(22.5) if theta is None else theta)
        label = "ideal"
    else:
        if theta is not None:
            params = params.replace(theta=theta)
        coin = effective_coin(params)
        label = "lossy"
    state = _initial_state(args)
    rows, panels = [], []
    current = state
    for k in range(args.steps + 1):
        if k:
            current = evolve(current, coin, 1)
        survival = current.norm2
        dist = position_distribution(current, renormalize=True)
        dist = dist.on_support(np.arange(-k, k + 1, 2))
        mean, sigma = moments(dist)
        rows.append([k, mean, sigma, survival])
        _write_dist(args.out, f"walk_step{k}", dist, args.format)
        panels.append(svg.BarPanel(f"step {k}", dist.positions, dist.probabilities))
    _write_table(args.out, "moments", ["step", "mean", "sigma", "survival"], rows, args.format)
    if args.plot:
        write_atomic(args.out / "walk.svg", svg.render(panels))
    print(f"{label} walk, {args.steps} steps: sigma = {rows[-1][2]:.4f}")
    return 0


def _parse_angles(spec: str) -> list[float]:
    try:
        if ":" in spec:
            start, stop, step = (float(v) for v in spec.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise _config_error(f"cannot parse angle grid {spec!r}") from exc


def cmd_sweep(args) -> int:
    angles = _parse_angles(args.angles)
    if not angles:
        raise _config_error("empty angle grid")
    if any(a < 0 or a > 45 for a in angles):
        raise _config_error("angles must lie within [0, 45] degrees")
    bins = list(range(args.steps, -args.steps - 1, -2))
    start = prepare_state(1.0, 0.0)
    rows = []
    for deg in angles:
        th = math.radians(deg)
        q = position_distribution(evolve(start, make_coin(th), args.steps))
        c = classical_evolve(ClassicalState.coin(1.0), th, args.steps)
        rows.append([deg] + [q.prob(b) for b in bins] + [c.prob(b) for b in bins])
    header = ["theta_deg"] + [f"quantum_{b:+d}" for b in bins] + [f"classical_{b:+d}" for b in bins]
    _write_table(args.out, "sweep", header, rows, args.format)
    if args.plot:
        panels = []
        for i, b in enumerate(bins):
            panels.append(svg.LinePanel(
                f"t = {b:+d}", angles,
                {"quantum": [r[1 + i] for r in rows], "classical": [r[1 + len(bins) + i] for r in rows]},
                dashed=("classical",)))
        write_atomic(args.out / "sweep.svg", svg.render(panels, columns=2))
    print(f"swept {len(angles)} angles after {args.steps} steps")
    return 0


def cmd_classical(args) -> int:
    th = math.radians(args.coin)
    initial = ClassicalState.from_walk_state(_initial_state(args))
    rows, panels = [], []
    for k in range(args.steps + 1):
        if args.samples:
            dist = galton_sample(th, k, args.samples, _seed(args) + k, initial)
        else:
            dist = classical_evolve(initial, th, k)
        dist = dist.on_support(np.arange(-k, k + 1, 2))
        mean, sigma = moments(dist)
        rows.append([k, mean, sigma])
        _write_dist(args.out, f"classical_step{k}", dist, args.format)
        panels.append(svg.BarPanel(f"step {k}", dist.positions, dist.probabilities, dist.sigma))
    _write_table(args.out, "moments", ["step", "mean", "sigma"], rows, args.format)
    if args.plot:
        write_atomic(args.out / "classical.svg", svg.render(panels))
    print(f"classical walk, {args.steps} steps: sigma = {rows[-1][2]:.4f}")
    return 0


def cmd_experiment(args) -> int:
    seed = _seed(args)
    params = _load_params(args) or HardwareParams.default()
    if args.coin is not None:
        params = params.replace(theta=math.radians(args.coin))
    if args.steps < 1:
        raise _config_error("--steps must be at least 1")
    try:
        det = DetectorModel(efficiency=args.eta_det if args.eta_det is not None else params.eta_det,
                            jitter_sigma=args.jitter, dead_time=args.dead_time, dark_rate=args.dark_rate)
    except ValueError as exc:
        raise _config_error(str(exc)) from exc
    state = _initial_state(args)
    steps = list(range(1, args.steps + 1))
    if args.ungated:
        if args.runs is None:
            raise _config_error("--ungated needs --runs")
        log = run_experiment(state, params, det, args.mean_n, args.runs, args.steps, seed)
    else:
        # one gated series per step, each sized for --clicks photon clicks
        children = np.random.SeedSequence(seed).spawn(len(steps))
        logs, offsets, offset = [], [], 0
        for k, child in zip(steps, children):
            runs = args.runs or runs_for_clicks(args.clicks, k, params, det, args.mean_n)
            logs.append(run_experiment(state, params, det, args.mean_n, runs, args.steps, child,
                                       gate=step_gate(k, params)))
            offsets.append(offset)
            offset += runs
        log = ClickLog.concatenate(logs, offsets)
    write_atomic(args.out / "clicks.csv", log.to_csv())
    summary, panels = [], []
    for k in steps:
        model = model_distribution(state, params, k)
        try:
            est = estimate_distribution(log, k)
        except ValueError as exc:
            raise CliError(str(exc), 1) from exc
        _write_dist(args.out, f"estimate_step{k}", est, args.format)
        _write_dist(args.out, f"model_step{k}", model, args.format)
        sig_hat = moments(est)[1]
        sig_mod = moments(model)[1]
        se = spread_standard_error(model, est.n_samples)
        summary.append([k, est.n_samples, sig_hat, se, sig_mod])
        panels.append(svg.BarPanel(f"step {k} (N={est.n_samples})", est.positions, est.probabilities,
                                   est.sigma, model.probabilities))
    last_est = estimate_distribution(log, steps[-1])
    last_model = model_distribution(state, params, steps[-1])
    panels.append(svg.BarPanel(f"step {steps[-1]} residual", last_est.positions,
                               last_est.probabilities - last_model.probabilities, last_est.sigma, signed=True))
    _write_table(args.out, "summary", ["step", "clicks", "sigma_hat", "sigma_se", "sigma_model"], summary,
                 args.format)
    if args.plot:
        write_atomic(args.out / "experiment.svg", svg.render(panels))
    k, n, sh, se, sm = summary[-1]
    print(f"step {k}: N = {n}, sigma_hat = {sh:.4f} +/- {se:.4f} (model {sm:.4f})")
    return 0


def cmd_calibrate(args) -> int:
    try:
        obj = json.loads(Path(args.observed).read_text())
    except FileNotFoundError as exc:
        raise _config_error(f"observed-histogram file not found: {args.observed}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise _config_error(f"cannot read {args.observed}: {exc}") from exc
    if isinstance(obj, dict):
        obj = dict(obj)
        if args.free:
            obj["free_params"] = args.free.split(",")
        if args.objective:
            obj["objective"] = args.objective
        if args.params is not None:
            obj["fixed"] = _load_params(args).to_dict()
    try:
        problem, guess = FitProblem.from_json_obj(obj)
    except (ValueError, TypeError, KeyError) as exc:
        raise _config_error(f"malformed histogram file {args.observed}: {exc}") from exc
    result = fit(problem, guess, max_iter=args.max_iter, tolerance=args.tolerance)
    report = identifiability_report(problem, result.x)
    payload = result.to_json_obj()
    payload["identifiability"] = {
        "condition_number": report.condition_number,
        "degenerate": report.degenerate,
        "sensitivity": report.sensitivity,
    }
    write_atomic(args.out / "fit_result.json", json.dumps(payload, indent=2) + "\n")
    if args.plot:
        model = model_distributions(problem, result.x)
        panels = [svg.BarPanel(f"step {s}", problem.observed[s].positions, problem.observed[s].probabilities,
                               problem.observed[s].sigma, model[s].probabilities) for s in problem.steps]
        write_atomic(args.out / "calibration.svg", svg.render(panels))
    print(report.table())
    shown = ", ".join(
        f"{k} = {math.degrees(v):.3f} deg" if k in ("phi", "theta", "Phi") else f"{k} = {v:.5g}"
        for k, v in result.estimates.items())
    print(f"{shown}; objective {result.objective:.4g}; converged={result.converged}")
    return 0


def cmd_alias_check(args) -> int:
    params = _load_params(args) or HardwareParams()
    aliases = detect_aliasing(args.max_step, params, args.tol)
    rows = [[a.first.step, a.first.position, a.second.step, a.second.position,
             a.first.arrival_ns, a.repetition_shift] for a in aliases]
    _write_table(args.out, "aliases", ["first_step", "first_position", "second_step", "second_position",
                                       "arrival_ns", "repetition_shift"], rows, args.format)
    if not aliases:
        print(f"no time-bin collisions up to step {args.max_step}")
    for a in aliases:
        print(f"({a.first.step},{a.first.position:+d}) and ({a.second.step},{a.second.position:+d}) "
              f"collide at {a.first.arrival_ns:g} ns" + (f" [+{a.repetition_shift} pulses]" if a.repetition_shift else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qwalk", description="Time-multiplexed coined quantum walk toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("walk", help="evolve the walk and write per-step distributions")
    _common(p)
    _input_opts(p, "circular")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--coin", type=float, help="HWP angle in degrees (default 22.5)")
    p.add_argument("--lossy", action="store_true", help="use the packaged measured parameters")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("sweep", help="coin-angle sweep of the distribution from |H>")
    _common(p)
    p.add_argument("--angles", default="0:45:2.5", help="start:stop:step or comma list, degrees")
    p.add_argument("--steps", type=int, default=3)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("classical", help="classical random-walk reference")
    _common(p, seed=True)
    _input_opts(p, "H")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--coin", type=float, default=22.5, help="HWP angle in degrees")
    p.add_argument("--samples", type=int, help="Monte Carlo runs instead of the exact chain")
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("experiment", help="click-level Monte Carlo of the loop experiment")
    _common(p, seed=True)
    _input_opts(p, "circular")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--coin", type=float, help="HWP angle in degrees (default from parameters)")
    p.add_argument("--mean-n", type=float, default=8.0, help="mean photon number per pulse")
    p.add_argument("--clicks", type=float, default=3016, help="target photon clicks per step")
    p.add_argument("--runs", type=int, help="runs per series (overrides --clicks)")
    p.add_argument("--ungated", action="store_true", help="one series over all steps (needs --runs)")
    p.add_argument("--eta-det", type=float, help="detector efficiency (default from parameters)")
    p.add_argument("--jitter", type=float, default=0.5, help="timing jitter sigma, ns")
    p.add_argument("--dead-time", type=float, default=50.0, help="ns")
    p.add_argument("--dark-rate", type=float, default=0.0, help="dark counts per ns")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("calibrate", help="fit imperfection parameters to observed histograms")
    _common(p)
    p.add_argument("observed", type=Path, help="fit-problem JSON with observed histograms keyed by step")
    p.add_argument("--free", help=f"comma list from {', '.join(PARAM_NAMES)} (default {','.join(DEFAULT_FREE)})")
    p.add_argument("--objective", choices=("chi_square", "multinomial_nll"))
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("alias-check", help="report colliding time bins")
    _common(p)
    p.add_argument("--max-step", type=int, default=9)
    p.add_argument("--tol", type=float, default=0.1, help="collision tolerance, ns")
    p.set_defaults(func=cmd_alias_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"qwalk: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"qwalk: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qwalk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
