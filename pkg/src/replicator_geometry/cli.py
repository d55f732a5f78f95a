"""Command-line front end.

    replicator-geometry run CONFIG [--output PATH] [--format csv|json] [--seed N]
    replicator-geometry verify [--output PATH]

A config is a flat YAML mapping; ``experiment`` selects what runs.  ``run``
writes the trajectory to PATH and a JSON report next to it
(``<stem>.report.json``).

Exit status: 0 success, 1 a verification check failed, 2 config parse error,
3 config validation error, 4 numerical failure during the run, 5 output could
not be written.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from . import flow_engine as fe
from . import gaussian_manifold as gm
from . import nes_engine as nes
from . import oracle
from . import simplex_games as sg
from .errors import ReplicatorError
from .io import emit_trajectory, state_to_json

log = logging.getLogger("replicator_geometry")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4, 5

EXPERIMENTS = ("simplex-flow", "gaussian-flow", "sigma-flow", "nes-run", "grid-oracle", "verify")

COMMON_KEYS = {"experiment", "output", "format", "seed"}
FLOW_KEYS = {"dt", "t_end", "record_every", "boundary_eps"}
KEYS = {
    "simplex-flow": COMMON_KEYS | FLOW_KEYS | {"A", "p0", "target"},
    "gaussian-flow": COMMON_KEYS | FLOW_KEYS | {"Q", "B", "a0", "C0"},
    "sigma-flow": COMMON_KEYS | FLOW_KEYS | {"Q", "B", "a0", "C0"},
    "nes-run": COMMON_KEYS | {"Q", "B", "a0", "C0", "mode", "m", "shaping", "truncation", "step", "iters", "pairing"},
    "grid-oracle": COMMON_KEYS | FLOW_KEYS | {"q", "b", "K", "s_min", "s_max", "mean0", "var0"},
    "verify": COMMON_KEYS,
}


class ConfigParseError(Exception):
    pass


class ConfigValidationError(Exception):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    raw: Dict[str, Any]
    params: Dict[str, Any]
    output: Optional[str]
    fmt: str
    seed: Optional[int]


# -- loading --------------------------------------------------------------

def _number(raw, key, default=None, kind=float):
    if key not in raw:
        if default is None:
            raise ConfigValidationError(f"missing required field {key!r}")
        return default
    v = raw[key]
    try:
        if isinstance(v, bool):
            raise TypeError
        x = float(v)  # PyYAML reads "1e-3" as a string
    except (TypeError, ValueError):
        raise ConfigValidationError(f"field {key!r} must be a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ConfigValidationError(f"field {key!r} must be finite")
    if kind is int:
        if x != int(x):
            raise ConfigValidationError(f"field {key!r} must be an integer, got {v!r}")
        return int(x)
    return x


def _array(raw, key, ndim, n=None, default=None):
    if key not in raw:
        if default is None:
            raise ConfigValidationError(f"missing required field {key!r}")
        return default
    try:
        arr = np.array(raw[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigValidationError(f"field {key!r} is not a numeric array") from None
    if arr.ndim == 0 and ndim > 0:
        arr = arr.reshape((1,) * ndim)
    if arr.ndim != ndim:
        raise ConfigValidationError(f"field {key!r} must be a {ndim}-d array, got shape {arr.shape}")
    if ndim == 2 and arr.shape[0] != arr.shape[1]:
        raise ConfigValidationError(f"field {key!r} must be square, got shape {arr.shape}")
    if n is not None and any(s != n for s in arr.shape):
        raise ConfigValidationError(f"field {key!r} has shape {arr.shape}, expected dimension {n}")
    if not np.all(np.isfinite(arr)):
        raise ConfigValidationError(f"field {key!r} has non-finite entries")
    return arr


def _wrap(key, fn, *args):
    try:
        return fn(*args)
    except (ReplicatorError, ValueError) as exc:
        raise ConfigValidationError(f"field {key!r}: {exc}") from None


def _flow_config(raw):
    return _wrap(
        "dt/t_end/record_every/boundary_eps",
        fe.FlowConfig,
        _number(raw, "dt"),
        _number(raw, "t_end"),
        _number(raw, "record_every", 1, int),
        _number(raw, "boundary_eps", 1e-9),
    )


def _gaussian_problem(raw):
    Q = _array(raw, "Q", 2)
    n = Q.shape[0]
    B = _array(raw, "B", 2, n)
    a0 = _array(raw, "a0", 1, n)
    C0 = _array(raw, "C0", 2, n)
    L = _wrap("Q", gm.QuadBilinearLandscape, Q, B)
    g0 = _wrap("C0", gm.GaussianParams, a0, C0)
    return L, g0


def validate(raw: Dict[str, Any]) -> ExperimentConfig:
    kind = raw.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigValidationError(f"field 'experiment' must be one of {', '.join(EXPERIMENTS)}; got {kind!r}")
    unknown = set(raw) - KEYS[kind]
    if unknown:
        raise ConfigValidationError(f"unknown field(s) for {kind}: {', '.join(sorted(unknown))}")
    fmt_ = raw.get("format", "csv")
    if fmt_ not in ("csv", "json"):
        raise ConfigValidationError(f"field 'format' must be csv or json, got {fmt_!r}")
    seed = _number(raw, "seed", kind=int) if "seed" in raw else None
    p: Dict[str, Any] = {}

    if kind == "simplex-flow":
        A = _array(raw, "A", 2)
        n = A.shape[0]
        p["landscape"] = sg.FiniteLandscape.linear(A)
        p["p0"] = _wrap("p0", sg.SimplexPoint, _array(raw, "p0", 1, n))
        p["target"] = _wrap("target", sg.SimplexPoint, _array(raw, "target", 1, n)) if "target" in raw else None
        p["flow"] = _flow_config(raw)
    elif kind in ("gaussian-flow", "sigma-flow"):
        p["landscape"], p["g0"] = _gaussian_problem(raw)
        p["flow"] = _flow_config(raw)
    elif kind == "nes-run":
        p["landscape"], p["g0"] = _gaussian_problem(raw)
        p["mode"] = raw.get("mode", "analytic")
        if p["mode"] not in ("analytic", "sampled"):
            raise ConfigValidationError(f"field 'mode' must be analytic or sampled, got {p['mode']!r}")
        p["m"] = _number(raw, "m", 1000, int)
        if p["m"] < 2:
            raise ConfigValidationError("field 'm' must be >= 2")
        p["step"] = _number(raw, "step")
        if not p["step"] > 0:
            raise ConfigValidationError("field 'step' must be positive")
        p["iters"] = _number(raw, "iters", kind=int)
        if p["iters"] < 1:
            raise ConfigValidationError("field 'iters' must be >= 1")
        p["shaping"] = _wrap(
            "shaping", nes.ShapingSpec, raw.get("shaping", "none"), _number(raw, "truncation", 0.5)
        )
        p["pairing"] = bool(raw.get("pairing", False))
        if seed is None:
            seed = 0
    elif kind == "grid-oracle":
        p["q"] = _number(raw, "q")
        p["b"] = _number(raw, "b", 0.0)
        p["K"] = _number(raw, "K", 2048, int)
        p["s_min"] = _number(raw, "s_min", -8.0)
        p["s_max"] = _number(raw, "s_max", 8.0)
        p["mean0"] = _number(raw, "mean0", 0.0)
        p["var0"] = _number(raw, "var0", 1.0)
        if p["K"] < 3 or not p["s_max"] > p["s_min"] or not p["var0"] > 0 or not p["q"] > 0:
            raise ConfigValidationError("grid-oracle needs K >= 3, s_max > s_min, var0 > 0, q > 0")
        p["flow"] = _flow_config(raw)
    return ExperimentConfig(kind, raw, p, raw.get("output"), fmt_, seed)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping")
    return validate(raw)


# -- experiments ------------------------------------------------------------

def _gaussian_diagnostics(L):
    return {"J": lambda g: gm.expected_fitness(g, L), "traceC": lambda g: float(np.trace(g.C))}


def _rate_summary(traj):
    if len(traj) < 20:
        return None
    try:
        fit = fe.fit_convergence_rate(traj)
    except (ReplicatorError, ValueError):
        return None
    return {"model": fit.model, "rate": fit.rate, "r_squared": fit.r_squared}


def _lyapunov_verdict(V: np.ndarray) -> str:
    d = np.diff(V)
    if d.size == 0:
        return "constant"
    if np.ptp(V) <= 1e-6:
        return "constant"
    if np.all(d < 0):
        return "strictly-decreasing"
    if np.all(d <= 0):
        return "non-increasing"
    return "not-monotone"


def run_simplex(p):
    L, target = p["landscape"], p["target"]
    diag = {"mean_fitness": lambda s: sg.mean_fitness(s, L)}
    if target is not None:
        diag["kl_to_target"] = lambda s: sg.kl_categorical(target, s)
    traj = fe.integrate(lambda x: sg.replicator_rhs(x, L), p["p0"], p["flow"], diag)
    summary = {"final_mean_fitness": float(traj.diagnostics["mean_fitness"][-1])}
    if target is not None:
        summary["lyapunov"] = _lyapunov_verdict(traj.diagnostics["kl_to_target"])
        summary["final_kl_to_target"] = float(traj.diagnostics["kl_to_target"][-1])
        summary["target_is_ess_candidate"] = sg.is_ess_candidate(target, L)
    return traj, summary


def run_gaussian(p, normalized=False):
    L = p["landscape"]
    rhs = (lambda g: nes.sigma_normalized_rhs(g, L)) if normalized else (lambda g: gm.replicator_rhs_gaussian(g, L))
    traj = fe.integrate(rhs, p["g0"], p["flow"], _gaussian_diagnostics(L))
    rep = fe.classify_asymptotics(L)
    final = traj.final
    exact = fe.closed_form_covariance(p["g0"].C, L.Q, float(traj.times[-1]))
    summary = {
        "final_J": float(traj.diagnostics["J"][-1]),
        "eigenvalues_B_minus_2Q": [[float(z.real), float(z.imag)] for z in rep.eigenvalues],
        "converges_to_delta_at_zero": rep.converges_to_delta_at_zero,
        "rate_fit": _rate_summary(traj),
        "J_non_decreasing": bool(np.all(np.diff(traj.diagnostics["J"]) >= -1e-12)),
    }
    if not normalized:
        summary["oracle_delta_closed_form_covariance"] = float(np.max(np.abs(final.C - exact)))
    return traj, summary


def run_nes(p, seed):
    L = p["landscape"]
    traj = nes.natural_gradient_ascent(
        p["g0"], L, p["step"], p["iters"], p["mode"], p["m"], seed, p["shaping"], p["pairing"]
    )
    summary = {"final_J": float(traj.diagnostics["J"][-1]), "rate_fit": _rate_summary(traj)}
    if p["mode"] == "sampled":
        ref = nes.natural_gradient_ascent(p["g0"], L, p["step"], p["iters"])
        summary["oracle_delta_final_J_vs_analytic"] = float(traj.diagnostics["J"][-1] - ref.diagnostics["J"][-1])
    return traj, summary


def run_grid(p):
    fc = p["flow"]
    d0 = oracle.GridDensity.discretize_normal(p["mean0"], p["var0"], p["s_min"], p["s_max"], p["K"])
    run = oracle.integrate_grid(d0, p["q"], p["b"], fc.dt, fc.t_end, fc.record_every)
    L = gm.QuadBilinearLandscape([[p["q"]]], [[p["b"]]])
    g0 = gm.GaussianParams([p["mean0"]], [[p["var0"]]])
    ode = fe.integrate(lambda g: gm.replicator_rhs_gaussian(g, L), g0, fc)
    names = ("mean", "variance", "skewness", "excess_kurtosis")
    diag = {k: np.array([getattr(m, k) for m in run.moments]) for k in names}
    diag["mean_ode"] = np.array([s.a[0] for s in ode.states])
    diag["variance_ode"] = np.array([s.C[0, 0] for s in ode.states])
    traj = fe.Trajectory(run.times, run.densities, diag)
    last = run.moments[-1]
    summary = {
        "final_moments": dict(zip(names, last[:4])),
        "oracle_delta_mean": float(np.max(np.abs(diag["mean"] - diag["mean_ode"]))),
        "oracle_delta_variance": float(np.max(np.abs(diag["variance"] - diag["variance_ode"]))),
        "max_mass_drift": run.max_mass_drift,
    }
    return traj, summary


def execute(cfg: ExperimentConfig, seed: Optional[int]):
    p = cfg.params
    if cfg.kind == "simplex-flow":
        return run_simplex(p)
    if cfg.kind == "gaussian-flow":
        return run_gaussian(p)
    if cfg.kind == "sigma-flow":
        return run_gaussian(p, normalized=True)
    if cfg.kind == "nes-run":
        return run_nes(p, seed)
    if cfg.kind == "grid-oracle":
        return run_grid(p)
    raise AssertionError(cfg.kind)


# -- reporting --------------------------------------------------------------

def _check_finite(obj, where="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ArithmeticError(f"non-finite value in {where}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v, where)


def _plain(obj):
    """Convert numpy scalars/arrays in nested containers to builtin types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(report: dict, path: Path):
    report = _plain(report)
    _check_finite(report)
    path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _report_path(out: Path) -> Path:
    return out.with_name(out.stem + ".report.json")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        log.error("parse error: %s", exc)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    fmt_ = args.format or cfg.fmt
    if cfg.kind == "verify":
        return _verify(args.output or cfg.output, args.timing)
    seed = args.seed if args.seed is not None else cfg.seed
    if args.output:
        out = Path(args.output)
    elif cfg.output:
        out = Path(cfg.output)
        if out.suffix not in (".csv", ".json"):
            out = out.with_name(out.name + "." + fmt_)
    else:
        out = Path(Path(args.config).stem + "." + fmt_)

    t0 = time.perf_counter()
    try:
        traj, summary = execute(cfg, seed)
    except (ReplicatorError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    elapsed = time.perf_counter() - t0

    echo = dict(cfg.raw)
    if seed is not None:
        echo["seed"] = seed
    report = {
        "config": echo,
        "experiment": cfg.kind,
        "final_state": state_to_json(traj.final) if cfg.kind != "grid-oracle" else summary["final_moments"],
        "final_time": float(traj.times[-1]),
        "samples": len(traj),
        "diagnostics": summary,
    }
    if args.timing:
        report["wall_clock_seconds"] = elapsed
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        emit_trajectory(traj, fmt_, out)
        write_report(report, _report_path(out))
    except ArithmeticError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_IO
    log.info("wrote %s and %s (%.3f s)", out, _report_path(out), elapsed)
    return EXIT_OK


def _verify(output, timing=False) -> int:
    from .verification import ALL_CHECKS

    results = []
    t0 = time.perf_counter()
    for check in ALL_CHECKS:
        try:
            r = check()
        except Exception as exc:  # a crashing check is a failed check
            from .verification import CheckResult

            r = CheckResult(check.__name__, False, math.nan, "", f"raised {type(exc).__name__}: {exc}")
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  measured={r.measured:.6g}  ({r.threshold}) {r.detail}")
        results.append(r)
    elapsed = time.perf_counter() - t0
    if output:
        doc = {
            "checks": [
                {**r.as_dict(), "measured": r.measured if math.isfinite(r.measured) else None} for r in results
            ],
            "all_passed": all(r.passed for r in results),
        }
        if timing:
            doc["wall_clock_seconds"] = elapsed
        try:
            out = Path(output)
            out.parent.mkdir(parents=True, exist_ok=True)
            write_report(doc, out)
        except OSError as exc:
            log.error("cannot write output: %s", exc)
            return EXIT_IO
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def cmd_verify(args) -> int:
    return _verify(args.output, args.timing)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replicator-geometry", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--output", help="trajectory file; the report goes to <stem>.report.json")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--seed", type=int, help="overrides the config seed")
    run.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the built-in verification suite")
    ver.add_argument("--output", help="write a JSON report here")
    ver.add_argument("--timing", action="store_true")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
