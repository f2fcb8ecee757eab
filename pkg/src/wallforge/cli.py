"""Command-line runner: solve, spectrum, evolve, pin and validate.

Exit status: 0 on success, 1 on a numerical failure, 2 on a configuration
or usage error. ``validate`` exits 0 only when every suite item passes.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import json
import math
import os
from pathlib import Path
import sys
import warnings

import numpy as np

from . import __version__
from .config import ExperimentConfig, default_config_text, load_config, loads_config, localized_potential
from .discretization import (
    Grid,
    RealField2,
    read_field_csv,
    residual_sup,
    write_field_csv,
)
from .dynamics import evolve, orbital_stability_experiment
from .errors import ConfigError, InvalidParameterError, UsageError, WallforgeError
from .model import PotentialSpec, check_W_axioms, exact_wall
from .pinning import LocalizedPotential, compute_sigma, find_pinning_points, pinned_spectrum, solve_pinned_wall
from .profile_solver import solve_wall, verify_wall_properties
from .spectral import quadratic_form_identity_check, smallest_eigs, assemble_Lplus, stability_spectrum

USAGE_ERRORS = (ConfigError, UsageError, InvalidParameterError)
BC_TOL = 1e-12


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report_text(command: str, cfg: ExperimentConfig, result) -> str:
    doc = {"command": command, "version": __version__, "config_hash": cfg.config_hash, "result": result}
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def _emit(args, command: str, cfg: ExperimentConfig, result) -> None:
    text = report_text(command, cfg, result)
    path = args.report or cfg.outputs.get("report")
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _workers() -> int:
    raw = os.environ.get("WALLFORGE_THREADS")
    if raw is None or raw == "":
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"WALLFORGE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"WALLFORGE_THREADS must be a positive integer, got {raw!r}")
    return n


def _pool_map(fn, items):
    """Ordered map over a bounded pool; results keep the input order."""
    items = list(items)
    n = min(_workers(), len(items)) or 1
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _config(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    return loads_config(default_config_text())


def _load_wall(path, spec: PotentialSpec) -> RealField2:
    if not Path(path).is_file():
        raise UsageError(f"wall file {str(path)!r} does not exist")
    U = read_field_csv(path)
    if not isinstance(U, RealField2):
        raise UsageError(f"{path}: expected a real profile with columns x,u1,u2")
    want = (tuple(spec.b_state), tuple(spec.a_state))
    got = (U.left_bc, U.right_bc)
    if np.max(np.abs(np.subtract(got, want))) > BC_TOL:
        raise UsageError(
            f"{path}: boundary values {got} do not match the configured potential's equilibria {want}"
        )
    return U


def _wall(args, cfg: ExperimentConfig) -> RealField2:
    if getattr(args, "wall", None):
        return _load_wall(args.wall, cfg.potential)
    s = cfg.solver
    return solve_wall(cfg.potential, cfg.wall_grid(), s["tol"], s["max_iter"], s["flow_steps"]).profile


def _write_eigenvectors(path, grid: Grid, values, vectors) -> None:
    n = grid.N
    cols = ["x"] + [f"{c}_{j}" for j in range(len(values)) for c in ("phi1", "phi2")]
    rows = [cols, ["lambda"] + [repr(float(v)) for v in values for _ in range(2)]]
    for i, xi in enumerate(grid.x):
        row = [repr(float(xi))]
        for j in range(len(values)):
            row += [repr(float(vectors[i, j])), repr(float(vectors[n + i, j]))]
        rows.append(row)
    Path(path).write_text("\n".join(",".join(r) for r in rows) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _solve_one(cfg: ExperimentConfig, spec: PotentialSpec):
    s = cfg.solver
    report = solve_wall(spec, cfg.wall_grid(spec), s["tol"], s["max_iter"], s["flow_steps"])
    props = verify_wall_properties(spec, report)
    return report, {"potential": spec.to_dict(), "wall": report.to_dict(), "properties": props.to_dict()}


def cmd_solve(args, cfg: ExperimentConfig) -> int:
    specs = [cfg.potential] + list(cfg.sweep)
    results = _pool_map(lambda sp: _solve_one(cfg, sp), specs)
    out = args.out or cfg.outputs.get("wall")
    if out:
        write_field_csv(out, results[0][0].profile)
        for i, (rep, _) in enumerate(results[1:], start=1):
            p = Path(out)
            write_field_csv(p.with_name(f"{p.stem}_{i}{p.suffix}"), rep.profile)
    body = results[0][1]
    if cfg.sweep:
        body = dict(body, sweep=[r[1] for r in results[1:]])
    _emit(args, "solve", cfg, body)
    return 0


def cmd_spectrum(args, cfg: ExperimentConfig) -> int:
    k = args.k if args.k is not None else cfg.spectral["k"]
    if not 2 <= k <= 64:
        raise UsageError(f"--k must lie in [2, 64], got {k}")
    U = _wall(args, cfg)
    rep = stability_spectrum(cfg.potential, U, k=k, tol=cfg.spectral["tol"])
    body = rep.to_dict()
    body["reloaded_residual_sup"] = residual_sup(cfg.potential, U)
    body["grid"] = {"L": U.grid.L, "N": U.grid.N}
    out = args.out or cfg.outputs.get("eigenvectors")
    if out:
        ep = smallest_eigs(assemble_Lplus(cfg.potential, U), k)
        _write_eigenvectors(out, U.grid, ep.values, ep.vectors)
    _emit(args, "spectrum", cfg, body)
    return 0


def cmd_evolve(args, cfg: ExperimentConfig) -> int:
    d = dict(cfg.dynamics)
    for key in ("T", "dt", "eps", "seed"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    if not (d["T"] > 0 and d["dt"] > 0 and d["dt"] <= d["T"] and math.isfinite(d["T"])):
        raise UsageError(f"need 0 < dt <= T, got T={d['T']}, dt={d['dt']}")
    if not 0 <= d["eps"] <= 0.5:
        raise UsageError(f"--eps for evolve must lie in [0, 0.5], got {d['eps']}")
    if d["seed"] < 0:
        raise UsageError(f"--seed must be nonnegative, got {d['seed']}")
    wall = _wall(args, cfg)
    verdict = orbital_stability_experiment(
        cfg.potential, wall, d["eps"], d["T"], d["dt"], seed=int(d["seed"]), K=d["K"], C_max=d["C_max"], A=d["A"]
    )
    trace_path = args.trace or cfg.outputs.get("trace")
    if trace_path:
        verdict.trace.write_csv(trace_path)
    out = args.out
    if out:
        write_field_csv(out, verdict.trace.final)
    body = verdict.to_dict()
    body["settings"] = d
    _emit(args, "evolve", cfg, body)
    return 0


def _pin_potential(args, cfg: ExperimentConfig) -> LocalizedPotential:
    if args.potential is None:
        return cfg.pinning_potential
    try:
        data = json.loads(args.potential)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--potential is not valid JSON: {exc.msg}", "--potential", exc.lineno, exc.colno) from None
    return localized_potential(data, "--potential", Path.cwd())


def _pin_one(cfg, V, wall, eps, x0):
    rep = solve_pinned_wall(cfg.potential, V, eps, wall, x0=x0)
    return pinned_spectrum(cfg.potential, V, eps, rep)


def cmd_pin(args, cfg: ExperimentConfig) -> int:
    V = _pin_potential(args, cfg)
    eps_list = [args.eps] if args.eps is not None else list(cfg.pinning_eps)
    wall = _wall(args, cfg)
    V.check_tail(wall.grid)
    x0 = find_pinning_points(V, wall).x0
    reports = _pool_map(lambda e: _pin_one(cfg, V, wall, e, x0), eps_list)
    out = args.out or cfg.outputs.get("pinned")
    if out:
        p = Path(out)
        for i, rep in enumerate(reports):
            target = p if i == 0 else p.with_name(f"{p.stem}_{i}{p.suffix}")
            write_field_csv(target, rep.pinned_profile)
    _emit(args, "pin", cfg, {"potential": V.to_dict(), "runs": [r.to_dict() for r in reports]})
    return 0


# ---------------------------------------------------------------------------
# Validation battery
# ---------------------------------------------------------------------------


def _item(name: str, checks: dict, details: dict) -> dict:
    return {"name": name, "passed": all(checks.values()), "checks": checks, "details": details}


def _v_axioms(cfg, ctx):
    rep = check_W_axioms(cfg.potential, raise_on_failure=False)
    return _item("axioms", {"all_axioms": rep.ok}, rep.to_dict())


def _v_exact(cfg, ctx):
    spec = PotentialSpec.symmetric_cubic(3.0)
    grid = cfg.grid or Grid(20.0, 8191)
    s = cfg.solver
    rep = solve_wall(spec, grid, s["tol"], s["max_iter"], s["flow_steps"])
    e1, e2 = exact_wall(spec, grid.x)
    sup = float(max(np.abs(rep.profile.u1 - e1).max(), np.abs(rep.profile.u2 - e2).max()))
    e_err = abs(rep.energy - math.sqrt(2) / 3)
    checks = {
        "sup_error<=1e-6": sup <= 1e-6,
        "energy_error<=1e-6": e_err <= 1e-6,
        "center_value": abs(rep.center_value - 0.5) <= 1e-6,
    }
    return _item("exact_regression", checks, {"grid": {"L": grid.L, "N": grid.N}, "sup_error": sup,
                                              "energy_error": e_err, "center_value": rep.center_value})


def _v_wall(cfg, ctx):
    rep, props = ctx["wall_report"], ctx["wall_props"]
    checks = {
        "residual": rep.residual_sup <= max(10 * cfg.solver["tol"], 1e-8),
        "nonnegative": props.nonnegative,
        "ellipse_bound": props.ellipse_ok,
        "monotone": all(props.monotone),
        "decay_left_2pct": props.relative_error("decay_left") <= 0.02,
        "decay_right_2pct": props.relative_error("decay_right") <= 0.02,
    }
    if cfg.potential.is_swap_symmetric:
        checks["swap_symmetry"] = props.symmetric_defect <= 1e-6
    # the center value against 1/sqrt(1+gamma) is reported, not gated
    return _item("wall_properties", checks, props.to_dict())


def _v_spectral(cfg, ctx):
    U = ctx["wall_report"].profile
    rep = stability_spectrum(cfg.potential, U, k=cfg.spectral["k"], tol=cfg.spectral["tol"])
    ident = quadratic_form_identity_check(
        cfg.potential,
        U,
        A=(lambda x: 1 + 0.3 * np.exp(-((x - 0.5) ** 2)), lambda x: 1 - 0.2 * np.exp(-((x + 1) ** 2))),
        B=(lambda x: 0.5 + np.exp(-(x**2)), lambda x: 1 + 0.4 * np.exp(-((x - 1) ** 2))),
    )
    checks = {
        "lambda0_near_zero": abs(rep.lplus_eigs[0]) <= 1e-4,
        "zero_mode_overlap": rep.zero_mode_overlap >= 0.999,
        "gap>=0.1": rep.gap >= 0.1,
        "Lminus_bounded_below": rep.lminus_eigs[0] >= -1e-4,
        "rayleigh_min>=-1e-6": rep.neg_lambda_sq >= -1e-6,
        "identity_plus": ident.plus_relative <= 1e-3,
        "identity_minus": ident.minus_relative <= 1e-3,
    }
    details = rep.to_dict()
    details["identity"] = dict(ident.__dict__)
    return _item("spectral", checks, details)


def _v_pinning(cfg, ctx):
    U = ctx["wall_report"].profile
    V = cfg.pinning_potential
    V.check_tail(U.grid)
    checks, details = {}, {"potential": V.to_dict(), "runs": []}
    x0 = find_pinning_points(V, U).x0
    sig = compute_sigma(V, x0, U).value
    neg = V.scaled(-1.0)
    sig_neg = compute_sigma(neg, x0, U).value
    checks["sigma_flips_with_V"] = np.sign(sig) == -np.sign(sig_neg) != 0
    if V.kind == "sech2":
        checks["x0_at_center"] = abs(x0 - V.c) <= 1e-10
        checks["sign_sigma=sign_a"] = np.sign(sig) == np.sign(V.a)
    details.update(x0=x0, sigma=sig, sigma_negated=sig_neg)
    for eps in cfg.pinning_eps:
        if eps == 0.0:
            continue
        rep = pinned_spectrum(cfg.potential, V, eps, solve_pinned_wall(cfg.potential, V, eps, U, x0=x0))
        expect = "stable" if eps * sig > 0 else "unstable"
        key = f"eps={eps:g}"
        checks[f"{key}:verdict"] = rep.verdict == expect and rep.spectral_verdict == expect
        checks[f"{key}:negative_count"] = rep.negative_count == (0 if expect == "stable" else 1)
        checks[f"{key}:lambda_min_10pct"] = abs(rep.lplus_min_eig / rep.predicted_shift - 1) <= 0.1
        checks[f"{key}:linear_persistence"] = abs(rep.persistence_ratio - 2) <= 0.4
        details["runs"].append(rep.to_dict())
    return _item("pinning", checks, details)


def _v_dynamics(cfg, ctx):
    wall = ctx["wall_report"].profile
    d = cfg.dynamics
    T = min(d["T"], 1.0)
    tr = evolve(cfg.potential, wall.to_complex(), T, d["dt"], output_every=T / 10)
    m1, m2 = tr.final.moduli()
    dev = float(max(np.abs(m1 - wall.u1).max(), np.abs(m2 - wall.u2).max()))
    checks = {"moduli<=1e-6": dev <= 1e-6, "energy_drift<=1e-8": tr.energy_drift <= 1e-8}
    return _item("stationary_dynamics", checks, {"T": T, "dt": d["dt"], "moduli_deviation": dev,
                                                 "energy_drift": tr.energy_drift})


VALIDATORS = (_v_axioms, _v_exact, _v_wall, _v_spectral, _v_pinning, _v_dynamics)


def _guarded(fn, cfg, ctx):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fn(cfg, ctx)
    except WallforgeError as exc:
        name = fn.__name__.removeprefix("_v_")
        return {"name": name, "passed": False, "checks": {}, "details": {"error": type(exc).__name__,
                                                                        "message": str(exc)}}


def run_validate(cfg: ExperimentConfig) -> dict:
    s = cfg.solver
    ctx: dict = {}
    try:
        rep = solve_wall(cfg.potential, cfg.wall_grid(), s["tol"], s["max_iter"], s["flow_steps"])
        ctx["wall_report"] = rep
        ctx["wall_props"] = verify_wall_properties(cfg.potential, rep)
    except WallforgeError as exc:
        # everything downstream needs the wall; run only the independent items
        items = [_guarded(VALIDATORS[0], cfg, ctx), _guarded(VALIDATORS[1], cfg, ctx)]
        items.append({"name": "wall_solve", "passed": False, "checks": {},
                      "details": {"error": type(exc).__name__, "message": str(exc)}})
    else:
        items = _pool_map(lambda fn: _guarded(fn, cfg, ctx), VALIDATORS)
    return {"passed": all(it["passed"] for it in items), "items": items,
            "summary": {it["name"]: "pass" if it["passed"] else "fail" for it in items}}


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    result = run_validate(cfg)
    _emit(args, "validate", cfg, result)
    for it in result["items"]:
        print(f"{'PASS' if it['passed'] else 'FAIL'}  {it['name']}", file=sys.stderr)
    return 0 if result["passed"] else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wallforge", description="Domain walls in coupled Gross-Pitaevskii systems.")
    ap.add_argument("--version", action="version", version=f"wallforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help_text, flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="experiment config JSON (default: the shipped config)")
        p.add_argument("--report", metavar="PATH", help="write the JSON report here instead of stdout")
        for flag in flags:
            if flag == "out":
                p.add_argument("--out", metavar="PATH", help="output field CSV")
            elif flag == "wall":
                p.add_argument("--wall", metavar="PATH", help="wall profile CSV (solved afresh when omitted)")
            elif flag == "trace":
                p.add_argument("--trace", metavar="PATH", help="trace CSV")
            elif flag == "potential":
                p.add_argument("--potential", metavar="JSON", help='localized potential, e.g. \'{"kind":"sech2","a":1,"b":1}\'')
            elif flag in ("eps", "T", "dt"):
                p.add_argument(f"--{flag}", type=float, metavar="FLOAT")
            elif flag in ("k", "seed"):
                p.add_argument(f"--{flag}", type=int, metavar="INT")
        return p

    command("solve", "compute the wall and its property report", ["out"])
    command("spectrum", "spectra of L+ and L- and the stability verdict", ["wall", "out", "k"])
    command("evolve", "time evolution of a perturbed wall", ["wall", "out", "trace", "T", "dt", "eps", "seed"])
    command("pin", "pinned wall for a small localized potential", ["wall", "out", "potential", "eps"])
    command("validate", "run the acceptance battery", [])
    return ap


COMMANDS = {"solve": cmd_solve, "spectrum": cmd_spectrum, "evolve": cmd_evolve, "pin": cmd_pin, "validate": cmd_validate}


def _fail(exc: Exception, code: int) -> int:
    info = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("path", "line", "column", "last_residual"):
        val = getattr(exc, attr, None)
        if val not in (None, ""):
            info[attr] = val
    if hasattr(exc, "report") and hasattr(exc.report, "to_dict"):
        info["report"] = exc.report.to_dict()
    print(f"wallforge: error: {exc}", file=sys.stderr)
    print(json.dumps(_clean(info), sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _workers()
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except USAGE_ERRORS as exc:
        return _fail(exc, 2)
    except WallforgeError as exc:
        return _fail(exc, 1)
    except OSError as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
