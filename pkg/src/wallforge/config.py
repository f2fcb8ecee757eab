"""Experiment configuration: JSON loading, validation, defaults and hashing."""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
import hashlib
import json
import math
from pathlib import Path
from importlib import resources

from .discretization import Grid
from .errors import ConfigError, WallforgeError
from .model import PotentialSpec
from .pinning import EPS_MAX, LocalizedPotential

DEFAULTS = {
    "grid": None,
    "solver": {"tol": 1e-10, "max_iter": 50, "flow_steps": 200},
    "spectral": {"k": 6, "tol": 1e-6},
    "dynamics": {"T": 50.0, "dt": 1e-3, "eps": 1e-2, "seed": 0, "A": 5.0, "K": 5.0, "C_max": 10.0},
    "pinning": {"potential": {"kind": "sech2", "a": 1.0, "b": 1.0, "c": 0.0}, "eps": [1e-3]},
    "outputs": {},
    "sweep": [],
}

# (type, lower, upper, lower inclusive); None means unbounded
_RANGES = {
    "grid.L": (float, 0.0, 1e4, False),
    "grid.N": (int, 3, 10**7, True),
    "solver.tol": (float, 0.0, 1e-2, False),
    "solver.max_iter": (int, 1, 10**4, True),
    "solver.flow_steps": (int, 0, 10**7, True),
    "spectral.k": (int, 2, 64, True),
    "spectral.tol": (float, 0.0, 1.0, False),
    "dynamics.T": (float, 0.0, 1e5, False),
    "dynamics.dt": (float, 0.0, 1.0, False),
    "dynamics.eps": (float, 0.0, 0.5, True),
    "dynamics.seed": (int, 0, 2**32 - 1, True),
    "dynamics.A": (float, 0.0, 1e4, False),
    "dynamics.K": (float, 0.0, None, False),
    "dynamics.C_max": (float, 0.0, None, False),
}
_OUTPUT_KEYS = ("wall", "report", "trace", "pinned", "eigenvectors")
_ALLOWED = {
    "grid": {"L", "N"},
    "solver": set(DEFAULTS["solver"]),
    "spectral": set(DEFAULTS["spectral"]),
    "dynamics": set(DEFAULTS["dynamics"]),
    "pinning": {"potential", "eps"},
    "outputs": set(_OUTPUT_KEYS),
}


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _number(value, path: str):
    typ, lo, hi, lo_incl = _RANGES[path]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if typ is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an integer, got {value!r}", path)
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"must be finite, got {value!r}", path)
    low_ok = lo is None or (value >= lo if lo_incl else value > lo)
    if not low_ok or (hi is not None and value > hi):
        left = "[" if lo_incl else "("
        raise ConfigError(f"{value!r} outside the allowed range {left}{lo}, {hi if hi is not None else 'inf'}]", path)
    return value


def _section(raw: dict, name: str) -> dict:
    got = raw.get(name, {})
    if got is None:
        return None
    if not isinstance(got, dict):
        raise ConfigError("expected a JSON object", name)
    allowed = _ALLOWED[name]
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", f"{name}.{unknown[0]}")
    return got


def _potential(data, path: str) -> PotentialSpec:
    try:
        return PotentialSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def _read_table(path: Path, where: str) -> tuple[list, list]:
    if not path.is_file():
        raise ConfigError(f"referenced file {str(path)!r} does not exist", where)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        body = [(float(r[0]), float(r[1])) for r in rows[1:]]
    except (ValueError, IndexError):
        raise ConfigError(f"{path}: expected two numeric columns x,V after a header row", where) from None
    return [r[0] for r in body], [r[1] for r in body]


def localized_potential(data, path: str = "pinning.potential", base: Path | None = None) -> LocalizedPotential:
    """Build V from a JSON object; tabulated tables may live in a CSV file given by ``file``."""
    if not isinstance(data, dict):
        raise ConfigError("expected a JSON object", path)
    data = dict(data)
    if data.get("kind") == "tabulated" and "file" in data:
        if "x" in data or "V" in data:
            raise ConfigError("give either 'file' or inline 'x'/'V', not both", path)
        f = Path(data.pop("file"))
        if base is not None and not f.is_absolute():
            f = base / f
        data["x"], data["V"] = _read_table(f, f"{path}.file")
    try:
        return LocalizedPotential.from_dict(data)
    except (TypeError, ValueError, KeyError, WallforgeError) as exc:
        raise ConfigError(str(exc), path) from None


@dataclass
class ExperimentConfig:
    potential: PotentialSpec
    grid: Grid | None
    solver: dict
    spectral: dict
    dynamics: dict
    pinning_potential: LocalizedPotential
    pinning_eps: list
    outputs: dict
    sweep: list = field(default_factory=list)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def wall_grid(self, spec: PotentialSpec | None = None) -> Grid:
        if self.grid is not None:
            return self.grid
        return Grid.for_spec(spec or self.potential)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def parse_config(raw, base: Path | None = None) -> ExperimentConfig:
    """Validate a decoded JSON object and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    unknown = sorted(set(raw) - {"potential", *DEFAULTS})
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted({'potential', *DEFAULTS})}", unknown[0])
    if "potential" not in raw:
        raise ConfigError("missing required section", "potential")
    spec = _potential(raw["potential"], "potential")

    norm: dict = {"potential": spec.to_dict()}
    g = _section(raw, "grid") if "grid" in raw else None
    grid = None
    if g:
        missing = [k for k in ("L", "N") if k not in g]
        if missing:
            raise ConfigError("grid needs both L and N", f"grid.{missing[0]}")
        L, N = _number(g["L"], "grid.L"), _number(g["N"], "grid.N")
        if N % 2 == 0:
            raise ConfigError(f"N must be odd so that x = 0 is a node, got {N}", "grid.N")
        grid = Grid(L, N)
        norm["grid"] = {"L": L, "N": N}
    else:
        norm["grid"] = None

    sections = {}
    for name in ("solver", "spectral", "dynamics"):
        got = _section(raw, name) or {}
        merged = dict(DEFAULTS[name])
        for key, value in got.items():
            merged[key] = _number(value, f"{name}.{key}")
        sections[name] = merged
        norm[name] = merged
    if sections["dynamics"]["dt"] > sections["dynamics"]["T"]:
        raise ConfigError("dt must not exceed T", "dynamics.dt")

    pin = _section(raw, "pinning") or {}
    pot_raw = pin.get("potential", DEFAULTS["pinning"]["potential"])
    V = localized_potential(pot_raw, "pinning.potential", base)
    eps_list = pin.get("eps", DEFAULTS["pinning"]["eps"])
    if not isinstance(eps_list, list) or not eps_list:
        raise ConfigError("expected a nonempty list of numbers", "pinning.eps")
    clean = []
    for i, e in enumerate(eps_list):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not math.isfinite(e):
            raise ConfigError(f"expected a finite number, got {e!r}", f"pinning.eps[{i}]")
        if abs(e) > EPS_MAX:
            raise ConfigError(f"|eps| must not exceed {EPS_MAX:g}, got {e!r}", f"pinning.eps[{i}]")
        clean.append(float(e))
    norm["pinning"] = {"potential": V.to_dict(), "eps": clean}

    out = _section(raw, "outputs") if "outputs" in raw else {}
    for key, value in (out or {}).items():
        if not isinstance(value, str) or not value:
            raise ConfigError("expected a nonempty path string", f"outputs.{key}")
    norm["outputs"] = dict(out or {})

    sweep_raw = raw.get("sweep", [])
    if not isinstance(sweep_raw, list):
        raise ConfigError("expected a list of potential objects", "sweep")
    sweep = [_potential(p, f"sweep[{i}]") for i, p in enumerate(sweep_raw)]
    norm["sweep"] = [s.to_dict() for s in sweep]

    return ExperimentConfig(
        potential=spec,
        grid=grid,
        solver=sections["solver"],
        spectral=sections["spectral"],
        dynamics=sections["dynamics"],
        pinning_potential=V,
        pinning_eps=clean,
        outputs=norm["outputs"],
        sweep=sweep,
        raw=norm,
    )


def loads_config(text: str, base: Path | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, column=exc.colno) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return parse_config(raw, base)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return loads_config(path.read_text(), base=path.parent)


def default_config_text() -> str:
    return resources.files("wallforge").joinpath("data/default_config.json").read_text()


def default_config() -> ExperimentConfig:
    return loads_config(default_config_text())


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Re-validate the config with dotted-path overrides such as ``dynamics.T=5``."""
    raw = copy.deepcopy(cfg.raw)
    for dotted, value in changes.items():
        if value is None:
            continue
        node = raw
        *head, last = dotted.split(".")
        for part in head:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        node[last] = value
    if raw.get("grid") is None:
        raw.pop("grid", None)
    return parse_config(raw)
