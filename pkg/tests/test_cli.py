import json
import subprocess
import sys

import numpy as np
import pytest

from wallforge import __version__
from wallforge.cli import main, report_text
from wallforge.config import config_hash, default_config, load_config, loads_config, with_overrides
from wallforge.discretization import read_field_csv
from wallforge.errors import ConfigError

SMALL = {
    "potential": {"kind": "symmetric-cubic", "gamma": 3.0},
    "grid": {"L": 12.0, "N": 1199},
    "dynamics": {"T": 0.2, "dt": 0.002},
    "pinning": {"potential": {"kind": "sech2", "a": 1.0, "b": 2.0}, "eps": [0.002]},
}


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*argv):
    return main([str(a) for a in argv])


# -- configuration ----------------------------------------------------------------


def test_default_config_loads():
    cfg = default_config()
    assert cfg.potential.gamma == 3.0
    assert cfg.grid.N == 8191
    assert len(cfg.config_hash) == 64


def test_hash_ignores_key_order_and_defaults():
    a = loads_config('{"potential": {"gamma": 3, "kind": "symmetric-cubic"}, "solver": {"tol": 1e-10}}')
    b = loads_config('{"solver": {"tol": 1e-10}, "potential": {"kind": "symmetric-cubic", "gamma": 3.0}}')
    c = loads_config('{"potential": {"kind": "symmetric-cubic", "gamma": 3.0}}')
    assert a.config_hash == b.config_hash == c.config_hash
    d = loads_config('{"potential": {"kind": "symmetric-cubic", "gamma": 3.5}}')
    assert d.config_hash != a.config_hash


@pytest.mark.parametrize(
    "text, path",
    [
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 0.5}}', "potential"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "extra": 1}', "extra"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "solver": {"tolerance": 1}}', "solver.tolerance"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "grid": {"L": 10, "N": 100}}', "grid.N"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "dynamics": {"dt": -1}}', "dynamics.dt"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "spectral": {"k": 2.5}}', "spectral.k"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "pinning": {"eps": [0.01, 0.3]}}', "pinning.eps[1]"),
        ('{"potential": {"kind": "symmetric-cubic", "gamma": 3}, "pinning": {"potential": {"kind": "sech2", "b": -1}}}',
         "pinning.potential"),
        ('{"grid": {"L": 10, "N": 101}}', "potential"),
    ],
)
def test_invalid_configs_name_the_field(text, path):
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert info.value.path == path


def test_parse_errors_report_position():
    with pytest.raises(ConfigError) as info:
        loads_config('{\n  "potential": {"kind": "symmetric-cubic",\n  "gamma": 3,}\n}')
    assert info.value.line == 3
    with pytest.raises(ConfigError, match="duplicate"):
        loads_config('{"potential": {"kind": "quartic", "gamma": 2, "gamma": 3}}')


def test_tabulated_potential_file(tmp_path):
    x = np.linspace(-10, 10, 401)
    table = tmp_path / "v.csv"
    table.write_text("x,V\n" + "\n".join(f"{a},{b}" for a, b in zip(x.tolist(), np.exp(-x * x).tolist())))
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({**SMALL, "pinning": {"potential": {"kind": "tabulated", "file": "v.csv"}}}))
    with pytest.warns(UserWarning):
        cfg = load_config(cfg_path)
    assert cfg.pinning_potential.kind == "tabulated"
    cfg_path.write_text(json.dumps({**SMALL, "pinning": {"potential": {"kind": "tabulated", "file": "nope.csv"}}}))
    with pytest.raises(ConfigError, match="does not exist") as info:
        load_config(cfg_path)
    assert info.value.path == "pinning.potential.file"


def test_overrides_revalidate():
    cfg = loads_config(json.dumps(SMALL))
    assert with_overrides(cfg, **{"dynamics.T": 3.0}).dynamics["T"] == 3.0
    with pytest.raises(ConfigError):
        with_overrides(cfg, **{"dynamics.dt": 0.0})


# -- commands ---------------------------------------------------------------------


def test_gamma_below_one_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"potential": {"kind": "symmetric-cubic", "gamma": 0.5}}')
    assert run("solve", "--config", p) == 2
    err = capsys.readouterr().err
    assert "gamma > 1" in err


def test_missing_config_exits_2(tmp_path):
    assert run("solve", "--config", tmp_path / "none.json") == 2


def test_solve_spectrum_round_trip(tmp_path, small_config):
    wall, rep, spec_rep, eig = (tmp_path / n for n in ("wall.csv", "solve.json", "spec.json", "eig.csv"))
    assert run("solve", "--config", small_config, "--out", wall, "--report", rep) == 0
    assert run("spectrum", "--config", small_config, "--wall", wall, "--report", spec_rep, "--k", 4, "--out", eig) == 0
    s = json.loads(spec_rep.read_text())
    assert s["result"]["reloaded_residual_sup"] <= 1e-9
    assert s["result"]["verdict"] == "stable"
    assert len(s["result"]["lplus_eigs"]) == 4
    assert s["version"] == __version__
    assert s["config_hash"] == load_config(small_config).config_hash
    header = eig.read_text().splitlines()[0].split(",")
    assert header[:3] == ["x", "phi1_0", "phi2_0"]


def test_reports_are_byte_identical(tmp_path, small_config):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("solve", "--config", small_config, "--report", a) == 0
    assert run("solve", "--config", small_config, "--report", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_spectrum_rejects_mismatched_wall(tmp_path, small_config):
    wall = tmp_path / "w.csv"
    wall.write_text("x,u1,u2\n-1,0,2\n-0.5,0.1,1.5\n0,0.5,0.5\n0.5,0.9,0.1\n1,1,0\n")
    assert run("spectrum", "--config", small_config, "--wall", wall) == 2


def test_evolve_writes_trace(tmp_path, small_config):
    trace, rep, final = tmp_path / "t.csv", tmp_path / "e.json", tmp_path / "f.csv"
    assert run("evolve", "--config", small_config, "--trace", trace, "--report", rep, "--out", final,
               "--eps", 0.01, "--seed", 3) == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "t,alpha,theta1,theta2,rho,energy,G"
    r = json.loads(rep.read_text())["result"]
    assert r["verdict"] == "PASS" and r["settings"]["seed"] == 3
    assert read_field_csv(final).grid.N == 1199


def test_evolve_rejects_bad_times(small_config):
    assert run("evolve", "--config", small_config, "--T", 0.1, "--dt", 1.0) == 2


def test_pin_with_potential_flag(tmp_path, small_config):
    rep, out = tmp_path / "p.json", tmp_path / "pinned.csv"
    assert run("pin", "--config", small_config, "--potential", '{"kind":"sech2","a":-1,"b":2}',
               "--eps", 0.002, "--report", rep, "--out", out) == 0
    r = json.loads(rep.read_text())["result"]["runs"][0]
    assert r["verdict"] == "unstable" and r["negative_count"] == 1
    assert out.exists()
    assert run("pin", "--config", small_config, "--potential", "{not json") == 2
    assert run("pin", "--config", small_config, "--eps", 0.5) == 2


def test_validate_default_config(tmp_path):
    rep = tmp_path / "v.json"
    assert run("validate", "--report", rep) == 0
    doc = json.loads(rep.read_text())
    assert doc["result"]["passed"]
    assert set(doc["result"]["summary"]) == {
        "axioms", "exact_regression", "wall_properties", "spectral", "pinning", "stationary_dynamics"
    }


def test_thread_env_validated(monkeypatch, small_config):
    monkeypatch.setenv("WALLFORGE_THREADS", "zero")
    assert run("solve", "--config", small_config) == 2


def test_nan_becomes_null():
    cfg = loads_config(json.dumps(SMALL))
    text = report_text("x", cfg, {"a": float("nan"), "b": np.float64(1.5), "c": np.arange(2)})
    assert json.loads(text)["result"] == {"a": None, "b": 1.5, "c": [0, 1]}
    assert json.loads(text)["config_hash"] == config_hash(cfg.raw)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wallforge.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "wallforge.cli", "solve", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
