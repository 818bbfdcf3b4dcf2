import json
import subprocess
import sys

import numpy as np
import pytest

from stochbond.cli import dumps, run

SMALL = {
    "coefficients": {"a": 0.10, "sigma": 0.20, "r": 0.05, "rho": 0.01, "rho_tilde": 0.01},
    "claim": {"kind": "put", "strike": 1.0},
    "measure": {"rule": "min_norm"},
    "engine": {"n_paths": 2000, "n_steps": 16, "seed": 7},
    "grid": {"n_s": 41, "n_b": 21, "n_t": 16},
    "K_list": [-1.0, 1.0],
    "inflate": [1.0],
    "deflate": [5.0],
}


def config(tmp_path, **over):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, **over}))
    return str(p)


def load(path):
    return json.loads(path.read_text())


def test_validate_default(tmp_path):
    assert run(["validate", "--out", str(tmp_path)]) == 0
    assert load(tmp_path / "result.json")["ok"] is True
    assert load(tmp_path / "manifest.json")["exit_code"] == 0


def test_validate_bad_market(tmp_path):
    bad = {"a": 0.1, "sigma": 0.01, "r": 0.05, "rho": 0.01, "rho_tilde": 0.0}
    assert run(["validate", "--config", config(tmp_path, coefficients=bad), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("cfg", ["{not json", "[1, 2]", '{"claim": {}}'])
def test_config_errors(tmp_path, cfg, capsys):
    p = tmp_path / "bad.json"
    p.write_text(cfg)
    assert run(["price", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_seed(tmp_path):
    cfg = config(tmp_path, engine={"n_paths": 100, "n_steps": 4})
    assert run(["price", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert run(["price", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o")]) == 0


def test_unknown_repro(tmp_path):
    assert run(["repro", "nope", "--out", str(tmp_path)]) == 1


def test_price(tmp_path):
    assert run(["price", "--config", config(tmp_path), "--out", str(tmp_path)]) == 0
    res = load(tmp_path / "result.json")
    assert res["se"] > 0 and 0 < res["c_theta"] < 1


def test_sweep(tmp_path):
    assert run(["sweep", "--config", config(tmp_path), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "K,estimate,se,bound,ess,lower_bound,upper_bound" and len(lines) == 3


def test_hedge(tmp_path):
    assert run(["hedge", "--config", config(tmp_path), "--out", str(tmp_path)]) == 0
    assert {"c_theta", "E_R2", "corr_R_I_z"} <= set(load(tmp_path / "result.json"))
    assert (tmp_path / "hedge.csv").read_text().startswith("t,mean_gamma,mean_beta\n")


def test_error_moment(tmp_path):
    assert run(["error-moment", "--config", config(tmp_path), "--out", str(tmp_path)]) == 0
    res = load(tmp_path / "result.json")
    assert res["E_R2_pde"] > 0 and len(res["constructions"]) == 2
    assert (tmp_path / "error_moment.csv").exists()


def test_pde_solve_needs_no_seed(tmp_path):
    cfg = config(tmp_path, engine={})
    assert run(["pde-solve", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert load(tmp_path / "result.json")["H0_tolerance"] >= 0
    assert (tmp_path / "grid_t0.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    cfg = config(tmp_path)
    for name in ("a", "b"):
        assert run(["sweep", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("result.json", "sweep.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_threads_env(tmp_path, monkeypatch):
    cfg = config(tmp_path, engine={"n_paths": 20000, "n_steps": 4, "seed": 1})
    assert run(["price", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("STOCHBOND_THREADS", "3")
    assert run(["price", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "result.json").read_bytes() == (tmp_path / "b" / "result.json").read_bytes()
    monkeypatch.setenv("STOCHBOND_THREADS", "many")
    assert run(["price", "--config", cfg, "--out", str(tmp_path / "c")]) == 1


def test_dumps_format():
    out = dumps({"b": 1.0, "a": np.float64(0.1), "c": float("nan"), "d": [2, np.int64(3)]})
    assert json.loads(out) == {"a": 0.1, "b": 1.0, "c": None, "d": [2, 3]}
    assert out.index('"a"') < out.index('"b"')


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stochbond", "validate", "--out", str(tmp_path)], capture_output=True)
    assert proc.returncode == 0
