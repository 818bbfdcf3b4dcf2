"""Batch command line: ``stochbond <command> --config cfg.json --out dir``.

Every run writes its result files plus ``manifest.json`` (config hash, seed,
package version, timestamp).  Result files hold no timestamps, so the same
config and seed give byte-identical results.  Exit codes: 0 success,
1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import __version__
from . import measures as M
from .coefficients import MarketCoefficients, derive, validate
from .decompose import decompose_markov, gains_z, lrm_orthogonality_check, orthogonal_claim
from .errors import StochBondError
from .extremes import deflate_error, error_baseline, inflate_error, price_sweep
from .pde import GridSpec, error_moment_pde, solve_H
from .pricing import Claim, mean_se, price
from .simulate import TimeGrid, self_financing_beta, simulate_paths, simulate_terminal

COMMANDS = ("price", "hedge", "sweep", "error-moment", "pde-solve", "validate", "repro")

MAIN_MARKET = {"a": 0.10, "sigma": 0.20, "r": 0.05, "rho": 0.01, "rho_tilde": 0.01}

DEFAULT_CONFIG = {
    "coefficients": MAIN_MARKET,
    "claim": {"kind": "put", "strike": 1.0},
    "measure": {"rule": "min_norm"},
    "engine": {"n_paths": 100000, "n_steps": 256, "T": 1.0, "S0": 1.0, "B0": 1.0, "antithetic": True, "seed": 20240601},
    "grid": {},
    "K_list": [1.0, 2.0, 5.0, -1.0, -2.0, -5.0],
}


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------- output


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    if x == int(x) and abs(x) < 1e15:
        return f"{x:.1f}"
    return f"{x:.17g}"


def dumps(obj, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in seq) + "\n" + "  " * indent + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return json.dumps(str(obj))


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj) + "\n", encoding="utf-8", newline="\n")


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(row[h]) for h in header))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    x = float(v)
    return "" if not math.isfinite(x) else f"{x:.17g}"


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


class Experiment:
    """Parsed config: market, claim, measure and engine settings."""

    def __init__(self, cfg: dict, need_seed: bool = True):
        try:
            self.mc = MarketCoefficients.from_json(cfg["coefficients"])
            self.claim = Claim.from_json(cfg.get("claim", {"kind": "put", "strike": 1.0}))
            eng = dict(cfg.get("engine", {}))
            self.n_paths = int(eng.get("n_paths", 100000))
            self.grid = TimeGrid(float(eng.get("T", 1.0)), int(eng.get("n_steps", 256)))
            self.S0 = float(eng.get("S0", 1.0))
            self.B0 = float(eng.get("B0", 1.0))
            self.antithetic = bool(eng.get("antithetic", True))
            seed = eng.get("seed", cfg.get("seed"))
            if need_seed and seed is None:
                raise ConfigError("engine.seed is mandatory")
            self.seed = None if seed is None else int(seed)
            if self.seed is not None and not 0 <= self.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            self.grid_spec = GridSpec.from_json({"T": self.grid.T, **cfg.get("grid", {})})
            self.measure_block = cfg.get("measure", {"rule": "min_norm"})
            self.cfg = cfg
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from exc

    def shift(self):
        try:
            return M.from_json(self.measure_block, self.mc)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------- helpers


def _moments(x):
    """Mean and variance with their standard errors."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    m = x.mean()
    c = x - m
    var = float(np.mean(c**2) * n / (n - 1))
    m4 = float(np.mean(c**4))
    return {"mean": float(m), "mean_se": float(np.sqrt(var / n)), "var": var, "var_se": float(np.sqrt(max(m4 - var**2, 0.0) / n))}


def _z(est, target, se):
    return abs(est - target) / se if se > 0 else (0.0 if est == target else float("inf"))


def _pde_tolerance(mc, shift, claim, spec, S0, B0, value):
    """Grid error proxy ``|H(n) - H(n/2)|`` at the initial state."""
    coarse = dataclasses.replace(spec, n_s=(spec.n_s + 1) // 2, n_b=(spec.n_b + 1) // 2, n_t=max(spec.n_t // 2, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return abs(value - solve_H(mc, shift, claim, coarse, S0=S0, B0=B0).at_origin())


def _sweep_rows(res, n_paths):
    rows = []
    for row in res.rows():
        K = row["K"]
        if res.claim_kind == "put":
            bound = row["upper_bound"] if K > 0 else row["lower_bound"]
        else:
            bound = row["lower_bound"]
        rows.append({**row, "bound": bound, "ess": float(n_paths), "upper_ci99": row["estimate"] + norm.ppf(0.995) * row["se"]})
    return rows


SWEEP_HEADER = ["K", "estimate", "se", "bound", "ess", "lower_bound", "upper_bound"]
ERROR_HEADER = ["K", "construction", "estimate", "se", "bound", "ess", "baseline", "reweight_estimate", "stop_fraction", "markov_bound"]


def _error_rows(results):
    return [{**r.to_json(), "ess": r.ess} for r in results]


# --------------------------------------------------------------------------- commands


def cmd_validate(exp: Experiment, out: Path, threads):
    report = validate(exp.mc, k_family=exp.measure_block.get("rule") == "k_family", T=exp.grid.T)
    write_json(out / "result.json", {"ok": report.ok, **report.to_json()})
    return 0 if report.ok else 1


def cmd_price(exp: Experiment, out: Path, threads):
    shift = exp.shift()
    res = price(exp.mc, exp.claim, shift, exp.grid, exp.n_paths, exp.seed, S0=exp.S0, B0=exp.B0, antithetic=exp.antithetic, workers=threads)
    write_json(out / "result.json", {**res.to_json(), "claim": exp.claim.to_json()})
    return 0


def cmd_hedge(exp: Experiment, out: Path, threads):
    shift = exp.shift()
    sol = solve_H(exp.mc, shift, exp.claim, exp.grid_spec, S0=exp.S0, B0=exp.B0)
    n = min(exp.n_paths, 20000)
    bundle = simulate_paths(exp.mc, exp.grid, n, exp.seed, shift, S0=exp.S0, B0=exp.B0, workers=threads)
    dec = decompose_markov(exp.mc, exp.claim, shift, sol, bundle)
    gamma = np.concatenate([dec.gamma, dec.gamma[:, -1:]], axis=1)
    beta = self_financing_beta(bundle, gamma, dec.c_theta * exp.B0)
    rows = [{"t": t, "mean_gamma": g, "mean_beta": b} for t, g, b in zip(exp.grid.times, gamma.mean(axis=0), beta.mean(axis=0))]
    write_csv(out / "hedge.csv", ["t", "mean_gamma", "mean_beta"], rows)
    r2, r2_se = dec.E_R2()
    record = {
        "c_theta": dec.c_theta,
        "c_theta_tolerance": _pde_tolerance(exp.mc, shift, exp.claim, exp.grid_spec, exp.S0, exp.B0, dec.c_theta),
        "E_R2": r2,
        "E_R2_se": r2_se,
        "corr_R_I_z": dec.corr_R_I_z(),
        "n_paths": n,
        "measure": shift.tag,
    }
    write_json(out / "result.json", record)
    return 0


def cmd_sweep(exp: Experiment, out: Path, threads):
    Ks = exp.cfg.get("K_list")
    if not Ks:
        raise ConfigError("sweep needs a non-empty K_list")
    res = price_sweep(exp.mc, exp.claim, Ks, exp.grid, exp.n_paths, exp.seed, S0=exp.S0, B0=exp.B0, antithetic=exp.antithetic, workers=threads)
    rows = _sweep_rows(res, exp.n_paths)
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    write_json(out / "result.json", {"claim": exp.claim.to_json(), "rows": rows, "n_paths": exp.n_paths})
    return 0


def cmd_error_moment(exp: Experiment, out: Path, threads):
    shift = exp.shift()
    sol = solve_H(exp.mc, shift, exp.claim, exp.grid_spec, S0=exp.S0, B0=exp.B0)
    em = error_moment_pde(sol, exp.grid_spec)
    n = min(exp.n_paths, 20000)
    bundle = simulate_paths(exp.mc, exp.grid, n, exp.seed, None, S0=exp.S0, B0=exp.B0, workers=threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_markov(exp.mc, exp.claim, shift, sol, bundle)
    r2, r2_se = dec.E_R2()
    results = []
    base = error_baseline(dec, bundle) if exp.cfg.get("inflate") or exp.cfg.get("deflate") else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results += [inflate_error(dec, K, bundle, baseline=base) for K in exp.cfg.get("inflate", [])]
        results += [deflate_error(dec, K, bundle, baseline=base) for K in exp.cfg.get("deflate", [])]
    if results:
        write_csv(out / "error_moment.csv", ERROR_HEADER, _error_rows(results))
    write_json(out / "result.json", {
        "E_R2_pde": em.value,
        "E_R2_pde_tolerance": abs(em.value - r2),
        "E_R2_mc_P": r2,
        "E_R2_mc_P_se": r2_se,
        "measure": shift.tag,
        "constructions": [r.to_json() for r in results],
    })
    return 0


def cmd_pde_solve(exp: Experiment, out: Path, threads):
    shift = exp.shift()
    sol = solve_H(exp.mc, shift, exp.claim, exp.grid_spec, S0=exp.S0, B0=exp.B0)
    sol.to_csv(out / "grid_t0.csv", 0)
    h = sol.at_origin()
    write_json(out / "result.json", {
        "H0": h,
        "H0_tolerance": _pde_tolerance(exp.mc, shift, exp.claim, exp.grid_spec, exp.S0, exp.B0, h),
        "s_range": list(sol.s_range),
        "b_range": list(sol.b_range),
        "n_s": len(sol.s_nodes),
        "n_b": len(sol.b_nodes),
        "n_t": len(sol.t_nodes),
        "measure": shift.tag,
    })
    return 0


# --------------------------------------------------------------------------- canned experiments


def _mc(**over):
    return MarketCoefficients.from_json({**MAIN_MARKET, **over})


def repro_bs_limit(seed, threads):
    mc = _mc(a=0.05, r=0.0, rho=0.0, rho_tilde=0.0)
    shift = M.min_norm(mc)
    claim = Claim.put(1.0)
    oracle = float(2 * norm.cdf(0.1) - 1)
    res = price(mc, claim, shift, TimeGrid(1.0, 256), 100000, seed, antithetic=True, workers=threads)
    spec = GridSpec()
    h = solve_H(mc, shift, claim, spec).at_origin()
    return {
        "oracle": oracle,
        "mc_price": res.c_theta,
        "mc_se": res.se,
        "mc_z": _z(res.c_theta, oracle, res.se),
        "n_paths": res.n_paths,
        "pde_price": h,
        "pde_abs_error": abs(h - oracle),
        "pde_tolerance": _pde_tolerance(mc, shift, claim, spec, 1.0, 1.0, h),
    }, {}


def _repro_sweep(claim, Ks, seed, threads):
    mc = _mc()
    res = price_sweep(mc, claim, Ks, TimeGrid(1.0, 256), 100000, seed, antithetic=True, workers=threads)
    rows = _sweep_rows(res, 100000)
    return {"claim": claim.to_json(), "rows": rows, "n_paths": 100000, "S_tilde0": 1.0}, {"sweep.csv": (SWEEP_HEADER, rows)}


def repro_thm41(seed, threads):
    return _repro_sweep(Claim.put(1.0), [1.0, 2.0, 5.0, -1.0, -2.0, -5.0], seed, threads)


def repro_thm42(seed, threads):
    return _repro_sweep(Claim.call(1.0), [-1.0, -2.0, -5.0, 1.0, 2.0, 5.0], seed, threads)


def _error_setup(seed, threads):
    mc = _mc()
    shift = M.min_norm(mc)
    claim = Claim.put(1.0)
    sol = solve_H(mc, shift, claim, GridSpec())
    bundle = simulate_paths(mc, TimeGrid(1.0, 256), 20000, seed, None, workers=threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_markov(mc, claim, shift, sol, bundle)
    return dec, bundle


def _repro_error(kind, Ks, seed, threads):
    dec, bundle = _error_setup(seed, threads)
    base = error_baseline(dec, bundle)
    fn = inflate_error if kind == "inflate" else deflate_error
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = [fn(dec, K, bundle, baseline=base) for K in Ks]
    rows = _error_rows(results)
    return {"baseline": base[0], "baseline_se": base[1], "rows": rows, "n_paths": bundle.n_paths, "n_steps": bundle.grid.n_steps}, {
        "error_moment.csv": (ERROR_HEADER, rows)
    }


def repro_thm43(seed, threads):
    return _repro_error("inflate", [1.0, 2.0, 5.0, 10.0], seed, threads)


def repro_thm44(seed, threads):
    return _repro_error("deflate", [1.0, 10.0, 100.0], seed, threads)


def _repro_moments(rule, which, seed, threads):
    mc = _mc()
    d = derive(mc)
    T = 1.0
    grid = TimeGrid(T, 64)
    shift = getattr(M, rule)(mc)
    n = 100000
    s_P, b_P = simulate_terminal(mc, grid, n, seed, None, workers=threads)
    s_Q, b_Q = simulate_terminal(mc, grid, n, seed + 1, shift, workers=threads)
    if which == "log_B":
        x_P, x_Q = b_P, b_Q
        exact = {"mean": float((d.r - d.rho**2 / 2 - d.rho_t**2 / 2) * T), "var": float((d.rho**2 + d.rho_t**2) * T)}
    else:
        x_P, x_Q = s_P + b_P, s_Q + b_Q
        exact = {"mean": float((d.a - d.sigma**2 / 2) * T), "var": float(d.sigma**2 * T)}
    mP, mQ = _moments(x_P), _moments(x_Q)
    return {
        "measure": shift.tag,
        "theta": list(shift.theta()),
        "quantity": which,
        "historical_exact": exact,
        "historical_sampled": mP,
        "shifted_sampled": mQ,
        "z_mean_vs_exact": _z(mQ["mean"], exact["mean"], mQ["mean_se"]),
        "z_var_vs_exact": _z(mQ["var"], exact["var"], mQ["var_se"]),
        "z_mean_two_sample": _z(mQ["mean"], mP["mean"], math.hypot(mQ["mean_se"], mP["mean_se"])),
        "z_var_two_sample": _z(mQ["var"], mP["var"], math.hypot(mQ["var_se"], mP["var_se"])),
        "n_paths": n,
    }, {}


def repro_thm51(seed, threads):
    return _repro_moments("bond_consensus", "log_B", seed, threads)


def repro_thm52(seed, threads):
    return _repro_moments("stock_consensus", "log_S", seed, threads)


def repro_thm53(seed, threads):
    mc = _mc()
    d = derive(mc)
    th_min = M.min_norm(mc).theta()
    rng = np.random.Generator(np.random.Philox(seed))
    th1 = rng.uniform(-50.0, 50.0, 1000)
    th2 = (d.a_t - d.V[0] * th1) / d.V[1]
    feas = np.abs(th1 * d.V[0] + th2 * d.V[1] - d.a_t)
    gaps = np.hypot(th1, th2) - np.linalg.norm(th_min)
    claim = Claim.put(1.0)
    grid = TimeGrid(1.0, 128)
    bundle = simulate_paths(mc, grid, 20000, seed, None, workers=threads)
    out = {
        "theta_min_norm": list(th_min),
        "n_candidates": 1000,
        "max_feasibility_residual": float(feas.max()),
        "min_norm_gap": float(gaps.min()),
        "n_violations": int(np.sum(gaps < 0)),
    }
    for rule in ("min_norm", "bond_consensus"):
        shift = getattr(M, rule)(mc)
        sol = solve_H(mc, shift, claim, GridSpec())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dec = decompose_markov(mc, claim, shift, sol, bundle)
        out[f"cov_R_M_z_{rule}"] = lrm_orthogonality_check(dec)
    return out, {}


def repro_thm31(seed, threads):
    mc = _mc()
    shift = M.k_family(mc, 0.05)
    claim = Claim.put(1.0)
    sol = solve_H(mc, shift, claim, GridSpec())
    bundle = simulate_paths(mc, TimeGrid(1.0, 128), 20000, seed, shift, workers=threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_markov(mc, claim, shift, sol, bundle)
    zeta = orthogonal_claim(mc, shift, bundle)
    d = derive(mc)
    z_mean, z_se = mean_se(zeta)
    z2, z2_se = mean_se(zeta**2)
    target = float((d.rho_t**2 + d.sigma_t**2) * bundle.grid.T)
    return {
        "measure": shift.tag,
        "c_theta": dec.c_theta,
        "corr_R_I_z": dec.corr_R_I_z(),
        "eta_dot_V_max": dec.eta_dot_V_max(),
        "pythagoras": dec.pythagoras(),
        "zeta_mean": z_mean,
        "zeta_mean_se": z_se,
        "zeta_second_moment": z2,
        "zeta_second_moment_se": z2_se,
        "zeta_second_moment_target": target,
        "zeta_gains_z": gains_z(zeta, bundle, dec.gamma),
        "n_paths": bundle.n_paths,
    }, {}


def repro_thm32(seed, threads):
    mc = _mc(rho_tilde=0.0)
    shift = M.min_norm(mc)
    claim = Claim.call(1.0)
    sol = solve_H(mc, shift, claim, GridSpec())
    rows = []
    for n_steps in (64, 128, 256):
        bundle = simulate_paths(mc, TimeGrid(1.0, n_steps), 20000, seed, shift, workers=threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dec = decompose_markov(mc, claim, shift, sol, bundle)
        h2, h2_se = dec.E_hedge_error2()
        r2, r2_se = dec.E_R2()
        x2, x2_se = mean_se(dec.xi**2)
        rows.append({
            "n_steps": n_steps,
            "E_residual2": h2,
            "E_residual2_se": h2_se,
            "E_eta_integral2": r2,
            "E_eta_integral2_se": r2_se,
            "E_xi2": x2,
            "E_xi2_se": x2_se,
            "ratio": h2 / x2,
        })
    return {"measure": shift.tag, "c_theta": sol.at_origin(), "rows": rows, "n_paths": 20000}, {
        "completeness.csv": (list(rows[0]), rows)
    }


REPRO = {
    "bs-limit": repro_bs_limit,
    "thm3.1": repro_thm31,
    "thm3.2": repro_thm32,
    "thm4.1": repro_thm41,
    "thm4.2": repro_thm42,
    "thm4.3": repro_thm43,
    "thm4.4": repro_thm44,
    "thm5.1": repro_thm51,
    "thm5.2": repro_thm52,
    "thm5.3": repro_thm53,
}
REPRO_SEED = 20240601


# --------------------------------------------------------------------------- entry


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("STOCHBOND_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"STOCHBOND_THREADS={env!r} is not an integer") from exc
    return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochbond", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("repro_id", nargs="?", help="experiment id for the repro command")
    p.add_argument("--config", help="JSON experiment config (default: built-in)")
    p.add_argument("--out", default="stochbond-out", help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, help="worker threads (fallback: STOCHBOND_THREADS)")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out = Path(args.out)
    try:
        threads = _threads(args.threads)
        if args.command == "repro":
            if args.repro_id not in REPRO:
                raise ConfigError(f"unknown repro id {args.repro_id!r}; expected one of {sorted(REPRO)}")
            seed = REPRO_SEED if args.seed is None else args.seed
            cfg = {"repro": args.repro_id, "seed": seed}
        else:
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.setdefault("engine", {})["seed"] = args.seed
            exp = Experiment(cfg, need_seed=args.command not in ("validate", "pde-solve"))
            seed = exp.seed
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, StochBondError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "repro":
            record, tables = REPRO[args.repro_id](seed, threads)
            record = {"id": args.repro_id, "seed": seed, **record}
            write_json(out / f"{args.repro_id}.json", record)
            for name, (header, rows) in tables.items():
                write_csv(out / f"{args.repro_id}_{name}", header, rows)
            code = 0
        else:
            code = globals()["cmd_" + args.command.replace("-", "_")](exp, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (StochBondError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    manifest = {
        "command": args.command,
        "repro_id": args.repro_id,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": time.perf_counter() - started,
        "exit_code": code,
    }
    write_json(out / "manifest.json", manifest)
    return code


def main() -> None:
    sys.exit(run())
