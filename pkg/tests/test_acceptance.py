"""Acceptance criteria 1-11, one PASS/FAIL line each.

Run ``python3 tests/test_acceptance.py`` for the report, or
``pytest tests/test_acceptance.py -s`` to see the lines under pytest.
Most criteria read the records written by ``stochbond repro``; criteria 2
and 10 call the library directly.
"""

from __future__ import annotations

import json
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pytest

from stochbond import measures as M
from stochbond.cli import REPRO, run
from stochbond.coefficients import MarketCoefficients
from stochbond.decompose import decompose_markov, mean_se
from stochbond.pde import error_moment_pde, solve_H
from stochbond.pricing import Claim, martingale_diagnostics, price
from stochbond.simulate import TimeGrid, simulate_paths

BS_ORACLE = 0.0796556745540580  # zero-rate ATM put, sigma = 0.2, T = 1
HEADLINE = dict(a=0.10, sigma=0.20, r=0.05, rho=0.01, rho_tilde=0.01)
MODERATE = dict(a=0.12, sigma=0.6, r=0.03, rho=0.15, rho_tilde=0.45)


def run_repros(out: Path) -> Path:
    for rid in REPRO:
        code = run(["repro", rid, "--out", str(out / rid)])
        if code != 0:
            raise RuntimeError(f"repro {rid} exited with {code}")
    return out


def record(root: Path, rid: str) -> dict:
    return json.loads((root / rid / f"{rid}.json").read_text())


def elapsed(root: Path, rid: str) -> float:
    return json.loads((root / rid / "manifest.json").read_text())["elapsed_s"]


# --- criteria ------------------------------------------------------------------


def criterion_1(root):
    r = record(root, "bs-limit")
    t = elapsed(root, "bs-limit")
    ok = (
        abs(r["mc_price"] - BS_ORACLE) <= 3 * r["mc_se"]
        and r["mc_se"] <= 5e-4
        and abs(r["pde_price"] - BS_ORACLE) <= 1e-3
        and t <= 30
    )
    return ok, f"MC {r['mc_price']:.5f} (SE {r['mc_se']:.1e}), PDE error {abs(r['pde_price'] - BS_ORACLE):.1e}, {t:.1f}s"


def criterion_2(root=None):
    mc = MarketCoefficients.constant(**MODERATE)
    grid = TimeGrid(0.5, 16)
    shifts = [M.k_family(mc, 0.5), M.k_family(mc, -0.5), M.bond_consensus(mc), M.stock_consensus(mc), M.min_norm(mc)]
    bundle = simulate_paths(mc, grid, 100_000, 2)
    worst_s = worst_z = 0.0
    for shift in shifts:
        worst_s = max(worst_s, martingale_diagnostics(mc, shift, grid, 100_000, 1)["stilde_z"])
        m, se = mean_se(M.density_along(shift, bundle))
        worst_z = max(worst_z, abs(m - 1.0) / se)
    return worst_s <= 3 and worst_z <= 3, f"max z: S~(T) {worst_s:.2f}, Z_theta {worst_z:.2f}"


def criterion_3(root):
    rows = record(root, "thm4.1")["rows"]
    t = elapsed(root, "thm4.1")
    pos = [r for r in rows if r["K"] > 0]
    neg = sorted((r for r in rows if r["K"] < 0), key=lambda r: -r["K"])
    ok_pos = all(r["upper_ci99"] < np.exp(-r["K"]) for r in pos)
    ok_neg = all(r["estimate"] >= r["lower_bound"] - 3 * r["se"] for r in neg)
    ok_inc = all(b["estimate"] > a["estimate"] for a, b in zip(neg, neg[1:]))
    return ok_pos and ok_neg and ok_inc and t <= 120, (
        f"K>0 upper CI {[round(r['upper_ci99'], 4) for r in pos]}, "
        f"K<0 {[round(r['estimate'], 3) for r in neg]} vs bounds {[round(r['lower_bound'], 3) for r in neg]}, {t:.1f}s"
    )


def criterion_4(root):
    rec = record(root, "thm4.2")
    St0 = rec["S_tilde0"]
    rows = rec["rows"]
    neg = [r for r in rows if r["K"] < 0]
    pos = sorted((r for r in rows if r["K"] in (2.0, 5.0)), key=lambda r: r["K"])
    # S~(0) - delta_K is the call lower bound (S~(0) - e^{-KT} strike / B(0))^+
    ok_neg = all(r["lower_bound"] - 3 * r["se"] <= r["estimate"] <= St0 + 3 * r["se"] for r in neg)
    ok_pos = all(r["estimate"] <= 0.2 for r in pos) and pos[1]["estimate"] < pos[0]["estimate"]
    return ok_neg and ok_pos, (
        f"K<0 {[round(r['estimate'], 4) for r in neg]} in interval: {ok_neg}; "
        f"K=2,5 {[round(r['estimate'], 4) for r in pos]} <= 0.2 and decreasing: {ok_pos} "
        "(parity forces call = put + 1 - e^-K here)"
    )


def criterion_5(root):
    rows = record(root, "thm3.2")["rows"]
    r2 = [r["E_residual2"] for r in rows]
    ok = all(b < a for a, b in zip(r2, r2[1:])) and rows[-1]["E_residual2"] <= 1e-3 * rows[-1]["E_xi2"]
    ratios = ", ".join(f"{r['ratio']:.2e}" for r in rows)
    return ok, f"E R^2 / E xi^2 at 64/128/256 steps: {ratios}"


def criterion_6(root):
    r = record(root, "thm3.1")
    ok = abs(r["corr_R_I_z"]) <= 3 and r["eta_dot_V_max"] <= 1e-10 and r["pythagoras"]["z"] <= 3
    return ok, f"corr z {r['corr_R_I_z']:.2f}, max |eta.V| {r['eta_dot_V_max']:.1e}, Pythagoras z {r['pythagoras']['z']:.2f}"


def criterion_7(root):
    r = record(root, "thm5.3")
    ok = r["n_violations"] == 0 and r["max_feasibility_residual"] <= 1e-9 and abs(r["cov_R_M_z_min_norm"]) <= 3
    return ok, f"{r['n_violations']} of {r['n_candidates']} shorter feasible shifts, cov(R, M) z {r['cov_R_M_z_min_norm']:.2f}"


def criterion_8(root):
    zs = []
    for rid in ("thm5.1", "thm5.2"):
        r = record(root, rid)
        zs += [r["z_mean_vs_exact"], r["z_var_vs_exact"]]
    return max(zs) <= 3, f"max z over (mean, var) of log B and log S: {max(zs):.2f}"


def criterion_9(root):
    inf = record(root, "thm4.3")
    dfl = record(root, "thm4.4")
    t = max(elapsed(root, "thm4.3"), elapsed(root, "thm4.4"))
    est = [r["estimate"] for r in sorted(inf["rows"], key=lambda r: r["K"])]
    k100 = next(r for r in dfl["rows"] if r["K"] == 100.0)
    ok = (
        all(b > a for a, b in zip(est, est[1:]))
        and est[-1] > 10 * inf["baseline"]
        and k100["estimate"] <= 0.1 * dfl["baseline"]
        and t <= 120
    )
    ratios = ", ".join(f"{e / inf['baseline']:.1f}" for e in est)
    return ok, (
        f"inflate/baseline {ratios}; "
        f"deflate K=100 / baseline {k100['estimate'] / dfl['baseline']:.4f}; slowest {t:.1f}s"
    )


def criterion_10(root=None):
    mc = MarketCoefficients.constant(**HEADLINE)
    shift = M.min_norm(mc)
    claim = Claim.put(1.0)
    sol = solve_H(mc, shift, claim)
    mc_price = price(mc, claim, shift, TimeGrid(1.0, 256), 100_000, 10)
    h = sol.at_origin()
    bundle = simulate_paths(mc, TimeGrid(1.0, 256), 20_000, 10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_markov(mc, claim, shift, sol, bundle)
    mc_r2 = dec.E_R2_historical().mean
    pde_r2 = error_moment_pde(sol).value
    rel = abs(pde_r2 - mc_r2) / abs(mc_r2)
    ok = abs(h - mc_price.c_theta) <= max(3 * mc_price.se, 2e-3) and rel <= 0.10
    return ok, f"price PDE {h:.5f} vs MC {mc_price.c_theta:.5f}; E R^2 PDE {pde_r2:.4e} vs MC {mc_r2:.4e} ({rel:.1%})"


def criterion_11(root):
    with tempfile.TemporaryDirectory() as tmp:
        again = run_repros(Path(tmp))
        diffs = []
        for rid in REPRO:
            for f in sorted((root / rid).iterdir()):
                if f.name != "manifest.json" and f.read_bytes() != (again / rid / f.name).read_bytes():
                    diffs.append(f"{rid}/{f.name}")
    return not diffs, "all result files identical" if not diffs else f"differ: {diffs}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    return line


# --- pytest --------------------------------------------------------------------


@pytest.fixture(scope="module")
def repro_root(tmp_path_factory):
    return run_repros(tmp_path_factory.mktemp("repro"))


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 12))
def test_criterion(n, repro_root):
    ok, detail = CRITERIA[n - 1](repro_root)
    line = report(n, ok, detail)
    assert ok, line


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        root = run_repros(Path(tmp))
        results = []
        for i, check in enumerate(CRITERIA, 1):
            ok, detail = check(root)
            report(i, ok, detail)
            results.append(ok)
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
