# Martingale measures in a market with a risky bond, and what they do to a put.
#
# The stock S and the bond B both carry Brownian noise, so "discount by the
# bond" leaves a two-dimensional noise with one tradable direction.  Every
# drift shift theta with V.theta = a~ makes S/B a martingale; below we compare
# the named choices.

import numpy as np

from stochbond import measures as M
from stochbond.coefficients import MarketCoefficients, derive
from stochbond.extremes import price_sweep
from stochbond.pricing import Claim, martingale_diagnostics, price
from stochbond.simulate import TimeGrid

# %% the market
mc = MarketCoefficients.constant(a=0.10, sigma=0.20, r=0.05, rho=0.01, rho_tilde=0.01)
d = derive(mc)
print("a~ =", d.a_t, " V =", d.V, " V~ =", d.V_t)

# %% named shifts all satisfy the same constraint
rules = {
    "min_norm": M.min_norm(mc),
    "bond_consensus": M.bond_consensus(mc),
    "stock_consensus": M.stock_consensus(mc),
    "k_family(0.05)": M.k_family(mc, 0.05),
}
for name, shift in rules.items():
    th = shift.theta()
    print(f"{name:16s} theta = ({th[0]: .4f}, {th[1]: .4f})   V.theta - a~ = {d.V @ th - d.a_t: .1e}")

# %% S~ is a martingale under each of them (z-scores near 0)
grid = TimeGrid(1.0, 32)
for name, shift in rules.items():
    rep = martingale_diagnostics(mc, shift, grid, 50_000, seed=1)
    print(f"{name:16s} E S~(T) = {rep['stilde_mean']:.4f} +- {rep['stilde_se']:.4f}")

# %% the same put gets different prices
put = Claim.put(1.0)
for name, shift in rules.items():
    res = price(mc, put, shift, grid, 50_000, seed=2)
    print(f"{name:16s} put = {res.c_theta:.5f} +- {res.se:.5f}")

# %% and along the K-family the price can be pushed almost anywhere
sweep = price_sweep(mc, put, [-2.0, -1.0, 0.0, 1.0, 2.0], grid, 50_000, seed=3)
for row in sweep.rows():
    print(f"K = {row['K']: .1f}   put = {row['estimate']:.4f}   bounds [{row['lower_bound']:.4f}, {row['upper_bound']:.4f}]")
print("a claim-independent martingale measure does not pin down a price here")
