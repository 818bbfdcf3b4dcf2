# The same residual R, judged under other martingale measures.
#
# Keeping the hedge fixed, a drift along sign(eta) inflates E_Q R^2 like K^2,
# while an OU-type feedback drift squeezes it towards 0.  Neither changes the
# price c or the law of S~.

import warnings

from stochbond import measures as M
from stochbond.coefficients import MarketCoefficients
from stochbond.decompose import decompose_markov
from stochbond.extremes import deflate_error, error_baseline, inflate_error
from stochbond.pde import GridSpec, solve_H
from stochbond.pricing import Claim
from stochbond.simulate import TimeGrid, simulate_paths

mc = MarketCoefficients.constant(a=0.10, sigma=0.20, r=0.05, rho=0.01, rho_tilde=0.01)
shift = M.min_norm(mc)
put = Claim.put(1.0)
sol = solve_H(mc, shift, put, GridSpec(121, 61, 128))
bundle = simulate_paths(mc, TimeGrid(1.0, 128), 5_000, seed=7)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    dec = decompose_markov(mc, put, shift, sol, bundle)
    base = error_baseline(dec, bundle)
    print(f"baseline E R^2 = {base[0]:.3e}")
    for K in (1.0, 2.0, 5.0):
        r = inflate_error(dec, K, bundle, cross_check=False, baseline=base)
        print(f"inflate K={K:4.1f}: {r.estimate:.3e}  ({r.estimate / base[0]:6.1f} x)")
    for K in (1.0, 10.0, 50.0):
        r = deflate_error(dec, K, bundle, cross_check=False, baseline=base)
        print(f"deflate K={K:4.1f}: {r.estimate:.3e}  ({r.estimate / base[0]:6.3f} x), stopped {r.stop_fraction:.1%}")
