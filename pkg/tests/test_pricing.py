import numpy as np
import pytest

from stochbond import measures as M
from stochbond.coefficients import MarketCoefficients
from stochbond.errors import IntegrabilityWarning
from stochbond.pricing import Claim, martingale_diagnostics, mean_se, price, terminal_payoffs
from stochbond.simulate import TimeGrid

from conftest import bs_put

BS_ORACLE = 0.0796556745540580  # 2 Phi(0.1) - 1


def test_oracle_frozen():
    assert bs_put(1.0, 1.0, 0.2, 1.0) == pytest.approx(BS_ORACLE, abs=1e-15)


def test_payoffs():
    St, B = np.array([0.5, 1.5]), np.array([1.0, 2.0])
    np.testing.assert_array_equal(Claim.put(1.0)(St, B), [0.5, 0.0])
    np.testing.assert_array_equal(Claim.call(1.0)(St, B), [0.0, 1.0])
    assert Claim.from_json({"kind": "constant", "value": 2.0})(St, B).tolist() == [2.0, 2.0]
    with pytest.raises(KeyError):
        Claim.from_json({"kind": "digital"})


@pytest.mark.parametrize("rule", ["min_norm", "cheng"])
def test_black_scholes(black_scholes, rule):
    shift = getattr(M, rule)(black_scholes)
    res = price(black_scholes, Claim.put(1.0), shift, TimeGrid(1.0, 16), 40000, 1)
    assert abs(res.c_theta - BS_ORACLE) <= 3 * res.se


def test_zero_strike_call_is_stilde0(headline):
    shift = M.bond_consensus(headline)
    res = price(headline, Claim.call(0.0), shift, TimeGrid(1.0, 8), 20000, 2, S0=1.2, B0=1.1)
    assert abs(res.c_theta - 1.2 / 1.1) <= 3 * res.se


def test_put_bound_large_K(headline):
    res = price(headline, Claim.put(1.0), M.k_family(headline, 5.0), TimeGrid(1.0, 16), 20000, 3)
    assert res.c_theta + 2.576 * res.se <= np.exp(-5.0)


def test_replicable_price_is_shift_invariant():
    mc = MarketCoefficients.constant(0.1, 0.2, 0.05, 0.03, 0.0)
    shifts = [M.min_norm(mc)] + [M.explicit(M.min_norm(mc).theta() + [0.0, x], mc) for x in (-2.0, -0.5, 1.0, 3.0)]
    res = [price(mc, Claim.put(1.0), s, TimeGrid(1.0, 16), 20000, 4) for s in shifts]
    for i in range(len(res)):
        for j in range(i):
            assert abs(res[i].c_theta - res[j].c_theta) <= 3 * np.hypot(res[i].se, res[j].se)


@pytest.mark.parametrize("rule", ["bond_consensus", "min_norm", "stock_consensus"])
def test_put_call_parity(headline, rule):
    shift = getattr(M, rule)(headline)
    grid = TimeGrid(1.0, 16)
    put, St, invB = terminal_payoffs(headline, Claim.put(1.0), shift, grid, 20000, 5)
    call, _, _ = terminal_payoffs(headline, Claim.call(1.0), shift, grid, 20000, 5)
    # pathwise parity, then E[S~(T)] = S~(0) under any admissible measure
    np.testing.assert_allclose(call - put, St - invB, atol=1e-12)
    m, se = mean_se(call - put - (1.0 - invB), antithetic=True)
    assert abs(m) <= 3 * se


@pytest.mark.parametrize("K", [-2.0, 0.0, 2.0])
def test_call_below_stilde0(headline, K):
    res = price(headline, Claim.call(1.0), M.k_family(headline, K), TimeGrid(1.0, 16), 20000, 6)
    assert res.c_theta <= 1.0 + 3 * res.se


def test_diagnostics_named(moderate):
    for shift in (M.k_family(moderate, 0.5), M.bond_consensus(moderate), M.min_norm(moderate)):
        rep = martingale_diagnostics(moderate, shift, TimeGrid(0.5, 16), 50000, 7)
        assert rep["stilde_z"] <= 3 and rep["bond_z"] <= 3


def test_diagnostics_negative_control(moderate):
    bad = M.explicit([0.0, 0.0], moderate, check=False)
    z = [martingale_diagnostics(moderate, bad, TimeGrid(0.5, 4), n, 8)["stilde_z"] for n in (1000, 100000)]
    assert z[1] > z[0] and z[1] > 3


def test_diagnostics_deterministic_bond(black_scholes):
    rep = martingale_diagnostics(black_scholes, M.min_norm(black_scholes), TimeGrid(1.0, 8), 1000, 9)
    assert rep["bond_abs_error"] <= 1e-12


def test_integrability_warning(headline):
    # xi^2 overflows on the upper tail, so the second moment is not finite
    heavy = Claim.custom(lambda St, B: St**200.0)
    with pytest.warns(IntegrabilityWarning), np.errstate(over="ignore"):
        price(headline, heavy, M.min_norm(headline), TimeGrid(1.0, 4), 20000, 1)


def test_price_json(headline):
    res = price(headline, Claim.put(1.0), M.min_norm(headline), TimeGrid(1.0, 4), 1000, 1)
    assert set(res.to_json()) == {"c_theta", "se", "n_paths", "measure"}
