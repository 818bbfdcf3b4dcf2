import numpy as np
import pytest

from stochbond import measures as M
from stochbond.coefficients import MarketCoefficients, derive
from stochbond.simulate import (
    BLOCK_SIZE,
    TimeGrid,
    block_normals,
    self_financing_beta,
    self_financing_check,
    simulate_paths,
    simulate_terminal,
)


def test_grid():
    g = TimeGrid(2.0, 8)
    assert g.times[0] == 0.0 and g.times[-1] == 2.0
    assert np.all(np.diff(g.times) > 0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_bundle_invariants(headline):
    b = simulate_paths(headline, TimeGrid(1.0, 32), 500, 1, S0=1.3, B0=0.9)
    np.testing.assert_allclose(b.S_tilde, b.S / b.B, rtol=1e-10)
    np.testing.assert_allclose(np.log(b.S_tilde), b.s_log, atol=1e-10)
    assert np.all(b.S > 0) and np.all(b.B > 0)
    assert b.S[0, 0] == pytest.approx(1.3) and b.B[0, 0] == pytest.approx(0.9)


def test_deterministic_bond():
    mc = MarketCoefficients.constant(0.05, 0.2, 0.0, 0.0, 0.0)
    b = simulate_paths(mc, TimeGrid(1.0, 16), 100, 2)
    np.testing.assert_array_equal(b.B, 1.0)


def test_log_stock_moments():
    mc = MarketCoefficients.constant(0.10, 0.2, 0.05, 0.0, 0.0)
    s, b = simulate_terminal(mc, TimeGrid(1.0, 16), 100000, 3)
    logS = s + b
    assert abs(logS.mean() - 0.08) <= 3 * logS.std(ddof=1) / np.sqrt(len(logS))


def test_martingale_under_shift(moderate):
    shift = M.stock_consensus(moderate)
    s, _ = simulate_terminal(moderate, TimeGrid(0.5, 16), 100000, 4, shift)
    x = np.exp(s)
    assert abs(x.mean() - 1.0) <= 3 * x.std(ddof=1) / np.sqrt(len(x))


def test_same_seed_same_bundle(headline):
    g = TimeGrid(1.0, 8)
    a = simulate_paths(headline, g, 300, 9)
    b = simulate_paths(headline, g, 300, 9)
    c = simulate_paths(headline, g, 300, 10)
    assert np.array_equal(a.s_log, b.s_log) and not np.array_equal(a.s_log, c.s_log)


def test_workers_do_not_change_results(headline):
    g = TimeGrid(1.0, 4)
    n = 2 * BLOCK_SIZE + 10
    a = simulate_terminal(headline, g, n, 5)
    b = simulate_terminal(headline, g, n, 5, workers=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_terminal_matches_paths(headline):
    g = TimeGrid(1.0, 8)
    shift = M.min_norm(headline)
    bundle = simulate_paths(headline, g, 200, 6, shift)
    s, b = simulate_terminal(headline, g, 200, 6, shift)
    assert np.array_equal(bundle.s_log[:, -1], s) and np.array_equal(bundle.b_log[:, -1], b)


def test_antithetic_pairs():
    Z = block_normals(1, 0, 6, 3, antithetic=True)
    np.testing.assert_array_equal(Z[:, 0::2], -Z[:, 1::2])
    with pytest.raises(ValueError):
        simulate_terminal(MarketCoefficients.constant(0.1, 0.2, 0.0, 0.0, 0.0), TimeGrid(), 3, 0, antithetic=True)


def test_gaussian_log_increments(headline):
    s, _ = simulate_terminal(headline, TimeGrid(1.0, 1), 100000, 7)
    x = (s - s.mean()) / s.std()
    assert abs(np.mean(x**3)) < 0.05
    assert abs(np.mean(x**4) - 3) < 0.1


def test_independent_components(headline):
    b = simulate_paths(headline, TimeGrid(1.0, 4), 25000, 8)
    p = (b.dW[..., 0] * b.dW[..., 1]).ravel()
    assert abs(p.mean()) <= 3 * p.std(ddof=1) / np.sqrt(len(p))


def test_dW_under_roundtrip(headline):
    shift = M.min_norm(headline)
    b = simulate_paths(headline, TimeGrid(1.0, 4), 10, 1, shift)
    np.testing.assert_allclose(b.dW_under(shift), b.dW, atol=1e-15)


def test_euler_matches_exact_for_piecewise():
    # piecewise-constant sigma with equal pieces takes the log-Euler path but must match the exact law
    mc = MarketCoefficients.from_json({"a": 0.1, "sigma": {"times": [0, 0.5], "values": [0.2, 0.2]}, "r": 0.02, "rho": 0.0, "rho_tilde": 0.0})
    ref = MarketCoefficients.constant(0.1, 0.2, 0.02, 0.0, 0.0)
    g = TimeGrid(1.0, 8)
    np.testing.assert_allclose(simulate_terminal(mc, g, 64, 3)[0], simulate_terminal(ref, g, 64, 3)[0], atol=1e-13)


def test_self_financing_pure_bond(headline):
    b = simulate_paths(headline, TimeGrid(1.0, 16), 200, 3, B0=1.2)
    beta = np.full(b.s_log.shape, 2.0 / 1.2)
    assert self_financing_check(b, beta, 0.0) <= 1e-10


def test_self_financing_refinement(headline):
    res = []
    for n in (16, 64, 256):
        b = simulate_paths(headline, TimeGrid(1.0, n), 2000, 4)
        beta = self_financing_beta(b, 1.0, 1.0)
        res.append(self_financing_check(b, beta, 1.0))
    # rebalanced holdings keep the identity to rounding
    assert max(res) < 1e-12


def test_self_financing_constant_beta_drifts(headline):
    # buy-and-hold bond with gamma = 1 without rebalancing violates self-financing by O(dt^0)
    b = simulate_paths(headline, TimeGrid(1.0, 64), 500, 4)
    assert self_financing_check(b, 0.0, 1.0) <= 1e-10
    errs = []
    for n in (16, 64, 256):
        bb = simulate_paths(headline, TimeGrid(1.0, n), 2000, 4)
        gamma = np.broadcast_to(bb.S_tilde, bb.s_log.shape)
        errs.append(self_financing_check(bb, self_financing_beta(bb, gamma, 1.0), gamma))
    assert max(errs) < 1e-12


def test_self_financing_shape_error(headline):
    b = simulate_paths(headline, TimeGrid(1.0, 4), 10, 1)
    with pytest.raises(ValueError):
        self_financing_check(b, np.zeros((3, 3)), 0.0)


def test_csv_dump(tmp_path, headline):
    b = simulate_paths(headline, TimeGrid(1.0, 3), 4, 1)
    p = tmp_path / "paths.csv"
    b.to_csv(p, max_paths=2)
    lines = p.read_text().splitlines()
    assert lines[0] == "path_id,step,t,w,w_tilde,S,B,S_tilde"
    assert len(lines) == 1 + 2 * 4
    row = lines[5].split(",")
    assert float(row[7]) == pytest.approx(float(row[5]) / float(row[6]), rel=1e-15)
