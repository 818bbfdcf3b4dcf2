import numpy as np
import pytest

from stochbond.coefficients import MarketCoefficients

HEADLINE = dict(a=0.10, sigma=0.20, r=0.05, rho=0.01, rho_tilde=0.01)
# a market where every named shift has moderate |theta|, so Girsanov densities are well behaved
MODERATE = dict(a=0.12, sigma=0.6, r=0.03, rho=0.15, rho_tilde=0.45)
BLACK_SCHOLES = dict(a=0.05, sigma=0.2, r=0.0, rho=0.0, rho_tilde=0.0)


@pytest.fixture
def headline():
    return MarketCoefficients.constant(**HEADLINE)


@pytest.fixture
def moderate():
    return MarketCoefficients.constant(**MODERATE)


@pytest.fixture
def black_scholes():
    return MarketCoefficients.constant(**BLACK_SCHOLES)


def bs_put(S, K, sigma, T):
    """Zero-rate Black-Scholes put."""
    from scipy.stats import norm

    d1 = (np.log(S / K) + 0.5 * sigma**2 * T) / (sigma * np.sqrt(T))
    d2 = d1 - sigma * np.sqrt(T)
    return K * norm.cdf(-d2) - S * norm.cdf(-d1)
