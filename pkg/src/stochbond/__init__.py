"""Option pricing and quadratic hedging with a stochastically deviating bond."""

from .coefficients import (
    Constant,
    DerivedCoefficients,
    MarketCoefficients,
    PiecewiseConstant,
    Tabulated,
    ValidationReport,
    derive,
    validate,
)
from .measures import MeasureShift, density_along, reweight
from .pricing import Claim, PriceResult, martingale_diagnostics, price
from .simulate import PathBundle, TimeGrid, self_financing_check, simulate_paths

__version__ = "0.1.0"
