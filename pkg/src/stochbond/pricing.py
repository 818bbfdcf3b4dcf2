"""Monte Carlo pricing of claims ``B(T) xi`` as ``E_theta xi``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrabilityWarning
from .simulate import TimeGrid, simulate_terminal


@dataclass(frozen=True, eq=False)
class Claim:
    """Discounted payoff ``xi = F(S~(T), B(T))``."""

    kind: str
    strike: float | None = None
    payoff: Callable | None = None

    def __call__(self, S_tilde, B) -> np.ndarray:
        S_tilde = np.asarray(S_tilde, dtype=float)
        B = np.asarray(B, dtype=float)
        if self.kind == "put":
            return np.maximum(self.strike / B - S_tilde, 0.0)
        if self.kind == "call":
            return np.maximum(S_tilde - self.strike / B, 0.0)
        return np.broadcast_to(np.asarray(self.payoff(S_tilde, B), dtype=float), np.broadcast_shapes(S_tilde.shape, B.shape))

    @classmethod
    def put(cls, strike: float) -> "Claim":
        return cls("put", float(strike))

    @classmethod
    def call(cls, strike: float) -> "Claim":
        return cls("call", float(strike))

    @classmethod
    def custom(cls, payoff: Callable) -> "Claim":
        return cls("custom", None, payoff)

    @classmethod
    def from_json(cls, block: dict) -> "Claim":
        kind = block.get("kind")
        if kind in ("put", "call"):
            return getattr(cls, kind)(block["strike"])
        if kind == "constant":
            value = float(block["value"])
            return cls.custom(lambda St, B: np.full(np.broadcast_shapes(np.shape(St), np.shape(B)), value))
        if kind == "discounted_stock":
            return cls.custom(lambda St, B: St)
        raise KeyError(f"unknown claim kind {kind!r}")

    def to_json(self) -> dict:
        if self.kind in ("put", "call"):
            return {"kind": self.kind, "strike": self.strike}
        return {"kind": self.kind}


@dataclass(frozen=True)
class PriceResult:
    c_theta: float
    se: float
    n_paths: int
    measure_tag: str

    def to_json(self) -> dict:
        return {"c_theta": self.c_theta, "se": self.se, "n_paths": self.n_paths, "measure": self.measure_tag}


def mean_se(x, antithetic: bool = False) -> tuple[float, float]:
    """Sample mean and standard error; antithetic pairs are adjacent entries."""
    x = np.asarray(x, dtype=float)
    if antithetic:
        x = x.reshape(-1, 2).mean(axis=1)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def check_square_integrable(samples, rel_tol: float = 0.5) -> bool:
    """Second moment finite and stable between the first half and the full sample."""
    x2 = np.asarray(samples, dtype=float) ** 2
    if not np.all(np.isfinite(x2)):
        return False
    half = x2[: len(x2) // 2].mean()
    full = x2.mean()
    return bool(full == 0.0 or abs(half - full) <= rel_tol * full)


def terminal_payoffs(mc, claim, shift, grid, n_paths, seed, *, S0=1.0, B0=1.0, antithetic=True, workers=None):
    """Payoff samples ``xi`` and ``1/B(T)`` simulated under P_theta."""
    s_T, b_T = simulate_terminal(mc, grid, n_paths, seed, shift, S0=S0, B0=B0, antithetic=antithetic, workers=workers)
    return claim(np.exp(s_T), np.exp(b_T)), np.exp(s_T), np.exp(-b_T)


def price(
    mc,
    claim: Claim,
    shift,
    grid: TimeGrid | None = None,
    n_paths: int = 100_000,
    seed: int = 0,
    *,
    S0: float = 1.0,
    B0: float = 1.0,
    antithetic: bool = True,
    workers: int | None = None,
) -> PriceResult:
    """Price by simulating under the shifted dynamics of P_theta."""
    grid = grid or TimeGrid()
    xi, _, _ = terminal_payoffs(mc, claim, shift, grid, n_paths, seed, S0=S0, B0=B0, antithetic=antithetic, workers=workers)
    if claim.kind == "custom" and not check_square_integrable(xi):
        warnings.warn("payoff second moment unstable under path doubling", IntegrabilityWarning)
    c, se = mean_se(xi, antithetic)
    if not np.isfinite(c):
        raise FloatingPointError("non-finite price estimate")
    return PriceResult(c, se, n_paths, "P" if shift is None else shift.tag)


def martingale_diagnostics(
    mc, shift, grid: TimeGrid | None = None, n_paths: int = 100_000, seed: int = 0,
    *, S0: float = 1.0, B0: float = 1.0, antithetic: bool = False, workers: int | None = None,
) -> dict:
    """z-scores of ``E S~(T) = S~(0)`` and, when the bond rate K is known,
    ``E exp(K T)/B(T) = 1/B(0)``."""
    grid = grid or TimeGrid()
    s_T, b_T = simulate_terminal(mc, grid, n_paths, seed, shift, S0=S0, B0=B0, antithetic=antithetic, workers=workers)
    m, se = mean_se(np.exp(s_T), antithetic)
    target = S0 / B0
    report = {
        "measure": "P" if shift is None else shift.tag,
        "n_paths": n_paths,
        "stilde_mean": m,
        "stilde_se": se,
        "stilde_z": _z(m, target, se),
    }
    K = None if shift is None else shift.bond_rate
    if K is not None:
        bm, bse = mean_se(np.exp(K * grid.T - b_T), antithetic)
        report.update(bond_rate=K, bond_mean=bm, bond_se=bse, bond_abs_error=abs(bm - 1.0 / B0), bond_z=_z(bm, 1.0 / B0, bse))
    return report


def _z(m, target, se):
    diff = abs(m - target)
    if diff <= 1e-12:
        return 0.0
    return float("inf") if se == 0.0 else diff / se
