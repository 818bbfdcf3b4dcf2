"""Equivalent martingale measures indexed by Girsanov shifts theta.

A shift theta is admissible when ``V . theta = a_t`` at every state; under
the measure with density ``Z = exp(-int theta dW - 1/2 int |theta|^2 dt)`` the
discounted stock S/B is then a martingale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import MarketCoefficients, derive, sample_states
from .errors import (
    EffectiveSampleSizeWarning,
    HypothesisError,
    MembershipError,
    SingularSystemError,
)

RULES = ("explicit", "k_family", "bond_consensus", "stock_consensus", "min_norm", "cheng")
K_FAMILY_DET_MIN = 1e-8
HYPOTHESIS_TOL = 1e-12
THETA_BOUND = 1e4


@dataclass(frozen=True, eq=False)
class MeasureShift:
    rule: str
    theta_fn: Callable
    params: dict = field(default_factory=dict)
    mc: MarketCoefficients | None = None
    is_constant: bool = True
    bound: float = THETA_BOUND

    def theta(self, s=0.0, b=0.0, t=0.0) -> np.ndarray:
        return self.theta_fn(s, b, t)

    @property
    def tag(self) -> str:
        if not self.params:
            return self.rule
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()) if k != "theta")
        if self.rule == "explicit":
            inner = "theta=" + "/".join(repr(float(x)) for x in self.params["theta"])
        return f"{self.rule}({inner})"

    @property
    def bond_rate(self) -> float | None:
        """K such that exp(K t)/B(t) is a martingale, when it is known."""
        if self.rule == "k_family":
            return float(self.params["K"])
        mc = self.mc
        if mc is not None and mc.is_constant and self.is_constant:
            d = derive(mc)
            th = self.theta()
            return float(d.r - d.rho**2 - d.rho_t**2 - d.V_t @ th)
        return None

    def membership_residual(self, states=None, T: float = 1.0) -> float:
        if self.mc is None:
            raise ValueError("membership needs market coefficients")
        s, b, t = sample_states(self.mc, T) if states is None else states
        d = derive(self.mc, s, b, t)
        th = np.broadcast_to(self.theta(s, b, t), d.V.shape)
        return float(np.max(np.abs(np.sum(d.V * th, axis=-1) - d.a_t)))

    def check(self, states=None, T: float = 1.0) -> None:
        tol = 1e-9 if self.mc.is_markov else 1e-12
        res = self.membership_residual(states, T)
        scale = max(1.0, self._max_norm(states, T))
        if res > tol * scale:
            raise MembershipError(f"{self.tag}: |V.theta - a_t| = {res:.3e}")
        if self._max_norm(states, T) > self.bound:
            raise MembershipError(f"{self.tag}: |theta| exceeds bound {self.bound}")

    def _max_norm(self, states, T):
        s, b, t = sample_states(self.mc, T) if states is None else states
        return float(np.max(np.linalg.norm(np.atleast_2d(self.theta(s, b, t)), axis=-1)))

    def to_json(self) -> dict:
        out = {"rule": self.rule}
        for k, v in self.params.items():
            out[k] = list(map(float, v)) if k == "theta" else v
        return out


def _stack(t1, t2):
    t1, t2 = np.broadcast_arrays(t1, t2)
    return np.stack([t1, t2], axis=-1)


def explicit(theta, mc: MarketCoefficients | None = None, check: bool = True) -> MeasureShift:
    """Constant shift ``theta``; ``check=False`` admits non-martingale shifts."""
    th = np.asarray(theta, dtype=float).reshape(2)

    def fn(s, b, t):
        shape = np.broadcast_shapes(np.shape(s), np.shape(b), np.shape(t))
        return np.broadcast_to(th, shape + (2,)).copy()

    shift = MeasureShift("explicit", fn, {"theta": tuple(th)}, mc, True)
    if check:
        if mc is None:
            raise ValueError("membership check needs market coefficients")
        shift.check()
    return shift


def _require(mc, cond, msg):
    s, b, t = sample_states(mc)
    if not cond(derive(mc, s, b, t)):
        raise HypothesisError(msg)


def k_family(mc: MarketCoefficients, K: float) -> MeasureShift:
    """Shift under which ``exp(K t) / B(t)`` is a martingale.

    Solves ``V . theta = a_t`` together with
    ``V_t . theta = r - rho^2 - rho_t^2 - K``; the determinant is ``sigma * rho_t``.
    """
    K = float(K)
    s, b, t = sample_states(mc)
    d = derive(mc, s, b, t)
    if np.min(np.abs(d.sigma * d.rho_t)) < K_FAMILY_DET_MIN:
        raise SingularSystemError("k_family: |sigma * rho_tilde| below threshold")

    def fn(s, b, t):
        d = derive(mc, s, b, t)
        det = d.sigma * d.rho_t
        if np.any(np.abs(det) < K_FAMILY_DET_MIN):
            raise SingularSystemError("k_family: |sigma * rho_tilde| below threshold")
        th1 = (d.a_t + d.r - d.rho**2 - d.rho_t**2 - K) / d.sigma
        th2 = (th1 * d.sigma_t - d.a_t) / d.rho_t
        return _stack(th1, th2)

    shift = MeasureShift("k_family", fn, {"K": K}, mc, not mc.is_markov)
    shift.check()
    return shift


def bond_consensus(mc: MarketCoefficients) -> MeasureShift:
    """The admissible shift with ``V_t . theta = 0``: B keeps its historical law."""
    _require(
        mc,
        lambda d: np.min(np.abs(d.sigma)) > HYPOTHESIS_TOL and np.min(np.abs(d.rho_t)) > HYPOTHESIS_TOL,
        "bond_consensus needs inf|sigma| > 0 and inf|rho_tilde| > 0",
    )

    def fn(s, b, t):
        d = derive(mc, s, b, t)
        return _stack(d.a_t / d.sigma, -d.a_t * d.rho / (d.rho_t * d.sigma))

    shift = MeasureShift("bond_consensus", fn, {}, mc, not mc.is_markov)
    shift.check()
    s, b, t = sample_states(mc)
    d = derive(mc, s, b, t)
    if np.max(np.abs(np.sum(d.V_t * shift.theta(s, b, t), axis=-1))) > 1e-12 * max(1.0, shift._max_norm(None, 1.0)):
        raise MembershipError("bond_consensus: V_t . theta != 0")
    return shift


def stock_consensus(mc: MarketCoefficients) -> MeasureShift:
    """The admissible shift leaving the w-component untouched: S keeps drift a."""
    _require(
        mc,
        lambda d: np.min(np.abs(d.sigma)) > HYPOTHESIS_TOL and np.min(np.abs(d.rho_t)) > HYPOTHESIS_TOL,
        "stock_consensus needs inf|sigma| > 0 and inf|rho_tilde| > 0",
    )

    def fn(s, b, t):
        d = derive(mc, s, b, t)
        return _stack(np.zeros_like(d.a_t), -d.a_t / d.rho_t)

    shift = MeasureShift("stock_consensus", fn, {}, mc, not mc.is_markov)
    shift.check()
    return shift


def min_norm(mc: MarketCoefficients) -> MeasureShift:
    """Pointwise least-norm admissible shift ``a_t V / |V|^2``.

    Hedging against this measure gives the locally risk-minimising strategy.
    """

    def fn(s, b, t):
        d = derive(mc, s, b, t)
        return d.V * (d.a_t / d.V_norm2)[..., None]

    shift = MeasureShift("min_norm", fn, {}, mc, not mc.is_markov)
    shift.check()
    return shift


def cheng(mc: MarketCoefficients) -> MeasureShift:
    """Measure making the one-dimensional driver of S/B a Wiener process.

    Defined for non-random coefficients only, where it coincides with
    :func:`min_norm`.
    """
    if mc.is_random:
        raise HypothesisError("cheng measure needs non-random coefficients")
    base = min_norm(mc)
    return MeasureShift("cheng", base.theta_fn, {}, mc, base.is_constant)


def from_json(block: dict, mc: MarketCoefficients) -> MeasureShift:
    rule = block.get("rule")
    if rule == "explicit":
        return explicit(block["theta"], mc, check=block.get("check", True))
    if rule == "k_family":
        return k_family(mc, block["K"])
    builders = {
        "bond_consensus": bond_consensus,
        "stock_consensus": stock_consensus,
        "min_norm": min_norm,
        "cheng": cheng,
    }
    if rule not in builders:
        raise KeyError(f"unknown measure rule {rule!r}; expected one of {RULES}")
    return builders[rule](mc)


def _theta_path(shift, bundle) -> np.ndarray:
    """theta evaluated along the bundle at the left end of each step."""
    t = bundle.grid.times[:-1]
    return np.broadcast_to(
        shift.theta(bundle.s_log[:, :-1], bundle.b_log[:, :-1], t[None, :]),
        bundle.dW.shape,
    )


def density_along(shift: MeasureShift | None, bundle) -> np.ndarray:
    """Per-path density of the target measure w.r.t. the bundle's measure.

    ``shift=None`` targets the historical measure.  For a bundle simulated
    under P this is ``Z_theta(T)``.  Computed in log space.
    """
    dt = bundle.grid.dt
    gen = bundle.theta_gen
    target = np.zeros((1, 1, 2)) if shift is None else _theta_path(shift, bundle)
    gen = np.zeros((1, 1, 2)) if gen is None else gen
    diff = target - gen
    log_z = -np.sum(diff * bundle.dW, axis=(1, 2)) - 0.5 * dt * np.sum(
        np.broadcast_to(diff, bundle.dW.shape) ** 2, axis=(1, 2)
    )
    return np.exp(log_z)


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n: int
    ess: float

    def z(self, target: float) -> float:
        diff = abs(self.mean - target)
        if self.se == 0.0:
            return 0.0 if diff <= 1e-12 else float("inf")
        return diff / self.se


def reweight(weights, samples, ess_warn: float = 0.01) -> Estimate:
    """Importance-sampling estimate ``mean(Z x)`` with its standard error."""
    w = np.asarray(weights, dtype=float)
    x = np.asarray(samples, dtype=float)
    if w.shape != x.shape:
        raise ValueError(f"weights {w.shape} and samples {x.shape} differ in shape")
    n = len(x)
    wx = w * x
    ess = float(w.sum() ** 2 / np.sum(w**2)) if np.any(w) else 0.0
    if ess < ess_warn * n:
        warnings.warn(f"effective sample size {ess:.1f} < {ess_warn:.0%} of {n}", EffectiveSampleSizeWarning)
    se = float(wx.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(wx.mean()), se, n, ess)
