"""How far the choice of martingale measure can move prices and hedging errors.

Price sweeps run over the K-family of shifts, under which ``exp(K t)/B`` is a
martingale.  Two measure constructions act on a fixed decomposition: the
sign-shift pushes ``E_Q R^2`` up without bound, the OU-feedback drives it to 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coefficients import derive
from .errors import GridExtrapolationWarning, HypothesisWarning
from .measures import k_family, reweight
from .pricing import price
from .simulate import TimeGrid

GUARD_MIN = 1e-10


@dataclass(frozen=True)
class SweepResult:
    K: np.ndarray
    price: np.ndarray
    se: np.ndarray
    upper_bound: np.ndarray
    lower_bound: np.ndarray
    claim_kind: str

    def rows(self):
        for i in range(len(self.K)):
            yield {
                "K": float(self.K[i]),
                "estimate": float(self.price[i]),
                "se": float(self.se[i]),
                "upper_bound": float(self.upper_bound[i]),
                "lower_bound": float(self.lower_bound[i]),
            }


def sweep_bounds(kind: str, K: float, T: float, strike: float, S0: float, B0: float) -> tuple[float, float]:
    """``(lower, upper)`` bounds on the price under the K-shift; NaN where none is known."""
    St0 = S0 / B0
    disc = np.exp(-K * T) * strike / B0
    lo, up = np.nan, np.nan
    if kind == "put":
        lo = 0.0
        if K > 0:
            up = disc
        elif K < 0:
            half = np.exp(-K * T / 2)
            lo = half * max(half * strike / B0 - St0, 0.0)
    elif kind == "call":
        up = St0
        lo = max(St0 - disc, 0.0)
    return float(lo), float(up)


def price_sweep(mc, claim, K_list, grid: TimeGrid | None = None, n_paths: int = 100_000, seed: int = 0,
                *, S0: float = 1.0, B0: float = 1.0, antithetic: bool = True, workers: int | None = None) -> SweepResult:
    """Price ``claim`` under each K-shift; all points share the same random streams."""
    grid = grid or TimeGrid()
    Ks = np.asarray(K_list, dtype=float)
    prices, ses, lows, ups = [], [], [], []
    for K in Ks:
        res = price(mc, claim, k_family(mc, K), grid, n_paths, seed, S0=S0, B0=B0, antithetic=antithetic, workers=workers)
        lo, up = sweep_bounds(claim.kind, K, grid.T, claim.strike or 0.0, S0, B0)
        prices.append(res.c_theta)
        ses.append(res.se)
        lows.append(lo)
        ups.append(up)
    return SweepResult(Ks, np.array(prices), np.array(ses), np.array(ups), np.array(lows), claim.kind)


@dataclass(frozen=True)
class ErrorMeasureResult:
    K: float
    construction: str
    estimate: float
    se: float
    baseline: float
    baseline_se: float
    reweight_estimate: float = np.nan
    reweight_se: float = np.nan
    ess: float = np.nan
    stop_fraction: float = 0.0
    guard_fraction: float = 0.0
    markov_bound: float = np.nan
    bound: float = np.nan
    c_before: float = np.nan
    c_after: float = np.nan
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "K", "construction", "estimate", "se", "baseline", "baseline_se", "reweight_estimate",
            "reweight_se", "ess", "stop_fraction", "guard_fraction", "markov_bound", "bound", "c_before", "c_after")}
        out.update(self.extra)
        return out


def _sign(x):
    return np.sign(x)


def _q_deflate(K, y, eta, d, active):
    """Feedback drift ``q = lam (rho_t, sigma_t)`` with ``q . eta = -K y``."""
    den = d.rho_t * eta[..., 0] + d.sigma_t * eta[..., 1]
    guard = np.abs(den) < GUARD_MIN
    lam = np.where(guard | ~active, 0.0, -K * y / np.where(guard, 1.0, den))
    q = np.stack(np.broadcast_arrays(lam * d.rho_t, lam * d.sigma_t), axis=-1)
    return q, guard & active


class _Construction:
    """Forward pass of ``R`` with extra drift ``phi`` in ``dW_theta = dW_Q + phi dt``."""

    def __init__(self, kind, K):
        self.kind, self.K = kind, float(K)

    def start(self, n):
        self.y = np.zeros(n)
        self.int_y2 = np.zeros(n)
        self.active = np.ones(n, dtype=bool)
        self.stopped = np.zeros(n, dtype=bool)
        self.guarded = 0
        self.points = 0

    def phi(self, eta, d):
        if self.kind == "sign_shift":
            return self.K * _sign(eta)
        q, guard = _q_deflate(self.K, self.y, eta, d, self.active)
        self.guarded += int(guard.sum())
        self.points += int(self.active.sum())
        return q

    def after(self, eta, dWQ, dt):
        if self.kind != "ou_feedback":
            return
        self.y = self.y - self.K * self.y * dt + np.sum(eta * dWQ, axis=-1)
        self.int_y2 += self.y**2 * dt
        hit = self.active & (self.int_y2 >= self.K)
        self.stopped |= hit
        self.active &= ~hit


def _eta_U(mc, shift, solution, s, b, t):
    d = derive(mc, s, b, t)
    Hs, Hb = solution.gradient_at(s, b, t)
    U = Hs[..., None] * d.V + Hb[..., None] * d.V_t
    alpha = np.sum(U * d.V, axis=-1) / d.V_norm2
    return d, U, U - alpha[..., None] * d.V


def _simulate_under_Q(decomposition, construction: _Construction, bundle):
    """Re-simulate the state with the bundle's increments read as Q-Brownian."""
    mc, shift, sol = decomposition.mc, decomposition.shift, decomposition.solution
    grid = bundle.grid
    dt = grid.dt
    dWQ_all = bundle.dW_hist()
    n = bundle.n_paths
    s = bundle.s_log[:, 0].copy()
    b = bundle.b_log[:, 0].copy()
    R = np.zeros(n)
    int_abs_eta = np.zeros(n)
    sup_eta2 = 0.0
    min_eta = np.inf
    construction.start(n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GridExtrapolationWarning)
        for k in range(grid.n_steps):
            t = grid.times[k]
            d, U, eta = _eta_U(mc, shift, sol, s, b, t)
            th = np.broadcast_to(shift.theta(s, b, t), (n, 2))
            phi = construction.phi(eta, d)
            dWQ = dWQ_all[:, k]
            dWt = dWQ + phi * dt
            R += np.sum(eta * dWt, axis=-1)
            construction.after(eta, dWQ, dt)
            norm = np.linalg.norm(eta, axis=-1)
            int_abs_eta += np.sum(np.abs(eta), axis=-1) * dt
            sup_eta2 = max(sup_eta2, float(np.max(norm**2)))
            min_eta = min(min_eta, float(np.min(norm)))
            s = s + (d.s_drift() - np.sum(d.V * th, axis=-1)) * dt + np.sum(d.V * dWt, axis=-1)
            b = b + (d.b_drift() - np.sum(d.V_t * th, axis=-1)) * dt + np.sum(d.V_t * dWt, axis=-1)
    outside = sum(issubclass(w.category, GridExtrapolationWarning) for w in caught)
    return R, {"int_abs_eta": int_abs_eta, "sup_eta2": sup_eta2, "min_eta": min_eta, "extrapolated_steps": outside}


def _reweighted(decomposition, construction: _Construction, bundle):
    """``E_Q R^2`` from the bundle's own paths, weighted by ``dQ / d(bundle measure)``."""
    shift = decomposition.shift
    grid = bundle.grid
    dt = grid.dt
    n = bundle.n_paths
    eta = decomposition.eta
    dWt = bundle.dW_under(shift)
    t = grid.times[:-1][None, :]
    th = np.broadcast_to(shift.theta(bundle.s_log[:, :-1], bundle.b_log[:, :-1], t), dWt.shape)
    gen = np.zeros(2) if bundle.theta_gen is None else bundle.theta_gen
    log_z = np.zeros(n)
    construction.start(n)
    for k in range(grid.n_steps):
        d = derive(decomposition.mc, bundle.s_log[:, k], bundle.b_log[:, k], grid.times[k])
        phi = construction.phi(eta[:, k], d)
        construction.after(eta[:, k], dWt[:, k] - phi * dt, dt)
        diff = th[:, k] - phi - np.broadcast_to(gen, (n, grid.n_steps, 2))[:, k]
        log_z -= np.sum(diff * bundle.dW[:, k], axis=-1) + 0.5 * dt * np.sum(diff**2, axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return reweight(np.exp(log_z), decomposition.R_samples**2)


def _mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(len(x)))


def error_baseline(decomposition, bundle) -> tuple[float, float]:
    """``E R^2`` with the bundle's increments read as P_theta-Brownian (the K = 0 case)."""
    if decomposition.solution is None:
        raise ValueError("simulating under Q needs a PDE-based decomposition")
    R0, _ = _simulate_under_Q(decomposition, _Construction("sign_shift", 0.0), bundle)
    return _mean_se(R0**2)


def _run(decomposition, K, bundle, kind, cross_check, baseline):
    if decomposition.solution is None:
        raise ValueError("simulating under Q needs a PDE-based decomposition")
    c_before = decomposition.c_theta
    base, base_se = error_baseline(decomposition, bundle) if baseline is None else baseline
    con = _Construction(kind, K)
    R, info = _simulate_under_Q(decomposition, con, bundle)
    est, se = _mean_se(R**2)
    rw = _reweighted(decomposition, _Construction(kind, K), bundle) if cross_check else None
    T = bundle.grid.T
    extra = {"extrapolated_steps": info["extrapolated_steps"], "min_abs_eta": info["min_eta"], "sup_eta2": info["sup_eta2"]}
    kw = {}
    if kind == "ou_feedback":
        Kf = float(K)
        kw["stop_fraction"] = float(con.stopped.mean())
        kw["guard_fraction"] = con.guarded / max(con.points, 1)
        kw["markov_bound"] = info["sup_eta2"] * (T - (1 - np.exp(-Kf * T)) / Kf) / Kf**2 if Kf > 0 else np.nan
        kw["bound"] = info["sup_eta2"] * (1 - np.exp(-Kf * T)) / Kf
    else:
        extra["min_int_abs_eta"] = float(np.min(info["int_abs_eta"]))
        kw["bound"] = float(K) ** 2 * extra["min_int_abs_eta"] ** 2
    return ErrorMeasureResult(
        float(K), kind, est, se, base, base_se,
        reweight_estimate=np.nan if rw is None else rw.mean,
        reweight_se=np.nan if rw is None else rw.se,
        ess=np.nan if rw is None else rw.ess,
        c_before=c_before, c_after=decomposition.c_theta, extra=extra, **kw,
    )


def inflate_error(decomposition, K: float, bundle, cross_check: bool | None = None, baseline=None) -> ErrorMeasureResult:
    """``E_Q R^2`` under ``W_Q = W_theta - K int sign(eta) dt``.

    ``R`` is the fixed functional ``int eta . dW_theta``; under Q it gains the
    drift ``K int |eta|_1 dt``, so the second moment grows like ``K^2``.  The
    baseline is the same simulation with ``K = 0`` (that is, under P_theta);
    pass ``baseline=(mean, se)`` from :func:`error_baseline` to reuse it.
    """
    cross_check = K <= 1 if cross_check is None else cross_check
    res = _run(decomposition, K, bundle, "sign_shift", cross_check, baseline)
    floor = res.extra["min_int_abs_eta"]
    if floor < 1e-3 * max(np.sqrt(res.baseline), 1e-300):
        warnings.warn(f"sampled int |eta| dt comes within {floor:.2e} of zero", HypothesisWarning, stacklevel=2)
    return res


def deflate_error(decomposition, K: float, bundle, cross_check: bool | None = None, baseline=None) -> ErrorMeasureResult:
    """``E_Q R^2`` under the feedback drift that makes ``R`` an OU process.

    With ``dy = -K y dt + eta . dW_Q`` and ``q = lam (rho_t, sigma_t)`` chosen
    so that ``q . eta = -K y``, ``R`` follows ``y`` until ``int y^2 dt``
    reaches ``K``.  ``q`` is orthogonal to ``V`` so S~ keeps its P_theta law.
    """
    if K <= 0:
        raise ValueError("deflate_error needs K > 0")
    cross_check = K <= 5 if cross_check is None else cross_check
    res = _run(decomposition, K, bundle, "ou_feedback", cross_check, baseline)
    if res.guard_fraction > 0:
        warnings.warn(f"feedback guard active at {res.guard_fraction:.2%} of points", HypothesisWarning, stacklevel=2)
    return res
