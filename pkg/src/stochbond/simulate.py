"""Scenario generation for (S, B) under P or under a shifted measure P_theta.

Paths are produced in fixed-size blocks, each with its own Philox stream
keyed by ``(seed, block index)``, so results do not depend on the number of
worker threads.  Log-prices are stepped exactly for constant coefficients
and with a log-Euler scheme otherwise.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .coefficients import MarketCoefficients, derive

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class TimeGrid:
    T: float = 1.0
    n_steps: int = 256

    def __post_init__(self):
        if self.T <= 0 or int(self.n_steps) < 1:
            raise ValueError("need T > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated scenarios; ``dW`` are the increments driving the simulation.

    ``theta_gen`` is the shift of the generating measure (``None`` for P), so
    historical increments are ``dW - theta_gen * dt``.
    """

    grid: TimeGrid
    dW: np.ndarray
    s_log: np.ndarray
    b_log: np.ndarray
    theta_gen: np.ndarray | None
    measure_tag: str
    seed: int
    antithetic: bool = False

    @property
    def n_paths(self) -> int:
        return self.s_log.shape[0]

    @cached_property
    def S_tilde(self) -> np.ndarray:
        return np.exp(self.s_log)

    @cached_property
    def B(self) -> np.ndarray:
        return np.exp(self.b_log)

    @cached_property
    def S(self) -> np.ndarray:
        return np.exp(self.s_log + self.b_log)

    def dW_hist(self) -> np.ndarray:
        if self.theta_gen is None:
            return self.dW
        return self.dW - self.theta_gen * self.grid.dt

    def dW_under(self, shift) -> np.ndarray:
        """Increments of W_theta = W + int theta dt along these paths."""
        if shift is None:
            return self.dW_hist()
        t = self.grid.times[:-1]
        th = shift.theta(self.s_log[:, :-1], self.b_log[:, :-1], t[None, :])
        return self.dW_hist() + th * self.grid.dt

    def to_csv(self, path, max_paths: int | None = None) -> None:
        n = self.n_paths if max_paths is None else min(max_paths, self.n_paths)
        W = np.concatenate([np.zeros((n, 1, 2)), np.cumsum(self.dW_hist()[:n], axis=1)], axis=1)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["path_id", "step", "t", "w", "w_tilde", "S", "B", "S_tilde"])
            for i in range(n):
                for k, t in enumerate(self.grid.times):
                    out.writerow([
                        i, k, f"{t:.17g}", f"{W[i, k, 0]:.17g}", f"{W[i, k, 1]:.17g}",
                        f"{self.S[i, k]:.17g}", f"{self.B[i, k]:.17g}", f"{self.S_tilde[i, k]:.17g}",
                    ])


def _block_sizes(n_paths: int, antithetic: bool):
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if antithetic and n_paths % 2:
        raise ValueError("antithetic sampling needs an even number of paths")
    starts = list(range(0, n_paths, BLOCK_SIZE))
    return [(i, start, min(BLOCK_SIZE, n_paths - start)) for i, start in enumerate(starts)]


def block_normals(seed: int, index: int, m: int, n_steps: int, antithetic: bool) -> np.ndarray:
    """Standard normals of shape ``(n_steps, m, 2)`` for one block.

    Antithetic pairs sit on adjacent paths ``(2i, 2i+1)``.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    gen = np.random.Generator(np.random.Philox(ss))
    if not antithetic:
        return gen.standard_normal((n_steps, m, 2))
    half = gen.standard_normal((n_steps, m // 2, 2))
    out = np.empty((n_steps, m, 2))
    out[:, 0::2] = half
    out[:, 1::2] = -half
    return out


class _Stepper:
    """Per-step log-price update under the measure shifted by ``shift``."""

    def __init__(self, mc: MarketCoefficients, shift, grid: TimeGrid):
        self.mc, self.shift, self.grid = mc, shift, grid
        self.frozen = mc.is_constant and (shift is None or shift.is_constant)
        if self.frozen:
            self._consts = self._coefs(0.0, 0.0, 0.0)

    def _coefs(self, s, b, t):
        d = derive(self.mc, s, b, t)
        th = np.zeros(2) if self.shift is None else self.shift.theta(s, b, t)
        mu_s = d.s_drift() - np.sum(d.V * th, axis=-1)
        mu_b = d.b_drift() - np.sum(d.V_t * th, axis=-1)
        return mu_s, mu_b, d.V, d.V_t, th

    def step(self, s, b, t, Z):
        dt = self.grid.dt
        if self.frozen:
            mu_s, mu_b, V, Vt, th = self._consts
        else:
            mu_s, mu_b, V, Vt, th = self._coefs(s, b, t)
        dW = Z * np.sqrt(dt)
        s_new = s + mu_s * dt + np.sum(V * dW, axis=-1)
        b_new = b + mu_b * dt + np.sum(Vt * dW, axis=-1)
        return s_new, b_new, dW, th


def _run(mc, grid, n_paths, seed, shift, S0, B0, antithetic, workers, store):
    if S0 <= 0 or B0 <= 0:
        raise ValueError("initial prices must be positive")
    derive(mc, np.log(S0 / B0), np.log(B0), 0.0)
    stepper = _Stepper(mc, shift, grid)
    n = grid.n_steps
    s0, b0 = np.log(S0 / B0), np.log(B0)
    blocks = _block_sizes(n_paths, antithetic)
    if store:
        dW = np.empty((n_paths, n, 2))
        s_log = np.empty((n_paths, n + 1))
        b_log = np.empty((n_paths, n + 1))
        theta = None if shift is None else (
            np.empty((1, 1, 2)) if stepper.frozen else np.empty((n_paths, n, 2))
        )
    else:
        s_T = np.empty(n_paths)
        b_T = np.empty(n_paths)

    def work(block):
        index, start, m = block
        Z = block_normals(seed, index, m, n, antithetic)
        s = np.full(m, s0)
        b = np.full(m, b0)
        sl = slice(start, start + m)
        if store:
            s_log[sl, 0], b_log[sl, 0] = s, b
        for k in range(n):
            s, b, dw, th = stepper.step(s, b, grid.times[k], Z[k])
            if store:
                dW[sl, k] = dw
                s_log[sl, k + 1], b_log[sl, k + 1] = s, b
                if theta is not None:
                    if stepper.frozen:
                        theta[0, 0] = th
                    else:
                        theta[sl, k] = th
        if not store:
            s_T[sl], b_T[sl] = s, b

    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, blocks))
    else:
        for blk in blocks:
            work(blk)
    if store:
        tag = "P" if shift is None else shift.tag
        return PathBundle(grid, dW, s_log, b_log, theta, tag, seed, antithetic)
    return s_T, b_T


def simulate_paths(
    mc: MarketCoefficients,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    shift=None,
    *,
    S0: float = 1.0,
    B0: float = 1.0,
    antithetic: bool = False,
    workers: int | None = None,
) -> PathBundle:
    """Simulate full paths under P (``shift=None``) or directly under P_theta."""
    return _run(mc, grid, n_paths, seed, shift, S0, B0, antithetic, workers, store=True)


def simulate_terminal(
    mc: MarketCoefficients,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    shift=None,
    *,
    S0: float = 1.0,
    B0: float = 1.0,
    antithetic: bool = False,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal ``(s, b) = (log S/B, log B)`` only; same streams as :func:`simulate_paths`."""
    return _run(mc, grid, n_paths, seed, shift, S0, B0, antithetic, workers, store=False)


def self_financing_beta(bundle: PathBundle, gamma, X0: float) -> np.ndarray:
    """Bond holdings making ``(beta, gamma)`` self-financing from wealth ``X0``.

    Rebalancing at each grid time keeps wealth unchanged:
    ``X_{k+1} = beta_k B_{k+1} + gamma_k S_{k+1}``.
    """
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), bundle.s_log.shape)
    S, B = bundle.S, bundle.B
    beta = np.empty_like(S)
    X = np.full(bundle.n_paths, float(X0))
    for k in range(bundle.grid.n_steps + 1):
        if k > 0:
            X = beta[:, k - 1] * B[:, k] + gamma[:, k - 1] * S[:, k]
        beta[:, k] = (X - gamma[:, k] * S[:, k]) / B[:, k]
    return beta


def self_financing_check(bundle: PathBundle, beta, gamma) -> float:
    """Largest pathwise gap between ``beta B + gamma S`` and ``B (X~0 + int gamma dS~)``."""
    shape = bundle.s_log.shape
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    for name, arr in (("beta", beta), ("gamma", gamma)):
        try:
            np.broadcast_to(arr, shape)
        except ValueError:
            raise ValueError(f"{name} shape {arr.shape} incompatible with paths {shape}") from None
    beta = np.broadcast_to(beta, shape)
    gamma = np.broadcast_to(gamma, shape)
    S, B, St = bundle.S, bundle.B, bundle.S_tilde
    X_direct = beta * B + gamma * S
    gains = np.cumsum(gamma[:, :-1] * np.diff(St, axis=1), axis=1)
    Xt = X_direct[:, :1] / B[:, :1] + np.concatenate([np.zeros((shape[0], 1)), gains], axis=1)
    return float(np.max(np.abs(X_direct - Xt * B)))
