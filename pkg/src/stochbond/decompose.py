"""Foellmer-Schweizer decomposition ``xi = c + int gamma dS~ + R``.

Given the martingale-representation integrand ``U`` of ``xi`` under P_theta,
the tradable part is ``alpha V`` with ``alpha = U.V / |V|^2`` and the residual
integrand ``eta = U - alpha V`` is orthogonal to ``V``; the hedge ratio is
``gamma = alpha / S~``.  ``U`` comes either from PDE gradients
(:func:`decompose_markov`) or from least-squares regression
(:func:`decompose_regression`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr

from .coefficients import derive
from .errors import GridExtrapolationWarning, HypothesisError, RankDeficientError
from .measures import Estimate, density_along, reweight


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def cov_z(x, y) -> float:
    """z-score of the sample covariance of ``x`` and ``y`` against zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = (x - x.mean()) * (y - y.mean())
    se = p.std(ddof=1) / np.sqrt(len(p))
    if se == 0.0:
        return 0.0 if abs(p.mean()) <= 1e-15 else float("inf")
    return float(p.mean() / se)


@dataclass(eq=False)
class Decomposition:
    c_theta: float
    U: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    R_samples: np.ndarray
    I_samples: np.ndarray
    xi: np.ndarray
    gains: np.ndarray
    method: str
    mc: object = None
    shift: object = None
    claim: object = None
    bundle: object = field(default=None, repr=False)
    solution: object = field(default=None, repr=False)
    f_printed: np.ndarray | None = field(default=None, repr=False)
    c_se: float = 0.0

    @property
    def hedge_error(self) -> np.ndarray:
        """Realised discrete hedging residual ``xi - c - sum gamma dS~``."""
        return self.xi - self.c_theta - self.gains

    def E_R2(self) -> tuple[float, float]:
        return mean_se(self.R_samples**2)

    def E_R2_historical(self) -> Estimate:
        """``E R^2`` under P, reweighting when the paths were not simulated under P."""
        w = density_along(None, self.bundle) if self.bundle.theta_gen is not None else np.ones(len(self.R_samples))
        return reweight(w, self.R_samples**2)

    def E_hedge_error2(self) -> tuple[float, float]:
        return mean_se(self.hedge_error**2)

    def corr_R_I_z(self) -> float:
        return cov_z(self.R_samples, self.I_samples)

    def eta_dot_V_max(self) -> float:
        V = _path_coefs(self.mc, self.bundle).V
        return float(np.max(np.abs(np.sum(self.eta * V, axis=-1))))

    def pythagoras(self) -> dict:
        """``E xi^2`` against ``c^2 + E I^2 + E R^2`` with SEs combined in quadrature."""
        x2, x2_se = mean_se(self.xi**2)
        i2, i2_se = mean_se(self.I_samples**2)
        r2, r2_se = mean_se(self.R_samples**2)
        gap = x2 - (self.c_theta**2 + i2 + r2)
        se = float(np.sqrt(x2_se**2 + i2_se**2 + r2_se**2))
        return {"E_xi2": x2, "c2": self.c_theta**2, "E_I2": i2, "E_R2": r2, "gap": gap, "se": se, "z": abs(gap) / se if se else 0.0}

    def summary(self) -> dict:
        r2, r2_se = self.E_R2()
        h2, h2_se = self.E_hedge_error2()
        return {
            "c_theta": self.c_theta,
            "c_se": self.c_se,
            "E_R2": r2,
            "E_R2_se": r2_se,
            "E_hedge_error2": h2,
            "E_hedge_error2_se": h2_se,
            "corr_R_I_z": self.corr_R_I_z(),
            "method": self.method,
        }


class _PathCoefs:
    def __init__(self, d, n_paths, n_steps):
        self.V = np.broadcast_to(d.V, (n_paths, n_steps, 2))
        self.V_t = np.broadcast_to(d.V_t, (n_paths, n_steps, 2))
        self.sigma_t = np.broadcast_to(d.sigma_t, (n_paths, n_steps))
        self.rho_t = np.broadcast_to(d.rho_t, (n_paths, n_steps))
        self.V_norm2 = np.broadcast_to(d.V_norm2, (n_paths, n_steps))


def _path_coefs(mc, bundle):
    t = bundle.grid.times[:-1][None, :]
    d = derive(mc, bundle.s_log[:, :-1], bundle.b_log[:, :-1], t)
    return _PathCoefs(d, bundle.n_paths, bundle.grid.n_steps)


def _assemble(U, pc, bundle, xi, c, method, **kw) -> Decomposition:
    alpha = np.sum(U * pc.V, axis=-1) / pc.V_norm2
    eta = U - alpha[..., None] * pc.V
    dWt = bundle.dW_under(kw["shift"])
    R = np.sum(eta * dWt, axis=(1, 2))
    I = np.sum(alpha[..., None] * pc.V * dWt, axis=(1, 2))
    St = bundle.S_tilde
    gamma = alpha / St[:, :-1]
    gains = np.sum(gamma * np.diff(St, axis=1), axis=1)
    return Decomposition(c, U, alpha, eta, gamma, R, I, xi, gains, method, bundle=bundle, **kw)


def decompose_markov(mc, claim, shift, solution, bundle) -> Decomposition:
    """Decomposition from the gradients of a solved pricing grid ``H``.

    ``U = H_s V + H_b V_t`` along the paths; ``c`` is ``H`` at the initial
    state.  Expectations over ``bundle`` are under its generating measure.
    """
    n, N = bundle.n_paths, bundle.grid.n_steps
    times = bundle.grid.times
    s, b = bundle.s_log, bundle.b_log
    outside = (
        (s < solution.s_nodes[0]) | (s > solution.s_nodes[-1]) | (b < solution.b_nodes[0]) | (b > solution.b_nodes[-1])
    )
    if np.any(outside):
        warnings.warn(f"{outside.mean():.3%} of path points outside the PDE domain", GridExtrapolationWarning, stacklevel=2)
    Hs = np.empty((n, N))
    Hb = np.empty((n, N))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridExtrapolationWarning)
        for k in range(N):
            Hs[:, k], Hb[:, k] = solution.gradient_at(s[:, k], b[:, k], times[k])
    pc = _path_coefs(mc, bundle)
    U = Hs[..., None] * pc.V + Hb[..., None] * pc.V_t
    xi = claim(bundle.S_tilde[:, -1], bundle.B[:, -1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridExtrapolationWarning)
        c = float(solution.value_at(s[0, 0], b[0, 0], 0.0))
    f_printed = (pc.sigma_t * Hs - pc.rho_t * Hb) / np.sqrt(pc.sigma_t**2 + pc.rho_t**2)
    return _assemble(U, pc, bundle, xi, c, "markov", mc=mc, shift=shift, claim=claim, solution=solution, f_printed=f_printed)


def poly_basis(s, b, degree: int = 3) -> np.ndarray:
    """Monomials ``s^i b^j`` with ``i + j <= degree`` on standardised inputs."""
    cols = []
    zs = _standardise(s)
    zb = _standardise(b)
    for total in range(degree + 1):
        for i in range(total + 1):
            cols.append(zs**i * zb ** (total - i))
    return np.column_stack(cols)


def _standardise(x):
    sd = x.std()
    return (x - x.mean()) / sd if sd > 1e-12 * max(1.0, abs(x.mean())) else np.zeros_like(x)


def _fit(X, Y, ridge):
    """Ridge least-squares coefficients on a column subset of full numerical rank.

    Columns dropped by the pivoted QR get a zero coefficient.
    """
    n, p = X.shape
    _, Rm, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    rank = int(np.sum(diag > 1e-10 * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < 1 or n <= rank:
        raise RankDeficientError(f"regression rank {rank} with {n} samples")
    keep = np.sort(piv[:rank])
    Xs = X[:, keep]
    scale = np.sqrt(np.mean(Xs**2, axis=0))
    Xs = Xs / scale
    G = Xs.T @ Xs / n
    beta = np.zeros(p)
    beta[keep] = np.linalg.solve(G + ridge * np.eye(rank), Xs.T @ Y / n) / scale
    return beta


def decompose_regression(mc, claim, shift, bundle, degree: int = 3, ridge: float = 1e-8) -> Decomposition:
    """PDE-free decomposition from backward least-squares regression.

    Starting from ``Y_N = xi``, each step regresses ``Y_{k+1}`` on
    ``[X, X dW_theta1, X dW_theta2]`` with ``X`` polynomials in ``(s, b)``
    at step ``k``; the first block gives ``Y_k = E_k[Y_{k+1}]`` and the
    other two the integrand ``U_k``.  The regression residual is O(dt), so
    ``U`` is far less noisy than projecting ``(Y_{k+1} - Y_k) dW / dt``.
    """
    n, N = bundle.n_paths, bundle.grid.n_steps
    dWt = bundle.dW_under(shift)
    xi = claim(bundle.S_tilde[:, -1], bundle.B[:, -1])
    U = np.empty((n, N, 2))
    Y = xi.copy()
    for k in range(N - 1, -1, -1):
        X = poly_basis(bundle.s_log[:, k], bundle.b_log[:, k], degree)
        p = X.shape[1]
        beta = _fit(np.hstack([X, X * dWt[:, k, :1], X * dWt[:, k, 1:]]), Y, ridge)
        U[:, k, 0] = X @ beta[p : 2 * p]
        U[:, k, 1] = X @ beta[2 * p :]
        Y = X @ beta[:p]
    pc = _path_coefs(mc, bundle)
    c, c_se = mean_se(xi)
    return _assemble(U, pc, bundle, xi, c, "regression", mc=mc, shift=shift, claim=claim, c_se=c_se)


def orthogonal_claim(mc, shift, bundle, psi=1.0) -> np.ndarray:
    """Samples of ``zeta = int psi (rho_t dW_theta1 + sigma_t dW_theta2)``.

    The integrand is orthogonal to ``V`` so ``zeta`` is orthogonal to every
    gains process; it is a non-replicable claim when ``rho_t`` is not
    identically zero.  ``psi`` may be a constant, an array over
    ``(path, step)``, or a callable ``psi(s, b, t)``.
    """
    pc = _path_coefs(mc, bundle)
    if np.all(np.abs(pc.rho_t) <= 1e-14):
        raise HypothesisError(
            "rho_tilde vanishes identically: the construction reduces to int sigma_t dW_theta2 "
            "and no longer exhibits a non-replicable claim"
        )
    if callable(psi):
        t = bundle.grid.times[:-1][None, :]
        psi = psi(bundle.s_log[:, :-1], bundle.b_log[:, :-1], t)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), pc.rho_t.shape)
    dWt = bundle.dW_under(shift)
    return np.sum(psi * (pc.rho_t * dWt[..., 0] + pc.sigma_t * dWt[..., 1]), axis=1)


def gains_z(zeta, bundle, gamma) -> float:
    """z-score of ``E[zeta * int gamma dS~]`` against zero."""
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (bundle.n_paths, bundle.grid.n_steps))
    gains = np.sum(gamma * np.diff(bundle.S_tilde, axis=1), axis=1)
    p = np.asarray(zeta) * gains
    se = p.std(ddof=1) / np.sqrt(len(p))
    return 0.0 if se == 0 else float(p.mean() / se)


def lrm_orthogonality_check(decomposition: Decomposition, bundle=None) -> float:
    """z-score of ``cov(R, M(T))`` with ``M(T) = int gamma S~ V . dW`` under P.

    ``bundle`` defaults to the one the decomposition was computed on and must
    have been simulated under the historical measure.
    """
    bundle = decomposition.bundle if bundle is None else bundle
    if bundle.theta_gen is not None:
        raise ValueError("the orthogonality check needs paths simulated under P")
    pc = _path_coefs(decomposition.mc, bundle)
    M = np.sum(decomposition.alpha[..., None] * pc.V * bundle.dW_hist(), axis=(1, 2))
    if np.all(decomposition.alpha == 0):
        return 0.0
    return cov_z(decomposition.R_samples, M)
