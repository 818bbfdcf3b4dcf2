"""Finite-difference solvers for the Markov-case pricing and error equations.

``H(s, b, t) = E_theta[F(e^s, e^b) | s, b, t]`` solves a backward parabolic
equation in the log-state ``(s, b)``.  The hedging-error second moment
``E R^2`` under P solves a Kolmogorov equation in ``(x, s, b)`` whose
solution is quadratic in ``x``; :func:`error_moment_pde` reduces it to two
2-D problems.

Time stepping uses the Douglas ADI scheme (implicit along each axis, mixed
derivative explicit) with Rannacher start-up steps.  At each boundary the
second derivative across the boundary is set to zero by linear
extrapolation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .coefficients import MarketCoefficients, derive, sample_states
from .errors import GridExtrapolationWarning, StabilityError


@dataclass(frozen=True)
class GridSpec:
    n_s: int = 201
    n_b: int = 101
    n_t: int = 256
    T: float = 1.0
    n_sd: float = 6.0
    s_range: tuple | None = None
    b_range: tuple | None = None
    implicitness: float = 0.5
    rannacher_steps: int = 2
    min_half_width: float = 0.05

    @classmethod
    def from_json(cls, block: dict) -> "GridSpec":
        kw = {k: block[k] for k in ("n_s", "n_b", "n_t", "T", "n_sd", "implicitness", "rannacher_steps") if k in block}
        for k in ("s_range", "b_range"):
            if block.get(k) is not None:
                kw[k] = tuple(block[k])
        return cls(**kw)


@dataclass(eq=False)
class GridSolution:
    s_nodes: np.ndarray
    b_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray
    s0: float = 0.0
    b0: float = 0.0
    mc: MarketCoefficients | None = None
    shift: object = None
    claim: object = None
    _grads: tuple | None = field(default=None, repr=False)

    @property
    def s_range(self):
        return float(self.s_nodes[0]), float(self.s_nodes[-1])

    @property
    def b_range(self):
        return float(self.b_nodes[0]), float(self.b_nodes[-1])

    @property
    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Centred differences ``(H_s, H_b)`` at every node and time level."""
        if self._grads is None:
            self._grads = (
                np.gradient(self.values, self.s_nodes, axis=1),
                np.gradient(self.values, self.b_nodes, axis=2),
            )
        return self._grads

    def interp(self, fld, s, b, t) -> np.ndarray:
        """Bilinear in ``(s, b)``, linear in ``t``; clamped at the edges."""
        s = np.asarray(s, dtype=float)
        b = np.asarray(b, dtype=float)
        outside = (s < self.s_nodes[0]) | (s > self.s_nodes[-1]) | (b < self.b_nodes[0]) | (b > self.b_nodes[-1])
        if np.any(outside):
            warnings.warn(
                f"{np.mean(outside):.2%} of points outside the PDE domain; values clamped",
                GridExtrapolationWarning,
                stacklevel=2,
            )
        dt = self.t_nodes[1] - self.t_nodes[0]
        x = np.clip(np.asarray(t, dtype=float) / dt, 0, len(self.t_nodes) - 1)
        j = np.minimum(np.floor(x).astype(int), len(self.t_nodes) - 2)
        w = x - j
        i, wi = _locate(self.s_nodes, s)
        k, wk = _locate(self.b_nodes, b)

        def level(jj):
            return (
                (1 - wi) * (1 - wk) * fld[jj, i, k]
                + wi * (1 - wk) * fld[jj, i + 1, k]
                + (1 - wi) * wk * fld[jj, i, k + 1]
                + wi * wk * fld[jj, i + 1, k + 1]
            )

        if np.ndim(j) == 0 and w == 0:
            return level(j)
        return (1 - w) * level(j) + w * level(j + 1)

    def value_at(self, s, b, t=0.0):
        return self.interp(self.values, s, b, t)

    def gradient_at(self, s, b, t=0.0):
        hs, hb = self.gradients
        return self.interp(hs, s, b, t), self.interp(hb, s, b, t)

    def at_origin(self) -> float:
        return float(self.value_at(self.s0, self.b0, 0.0))

    def to_csv(self, path, t_index: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            fh.write(
                f"# n_s={len(self.s_nodes)} n_b={len(self.b_nodes)} "
                f"s_range={self.s_range[0]:.17g},{self.s_range[1]:.17g} "
                f"b_range={self.b_range[0]:.17g},{self.b_range[1]:.17g} t={self.t_nodes[t_index]:.17g}\n"
            )
            out.writerow(["s", "b", "value"])
            for i, s in enumerate(self.s_nodes):
                for k, b in enumerate(self.b_nodes):
                    out.writerow([f"{s:.17g}", f"{b:.17g}", f"{self.values[t_index, i, k]:.17g}"])


def _locate(nodes, x):
    x = np.clip(x, nodes[0], nodes[-1])
    i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
    return i, (x - nodes[i]) / (nodes[i + 1] - nodes[i])


# --- coefficient fields ------------------------------------------------------


def _theta_on(shift, s, b, t, shape):
    if shift is None:
        return np.zeros(shape + (2,))
    return np.broadcast_to(shift.theta(s, b, t), shape + (2,))


def _fields(mc, shift, S, Bm, t):
    """Drifts and diffusion coefficients of (s, b) under P_theta on a mesh."""
    d = derive(mc, S, Bm, t)
    shape = np.broadcast_shapes(np.shape(S), np.shape(Bm))
    th = _theta_on(shift, S, Bm, t, shape)
    mu_s = d.s_drift() - np.sum(d.V * th, axis=-1)
    mu_b = d.b_drift() - np.sum(d.V_t * th, axis=-1)
    d_ss = 0.5 * (d.sigma_t**2 + d.rho_t**2)
    d_bb = 0.5 * (d.rho**2 + d.rho_t**2)
    d_sb = d.sigma_t * d.rho - d.rho_t**2
    return [np.broadcast_to(np.asarray(x, dtype=float), shape) for x in (mu_s, mu_b, d_ss, d_bb, d_sb)]


def domain(mc, shifts, spec: GridSpec, s0: float, b0: float):
    """Truncated ``(s, b)`` box covering the drift under every listed measure
    plus ``n_sd`` standard deviations."""
    s, b, t = sample_states(mc, spec.T, n=5, s_half=1.0, b_half=0.5)
    s, b = s + s0, b + b0
    d = derive(mc, s, b, t)
    vol_s = float(np.sqrt(np.max(d.sigma_t**2 + d.rho_t**2)))
    vol_b = float(np.sqrt(np.max(d.rho**2 + d.rho_t**2)))
    mus, mub = [0.0], [0.0]
    for sh in shifts:
        f = _fields(mc, sh, s, b, t)
        mus += [float(f[0].min()), float(f[0].max())]
        mub += [float(f[1].min()), float(f[1].max())]
    T = spec.T
    hw_s = max(spec.n_sd * vol_s * np.sqrt(T), spec.min_half_width)
    hw_b = max(spec.n_sd * vol_b * np.sqrt(T), spec.min_half_width)
    if spec.s_range:
        s_nodes = np.linspace(*spec.s_range, spec.n_s)
    else:
        s_nodes = _anchored(s0 + min(mus) * T - hw_s, s0 + max(mus) * T + hw_s, spec.n_s, s0)
    if spec.b_range:
        b_nodes = np.linspace(*spec.b_range, spec.n_b)
    else:
        b_nodes = _anchored(b0 + min(mub) * T - hw_b, b0 + max(mub) * T + hw_b, spec.n_b, b0)
    return s_nodes, b_nodes


def _anchored(lo, hi, n, x0):
    """``n`` equispaced nodes spanning ``[lo, hi]`` shifted so ``x0`` is a node."""
    h = (hi - lo) / (n - 1)
    k = int(np.clip(round((x0 - lo) / h), 1, n - 2))
    return x0 + (np.arange(n) - k) * h


# --- 1-D operators -------------------------------------------------------------


def _stencil(mu, D, h):
    """Three-point weights; upwind where the cell Peclet number exceeds 2."""
    upwind = np.abs(mu) * h > 2 * D
    lo = np.where(upwind, D / h**2 + np.maximum(-mu, 0) / h, D / h**2 - mu / (2 * h))
    up = np.where(upwind, D / h**2 + np.maximum(mu, 0) / h, D / h**2 + mu / (2 * h))
    return lo, -(lo + up), up


def _apply(u, lo, di, up, axis):
    """Explicit operator along ``axis`` on interior nodes; zero at the edges."""
    u = np.moveaxis(u, axis, 0)
    lo, di, up = (np.moveaxis(x, axis, 0)[1:-1] for x in (lo, di, up))
    out = np.zeros_like(u)
    out[1:-1] = lo * u[:-2] + di * u[1:-1] + up * u[2:]
    return np.moveaxis(out, 0, axis)


def _extrapolate(u, axis):
    u = np.moveaxis(u, axis, 0)
    u[0] = 2 * u[1] - u[2]
    u[-1] = 2 * u[-2] - u[-3]
    return np.moveaxis(u, 0, axis)


def _solve_axis(rhs, lo, di, up, c, axis):
    """Solve ``(I - c L) y = rhs`` along ``axis`` with linear extrapolation at
    both ends, batched over the other axis (Thomas algorithm)."""
    r = np.moveaxis(rhs, axis, 0)
    lo, di, up = (np.moveaxis(x, axis, 0)[1:-1] for x in (lo, di, up))
    a = -c * lo
    bdiag = 1 - c * di
    cc = -c * up
    a = a.copy()
    bdiag = bdiag.copy()
    cc = cc.copy()
    # u_0 = 2 u_1 - u_2 and u_{n-1} = 2 u_{n-2} - u_{n-3}
    bdiag[0] = bdiag[0] + 2 * a[0]
    cc[0] = cc[0] - a[0]
    bdiag[-1] = bdiag[-1] + 2 * cc[-1]
    a[-1] = a[-1] - cc[-1]
    d = r[1:-1].copy()
    m = d.shape[0]
    cp = np.empty_like(d)
    dp = np.empty_like(d)
    cp[0] = cc[0] / bdiag[0]
    dp[0] = d[0] / bdiag[0]
    for i in range(1, m):
        denom = bdiag[i] - a[i] * cp[i - 1]
        cp[i] = cc[i] / denom
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom
    y = np.empty_like(r)
    y[-2] = dp[-1]
    for i in range(m - 2, -1, -1):
        y[i + 1] = dp[i] - cp[i] * y[i + 2]
    y[0] = 2 * y[1] - y[2]
    y[-1] = 2 * y[-2] - y[-3]
    return np.moveaxis(y, 0, axis)


def _cross(u, coef, hs, hb):
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = coef[1:-1, 1:-1] * (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hs * hb)
    return out


def adi_backward(coef_fn, terminal, s_nodes, b_nodes, t_nodes, source_fn=None, implicitness=0.5, rannacher_steps=2):
    """March ``u_t + L(t) u + f(t) = 0`` backward from ``u(T) = terminal``.

    ``coef_fn(t)`` returns ``(mu_s, mu_b, D_ss, D_bb, D_sb)`` on the mesh, where
    ``L u = mu_s u_s + mu_b u_b + D_ss u_ss + D_bb u_bb + D_sb u_sb``.
    ``source_fn(j)`` returns ``f`` at time level ``j``.  Returns all levels.
    """
    hs = s_nodes[1] - s_nodes[0]
    hb = b_nodes[1] - b_nodes[0]
    n_t = len(t_nodes) - 1
    out = np.empty((n_t + 1,) + terminal.shape)
    out[-1] = terminal
    u = terminal.astype(float).copy()
    if implicitness <= 0:
        mu_s, mu_b, d_ss, d_bb, _ = coef_fn(t_nodes[-1])
        tau = t_nodes[1] - t_nodes[0]
        rate = np.max(2 * d_ss / hs**2 + 2 * d_bb / hb**2 + np.abs(mu_s) / hs + np.abs(mu_b) / hb)
        if tau * rate > 1:
            raise StabilityError(f"explicit scheme unstable: dt * rate = {tau * rate:.3g} > 1")

    def source(j):
        return 0.0 if source_fn is None else source_fn(j)

    def douglas(u, t0, t1, f, th):
        tau = t1 - t0
        mu_s, mu_b, d_ss, d_bb, d_sb = coef_fn(0.5 * (t0 + t1))
        ls = _stencil(mu_s, d_ss, hs)
        lb = _stencil(mu_b, d_bb, hb)
        a1 = _apply(u, *ls, axis=0)
        a2 = _apply(u, *lb, axis=1)
        y = u + tau * (_cross(u, d_sb, hs, hb) + a1 + a2 + f)
        if th == 0:
            return _extrapolate(_extrapolate(y, 0), 1)
        y = _solve_axis(y - th * tau * a1, *ls, th * tau, axis=0)
        y = _solve_axis(y - th * tau * a2, *lb, th * tau, axis=1)
        return _extrapolate(y, 0)

    for j in range(n_t - 1, -1, -1):
        t0, t1 = t_nodes[j], t_nodes[j + 1]
        f_mid = 0.5 * (source(j) + source(j + 1))
        if n_t - 1 - j < rannacher_steps:
            tm = 0.5 * (t0 + t1)
            u = douglas(u, tm, t1, f_mid, 1.0)
            u = douglas(u, t0, tm, f_mid, 1.0)
        else:
            u = douglas(u, t0, t1, f_mid, implicitness)
        out[j] = u
    return out


# --- public solvers ----------------------------------------------------------------


def solve_H(mc, shift, claim, spec: GridSpec | None = None, *, S0: float = 1.0, B0: float = 1.0, extra_shifts=()) -> GridSolution:
    """Solve the pricing equation for ``H = E_theta[F | s, b, t]``.

    ``extra_shifts`` widens the domain so paths simulated under other
    measures (for instance the historical one) stay inside it.
    """
    spec = spec or GridSpec()
    s0, b0 = np.log(S0 / B0), np.log(B0)
    s_nodes, b_nodes = domain(mc, [shift, None, *extra_shifts], spec, s0, b0)
    t_nodes = np.linspace(0.0, spec.T, spec.n_t + 1)
    S, Bm = np.meshgrid(s_nodes, b_nodes, indexing="ij")
    terminal = np.asarray(claim(np.exp(S), np.exp(Bm)), dtype=float)
    cache = {}

    def coef_fn(t):
        if mc.is_constant and (shift is None or shift.is_constant):
            t = 0.0
        if t not in cache:
            cache.clear()
            cache[t] = _fields(mc, shift, S, Bm, t)
        return cache[t]

    values = adi_backward(coef_fn, terminal, s_nodes, b_nodes, t_nodes, None, spec.implicitness, spec.rannacher_steps)
    if not np.all(np.isfinite(values)):
        raise StabilityError("non-finite values in PDE solution")
    return GridSolution(s_nodes, b_nodes, t_nodes, values, s0, b0, mc, shift, claim)


def eta_field(solution: GridSolution, j: int | None = None):
    """Residual integrand ``eta = U - alpha V`` with ``U = H_s V + H_b V_t`` on
    the mesh, at level ``j`` (or every level)."""
    mc = solution.mc
    S, Bm = np.meshgrid(solution.s_nodes, solution.b_nodes, indexing="ij")
    hs, hb = solution.gradients
    levels = range(len(solution.t_nodes)) if j is None else [j]
    out = []
    for jj in levels:
        d = derive(mc, S, Bm, solution.t_nodes[jj])
        U = hs[jj][..., None] * d.V + hb[jj][..., None] * d.V_t
        alpha = np.sum(U * d.V, axis=-1) / d.V_norm2
        out.append(U - alpha[..., None] * d.V)
    return np.stack(out) if j is None else out[0]


@dataclass(eq=False)
class ErrorMoment:
    value: float
    m: np.ndarray
    n: np.ndarray
    solution: GridSolution


def error_moment_pde(solution: GridSolution, spec: GridSpec | None = None) -> ErrorMoment:
    """``E R^2`` under the historical measure via the reduction
    ``J(x, s, b, t) = x^2 + 2 x m + n``.

    ``m`` solves ``m_t + L m + A = 0`` and ``n`` solves
    ``n_t + L n + |eta|^2 + 2 A m + 2 (eta . V_t) m_b = 0``, both with zero
    terminal data, where ``L`` is the historical generator of ``(s, b)`` and
    ``A = eta . theta``.
    """
    spec = spec or GridSpec()
    mc, shift = solution.mc, solution.shift
    s_nodes, b_nodes, t_nodes = solution.s_nodes, solution.b_nodes, solution.t_nodes
    S, Bm = np.meshgrid(s_nodes, b_nodes, indexing="ij")
    eta = eta_field(solution)
    shape = S.shape
    A = np.stack([np.sum(eta[j] * _theta_on(shift, S, Bm, t, shape), axis=-1) for j, t in enumerate(t_nodes)])
    Vt = np.stack([derive(mc, S, Bm, t).V_t for t in t_nodes])
    eta_vt = np.sum(eta * Vt, axis=-1)
    eta2 = np.sum(eta**2, axis=-1)

    def coef_fn(t):
        return _fields(mc, None, S, Bm, t)

    zero = np.zeros(shape)
    m = adi_backward(coef_fn, zero, s_nodes, b_nodes, t_nodes, lambda j: A[j], spec.implicitness, spec.rannacher_steps)
    m_b = np.gradient(m, b_nodes, axis=2)
    src = eta2 + 2 * A * m + 2 * eta_vt * m_b
    n = adi_backward(coef_fn, zero, s_nodes, b_nodes, t_nodes, lambda j: src[j], spec.implicitness, spec.rannacher_steps)
    sol_n = GridSolution(s_nodes, b_nodes, t_nodes, n, solution.s0, solution.b0)
    return ErrorMoment(sol_n.at_origin(), m, n, solution)


# --- full 3-D check ---------------------------------------------------------------


def _d1(n, h):
    main = np.zeros(n)
    off = np.full(n - 1, 1 / (2 * h))
    return sp.diags([-off, main, off], [-1, 0, 1], format="lil")


def _d2(n, h):
    return sp.diags([np.full(n - 1, 1 / h**2), np.full(n, -2 / h**2), np.full(n - 1, 1 / h**2)], [-1, 0, 1], format="lil")


def error_moment_3d(solution: GridSolution, n_x: int = 11, x_half: float = 1.0) -> float:
    """Solve the full Kolmogorov equation in ``(x, s, b)`` with implicit Euler
    and return ``J(0, s0, b0, 0)``.  Meant for coarse grids only."""
    mc, shift = solution.mc, solution.shift
    s_nodes, b_nodes, t_nodes = solution.s_nodes, solution.b_nodes, solution.t_nodes
    x_nodes = np.linspace(-x_half, x_half, n_x)
    ns, nb = len(s_nodes), len(b_nodes)
    hx, hs, hb = x_nodes[1] - x_nodes[0], s_nodes[1] - s_nodes[0], b_nodes[1] - b_nodes[0]
    Ix, Is, Ib = sp.identity(n_x), sp.identity(ns), sp.identity(nb)

    def kron3(a, b, c):
        return sp.kron(sp.kron(a, b), c, format="csr")

    Dx, Ds, Db = kron3(_d1(n_x, hx), Is, Ib), kron3(Ix, _d1(ns, hs), Ib), kron3(Ix, Is, _d1(nb, hb))
    Dxx, Dss, Dbb = kron3(_d2(n_x, hx), Is, Ib), kron3(Ix, _d2(ns, hs), Ib), kron3(Ix, Is, _d2(nb, hb))
    Dxs, Dxb, Dsb = Dx @ Ds, Dx @ Db, Ds @ Db
    X, S, Bm = np.meshgrid(x_nodes, s_nodes, b_nodes, indexing="ij")
    N = X.size
    idx = np.arange(N).reshape(X.shape)
    interior = np.zeros(X.shape, bool)
    interior[1:-1, 1:-1, 1:-1] = True

    # boundary rows: quadratic extrapolation in x, linear in s and b
    rows, cols, vals = [], [], []
    for i in range(n_x):
        for k in range(ns):
            for l in range(nb):
                if interior[i, k, l]:
                    continue
                p = idx[i, k, l]
                if i == 0 or i == n_x - 1:
                    sgn = 1 if i == 0 else -1
                    stencil = [(idx[i, k, l], 1.0), (idx[i + sgn, k, l], -3.0), (idx[i + 2 * sgn, k, l], 3.0), (idx[i + 3 * sgn, k, l], -1.0)]
                elif k == 0 or k == ns - 1:
                    sgn = 1 if k == 0 else -1
                    stencil = [(idx[i, k, l], 1.0), (idx[i, k + sgn, l], -2.0), (idx[i, k + 2 * sgn, l], 1.0)]
                else:
                    sgn = 1 if l == 0 else -1
                    stencil = [(idx[i, k, l], 1.0), (idx[i, k, l + sgn], -2.0), (idx[i, k, l + 2 * sgn], 1.0)]
                for c, v in stencil:
                    rows.append(p)
                    cols.append(c)
                    vals.append(v)
    bnd = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    keep = sp.diags(interior.ravel().astype(float))
    eta = eta_field(solution)
    shape2 = (ns, nb)
    S2, B2 = np.meshgrid(s_nodes, b_nodes, indexing="ij")

    def operator(j):
        t = t_nodes[j]
        d = derive(mc, S2, B2, t)
        mu_s, mu_b, d_ss, d_bb, d_sb = _fields(mc, None, S2, B2, t)
        e = eta[j]
        A = np.sum(e * _theta_on(shift, S2, B2, t, shape2), axis=-1)
        v1, v2 = e[..., 0], e[..., 1]
        fld = {
            "x": A, "s": mu_s, "b": mu_b,
            "xx": 0.5 * (v1**2 + v2**2), "ss": d_ss, "bb": d_bb,
            "xs": v1 * d.sigma_t - v2 * d.rho_t, "xb": v1 * d.rho + v2 * d.rho_t, "sb": d_sb,
        }
        ops = {"x": Dx, "s": Ds, "b": Db, "xx": Dxx, "ss": Dss, "bb": Dbb, "xs": Dxs, "xb": Dxb, "sb": Dsb}
        L = sp.csr_matrix((N, N))
        for key, op in ops.items():
            coef = np.broadcast_to(fld[key][None], X.shape).ravel()
            L = L + sp.diags(coef) @ op
        return L

    u = (X**2).ravel()
    I = sp.identity(N, format="csr")
    for j in range(len(t_nodes) - 2, -1, -1):
        tau = t_nodes[j + 1] - t_nodes[j]
        L = operator(j)
        M = keep @ (I - tau * L) + bnd
        rhs = interior.ravel() * u
        u = splu(M.tocsc()).solve(rhs)
    U = u.reshape(X.shape)
    i0 = n_x // 2
    level = U[i0]
    sol = GridSolution(s_nodes, b_nodes, t_nodes[:2], np.stack([level, level]), solution.s0, solution.b0)
    return sol.at_origin()
