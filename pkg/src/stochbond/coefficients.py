"""Market coefficients for the stock / stochastic-bond model.

The stock and bond follow

    dS = S (a dt + sigma dw)
    dB = B (r dt + rho dw + rho_t dw~)

with (w, w~) independent Brownian motions.  Each coefficient is a
:class:`Constant`, a :class:`PiecewiseConstant` function of time, or (Markov
mode) a :class:`Tabulated` bilinear function of the log-state
``(s, b) = (log S/B, log B)`` on each time slab.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegenerateCoefficientsError

DEFAULT_BOUND = 10.0
DEGENERACY_TOL = 1e-12
K_FAMILY_DET_MIN = 1e-8


class Coefficient:
    """Base class: a scalar field evaluated on broadcastable ``(s, b, t)``."""

    depends_on_time = False
    depends_on_state = False

    def __call__(self, s, b, t) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Coefficient):
    value: float

    def __call__(self, s, b, t):
        shape = np.broadcast_shapes(np.shape(s), np.shape(b), np.shape(t))
        return np.full(shape, float(self.value))

    def to_json(self):
        return float(self.value)


@dataclass(frozen=True)
class PiecewiseConstant(Coefficient):
    """``values[i]`` holds on ``[times[i], times[i+1])``; ``times[0]`` must be 0."""

    times: tuple
    values: tuple
    depends_on_time = True

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        values = tuple(float(x) for x in self.values)
        if len(times) != len(values) or not times:
            raise ValueError("times and values must be non-empty and of equal length")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, s, b, t):
        shape = np.broadcast_shapes(np.shape(s), np.shape(b), np.shape(t))
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return np.broadcast_to(np.asarray(self.values)[idx], shape).astype(float)

    def to_json(self):
        return {"times": list(self.times), "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class Tabulated(Coefficient):
    """Bilinear table in ``(s, b)`` per time slab, clamped outside the nodes.

    ``tables`` has shape ``(n_slabs, len(s_nodes), len(b_nodes))`` and slab
    ``i`` covers ``[slab_times[i], slab_times[i+1])``.
    """

    s_nodes: np.ndarray
    b_nodes: np.ndarray
    tables: np.ndarray
    slab_times: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    depends_on_state = True

    def __post_init__(self):
        s_nodes = np.asarray(self.s_nodes, dtype=float)
        b_nodes = np.asarray(self.b_nodes, dtype=float)
        slab_times = np.atleast_1d(np.asarray(self.slab_times, dtype=float))
        tables = np.asarray(self.tables, dtype=float)
        if tables.ndim == 2:
            tables = tables[None]
        if tables.shape != (len(slab_times), len(s_nodes), len(b_nodes)):
            raise ValueError(f"table shape {tables.shape} does not match nodes")
        if len(s_nodes) < 2 or len(b_nodes) < 2:
            raise ValueError("need at least two nodes per axis")
        if np.any(np.diff(s_nodes) <= 0) or np.any(np.diff(b_nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if slab_times[0] != 0.0 or np.any(np.diff(slab_times) <= 0):
            raise ValueError("slab_times must start at 0 and be strictly increasing")
        object.__setattr__(self, "s_nodes", s_nodes)
        object.__setattr__(self, "b_nodes", b_nodes)
        object.__setattr__(self, "slab_times", slab_times)
        object.__setattr__(self, "tables", tables)

    @property
    def depends_on_time(self):
        return len(self.slab_times) > 1

    def __call__(self, s, b, t):
        s, b, t = np.broadcast_arrays(
            np.asarray(s, dtype=float), np.asarray(b, dtype=float), np.asarray(t, dtype=float)
        )
        slab = np.clip(np.searchsorted(self.slab_times, t, side="right") - 1, 0, len(self.slab_times) - 1)
        i, wi = _locate(self.s_nodes, s)
        j, wj = _locate(self.b_nodes, b)
        tab = self.tables
        return (
            (1 - wi) * (1 - wj) * tab[slab, i, j]
            + wi * (1 - wj) * tab[slab, i + 1, j]
            + (1 - wi) * wj * tab[slab, i, j + 1]
            + wi * wj * tab[slab, i + 1, j + 1]
        )

    def to_json(self):
        return {
            "s_nodes": self.s_nodes.tolist(),
            "b_nodes": self.b_nodes.tolist(),
            "slab_times": self.slab_times.tolist(),
            "tables": self.tables.tolist(),
        }


def _locate(nodes, x):
    x = np.clip(x, nodes[0], nodes[-1])
    i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
    w = (x - nodes[i]) / (nodes[i + 1] - nodes[i])
    return i, w


def as_coefficient(value) -> Coefficient:
    if isinstance(value, Coefficient):
        return value
    if isinstance(value, dict):
        if "tables" in value:
            return Tabulated(
                value["s_nodes"], value["b_nodes"], value["tables"], value.get("slab_times", [0.0])
            )
        return PiecewiseConstant(tuple(value["times"]), tuple(value["values"]))
    return Constant(float(value))


@dataclass(frozen=True)
class DerivedCoefficients:
    """Raw and derived coefficients evaluated at a batch of states.

    ``a_t`` is the drift of the discounted price S/B and ``sigma_t = sigma - rho``.
    """

    a: np.ndarray
    sigma: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    rho_t: np.ndarray
    a_t: np.ndarray
    sigma_t: np.ndarray

    @property
    def V(self) -> np.ndarray:
        """Loadings of log(S/B) on (w, w~)."""
        return np.stack([self.sigma_t, -self.rho_t], axis=-1)

    @property
    def V_t(self) -> np.ndarray:
        """Loadings of log B on (w, w~)."""
        return np.stack([self.rho, self.rho_t], axis=-1)

    @property
    def V_norm2(self) -> np.ndarray:
        return self.sigma_t**2 + self.rho_t**2

    def s_drift(self) -> np.ndarray:
        """Historical drift of s = log(S/B)."""
        return self.a_t - 0.5 * self.sigma_t**2 - 0.5 * self.rho_t**2

    def b_drift(self) -> np.ndarray:
        """Historical drift of b = log B."""
        return self.r - 0.5 * self.rho**2 - 0.5 * self.rho_t**2


@dataclass(frozen=True)
class MarketCoefficients:
    a: Coefficient
    sigma: Coefficient
    r: Coefficient
    rho: Coefficient
    rho_tilde: Coefficient
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        for name in ("a", "sigma", "r", "rho", "rho_tilde"):
            object.__setattr__(self, name, as_coefficient(getattr(self, name)))

    @classmethod
    def constant(cls, a, sigma, r, rho, rho_tilde, bound=DEFAULT_BOUND):
        return cls(Constant(a), Constant(sigma), Constant(r), Constant(rho), Constant(rho_tilde), bound)

    @classmethod
    def from_json(cls, block: dict, bound: float = DEFAULT_BOUND) -> "MarketCoefficients":
        missing = {"a", "sigma", "r", "rho", "rho_tilde"} - set(block)
        if missing:
            raise KeyError(f"coefficient block missing {sorted(missing)}")
        return cls(
            block["a"], block["sigma"], block["r"], block["rho"], block["rho_tilde"],
            bound=float(block.get("bound", bound)),
        )

    def to_json(self) -> dict:
        return {name: getattr(self, name).to_json() for name in self._names}

    _names = ("a", "sigma", "r", "rho", "rho_tilde")

    def _coefs(self):
        return [getattr(self, n) for n in self._names]

    @property
    def is_constant(self) -> bool:
        return all(isinstance(c, Constant) for c in self._coefs())

    @property
    def is_markov(self) -> bool:
        return any(c.depends_on_state for c in self._coefs())

    @property
    def is_random(self) -> bool:
        return self.is_markov

    def evaluate(self, s=0.0, b=0.0, t=0.0) -> tuple[np.ndarray, ...]:
        return tuple(c(s, b, t) for c in self._coefs())


def derive(mc: MarketCoefficients, s=0.0, b=0.0, t=0.0) -> DerivedCoefficients:
    """Evaluate raw and derived coefficients at ``(s, b, t)``.

    Raises :class:`DegenerateCoefficientsError` if ``V = (sigma - rho, -rho_t)``
    vanishes anywhere in the batch.
    """
    a, sigma, r, rho, rho_t = mc.evaluate(s, b, t)
    sigma_t = sigma - rho
    a_t = a - r + rho**2 - sigma * rho + rho_t**2
    if np.any(sigma_t**2 + rho_t**2 <= DEGENERACY_TOL**2):
        raise DegenerateCoefficientsError("|V| = 0: sigma = rho and rho_tilde = 0 at some state")
    return DerivedCoefficients(a, sigma, r, rho, rho_t, a_t, sigma_t)


@dataclass(frozen=True)
class Violation:
    name: str
    state: tuple
    value: float


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def names(self) -> list[str]:
        return sorted({v.name for v in self.violations})

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"name": v.name, "state": list(v.state), "value": v.value} for v in self.violations
            ],
        }


def sample_states(mc: MarketCoefficients, T: float = 1.0, n: int = 9, s_half=2.0, b_half=1.0):
    """A grid of ``(s, b, t)`` states used for sampled invariant checks."""
    ss, bs, ts = np.linspace(-s_half, s_half, n), np.linspace(-b_half, b_half, n), np.linspace(0.0, T, n)
    for c in mc._coefs():
        if isinstance(c, PiecewiseConstant):
            ts = np.union1d(ts, [x for x in c.times if x <= T])
        elif isinstance(c, Tabulated):
            ss = np.union1d(ss, c.s_nodes)
            bs = np.union1d(bs, c.b_nodes)
            ts = np.union1d(ts, [x for x in c.slab_times if x <= T])
    S, B, Tt = np.meshgrid(ss, bs, ts, indexing="ij")
    return S.ravel(), B.ravel(), Tt.ravel()


def validate(mc: MarketCoefficients, k_family: bool = False, states=None, T: float = 1.0) -> ValidationReport:
    """Check boundedness and nondegeneracy on sampled states.

    The nondegeneracy check requires either ``inf |sigma - rho| > 0`` or
    ``inf |rho_tilde| > 0``.  With ``k_family=True`` the determinant
    ``sigma_t * rho_t + rho * rho_t`` must also stay away from zero.
    """
    s, b, t = sample_states(mc, T) if states is None else states
    report = ValidationReport()
    raw = dict(zip(mc._names, mc.evaluate(s, b, t)))

    def first(mask, name, values):
        idx = np.flatnonzero(mask)
        if idx.size:
            i = idx[0]
            report.violations.append(Violation(name, (float(s[i]), float(b[i]), float(t[i])), float(values[i])))

    for name, vals in raw.items():
        first(np.abs(vals) > mc.bound, f"bound:{name}", vals)

    sigma_t = raw["sigma"] - raw["rho"]
    gap = np.abs(sigma_t)
    if gap.min() <= DEGENERACY_TOL and np.abs(raw["rho_tilde"]).min() <= DEGENERACY_TOL:
        i = int(np.argmin(gap))
        report.violations.append(Violation("nondegeneracy", (float(s[i]), float(b[i]), float(t[i])), float(gap[i])))

    if k_family:
        det = sigma_t * raw["rho_tilde"] + raw["rho"] * raw["rho_tilde"]
        first(np.abs(det) < K_FAMILY_DET_MIN, "k_family_determinant", det)
    return report
