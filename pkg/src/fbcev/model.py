"""Scalar model configuration, time rescalings, and the boundary-curve type.

Calendar time enters only through ``scale_time``; everywhere else the
dimensionless time t = sigma^2/2 * (time to expiry) is used, together with
rho = 2 r / sigma^2 and its large-deviation companion lam = -log rho.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import exp, log

import numpy as np

__all__ = [
    "ModelParams",
    "TimePoint",
    "BoundaryCurve",
    "scale_time",
    "make_params",
    "curve_eval",
    "pchip_slopes",
    "monotone_slopes",
]

_MONOTONE_SLACK = 1e-8


def scale_time(t0: float, tf: float, sigma: float) -> float:
    """Map a calendar interval [t0, tf] to dimensionless time sigma^2 (tf - t0) / 2."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if tf < t0:
        raise ValueError(f"expiry {tf} precedes valuation time {t0}")
    return 0.5 * sigma * sigma * (tf - t0)


@dataclass(frozen=True)
class ModelParams:
    """Strike, rate, volatility and the derived dimensionless pair (rho, lam).

    rho = 2r/sigma^2 when built from rates; lam = -log rho.  lam is the large
    parameter of the small-rho expansions and is only meaningful for rho < 1;
    the exact solvers accept rho >= 1 but the asymptotic evaluators refuse it.
    """

    strike: float
    rho: float
    rate: float | None = None
    sigma: float | None = None
    lam: float = field(init=False)

    def __post_init__(self):
        if self.strike <= 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        object.__setattr__(self, "lam", -log(self.rho))
        if self.rho >= 1.0:
            warnings.warn(
                f"rho = {self.rho} >= 1: exact solvers remain valid but the "
                "small-rho asymptotic evaluators will refuse these parameters",
                stacklevel=3,
            )

    @property
    def small_rho(self) -> bool:
        return self.rho < 1.0

    @classmethod
    def from_rho(cls, strike: float, rho: float) -> "ModelParams":
        return cls(strike=strike, rho=rho)


def make_params(strike: float, rate: float, sigma: float) -> ModelParams:
    """Build ModelParams from (K, r, sigma); rho = 2 r / sigma^2.

    r = 0 is rejected: rho must stay positive (the perpetual formulas divide
    by rho).  rho >= 1 is allowed but flagged with a warning.
    """
    if rate <= 0.0:
        raise ValueError(f"rate must be positive, got {rate}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if strike <= 0.0:
        raise ValueError(f"strike must be positive, got {strike}")
    return ModelParams(strike=strike, rho=2.0 * rate / (sigma * sigma), rate=rate, sigma=sigma)


@dataclass(frozen=True)
class TimePoint:
    """One instant seen through the four scaled clocks of the expansion regimes.

    t is dimensionless time; omega = lam*t, Lambda = lam^2 t - lam K and
    v = rho*t are the regime-(i)/(iii), regime-(ii) and regime-(v) variables.
    """

    t: float
    omega: float
    Lambda: float
    v: float

    @classmethod
    def from_t(cls, t: float, params: ModelParams) -> "TimePoint":
        lam, k = params.lam, params.strike
        return cls(t=t, omega=lam * t, Lambda=lam * lam * t - lam * k, v=params.rho * t)

    @classmethod
    def from_omega(cls, omega: float, params: ModelParams) -> "TimePoint":
        return cls.from_t(omega / params.lam, params)

    @classmethod
    def from_Lambda(cls, Lambda: float, params: ModelParams) -> "TimePoint":
        lam, k = params.lam, params.strike
        return cls.from_t((Lambda + lam * k) / (lam * lam), params)

    @classmethod
    def from_v(cls, v: float, params: ModelParams) -> "TimePoint":
        return cls.from_t(v / params.rho, params)


def pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson monotone cubic slopes (same convention as SciPy's PCHIP)."""
    n = len(x)
    if n == 1:
        return np.zeros(1)
    h = np.diff(x)
    m = np.diff(y) / h
    if n == 2:
        return np.array([m[0], m[0]])
    d = np.zeros(n)
    # interior: weighted harmonic mean where the secants agree in sign
    mk0, mk1 = m[:-1], m[1:]
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        whmean = (w1 + w2) / (w1 / mk0 + w2 / mk1)
    ok = (mk0 * mk1) > 0.0
    d[1:-1] = np.where(ok, whmean, 0.0)
    d[0] = _edge_slope(h[0], h[1], m[0], m[1])
    d[-1] = _edge_slope(h[-1], h[-2], m[-1], m[-2])
    return d


def _edge_slope(h0: float, h1: float, m0: float, m1: float) -> float:
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > 3.0 * abs(m0):
        return 3.0 * m0
    return d


def _spline_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """First derivatives of the not-a-knot C2 cubic spline (4th-order accurate)."""
    n = len(x)
    h = np.diff(x)
    m = np.diff(y) / h
    if n == 2:
        return np.array([m[0], m[0]])
    if n == 3:
        # single parabola through the three points
        d = np.empty(3)
        w = h[0] + h[1]
        d[0] = ((2.0 * h[0] + h[1]) * m[0] - h[0] * m[1]) / w
        d[1] = (h[1] * m[0] + h[0] * m[1]) / w
        d[2] = ((2.0 * h[1] + h[0]) * m[1] - h[1] * m[0]) / w
        return d
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros(n)
    lower[1:-1] = 1.0 / h[:-1]
    upper[1:-1] = 1.0 / h[1:]
    diag[1:-1] = 2.0 * (lower[1:-1] + upper[1:-1])
    rhs[1:-1] = 3.0 * (m[:-1] / h[:-1] + m[1:] / h[1:])
    # not-a-knot ends
    diag[0] = h[1]
    upper[0] = h[0] + h[1]
    rhs[0] = ((h[0] + 2.0 * (h[0] + h[1])) * h[1] * m[0] + h[0] ** 2 * m[1]) / (h[0] + h[1])
    diag[-1] = h[-2]
    lower[-1] = h[-1] + h[-2]
    rhs[-1] = (h[-1] ** 2 * m[-2] + (2.0 * (h[-1] + h[-2]) + h[-1]) * h[-2] * m[-1]) / (
        h[-1] + h[-2]
    )
    # Thomas solve
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    d = np.empty(n)
    d[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        d[i] = dp[i] - cp[i] * d[i + 1]
    return d


def monotone_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Shape-preserving Hermite slopes with spline accuracy (Hyman limiting).

    Not-a-knot spline slopes (O(h^4) where the data is smooth) clipped into
    the Fritsch-Carlson monotonicity box [0, 3 min(|d_-|, |d_+|)] per node.
    On smooth strictly monotone data the limiter is inactive and full spline
    accuracy survives; on rough data the interpolant stays monotone.
    """
    n = len(x)
    if n == 1:
        return np.zeros(1)
    d = _spline_slopes(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    m = np.diff(y) / np.diff(x)
    ml = np.concatenate([[m[0]], m])  # secant left of each node
    mr = np.concatenate([m, [m[-1]]])  # secant right of each node
    opposite = ml * mr <= 0.0
    cap = 3.0 * np.minimum(np.abs(ml), np.abs(mr))
    sign = np.sign(mr)
    sign[opposite] = 0.0
    limited = np.clip(d * sign, 0.0, cap) * sign
    if n > 2:
        limited[0] = _edge_case_limit(d[0], m[0])
        limited[-1] = _edge_case_limit(d[-1], m[-1])
    return limited


def _edge_case_limit(d: float, m_adj: float) -> float:
    if d * m_adj <= 0.0:
        return 0.0
    return np.sign(m_adj) * min(abs(d), 3.0 * abs(m_adj))


def hermite_design(
    nodes: np.ndarray, queries: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-query interval index and cubic-Hermite basis weights.

    For values y with slopes d, the interpolant at query q is
    b0*y[i] + b1*y[i+1] + b2*d[i] + b3*d[i+1].  Queries beyond the last node
    collapse onto it (constant extension); queries below the first node are
    clamped to it.  The design depends only on node *positions*, so it can be
    reused across curves that share a grid.
    """
    n = len(nodes)
    if n < 2:
        raise ValueError("hermite design needs at least two nodes")
    left = np.clip(np.searchsorted(nodes, queries, side="right") - 1, 0, n - 2)
    h = nodes[left + 1] - nodes[left]
    s = np.clip((queries - nodes[left]) / h, 0.0, 1.0)
    s2 = s * s
    s3 = s2 * s
    b0 = 2.0 * s3 - 3.0 * s2 + 1.0
    b1 = -2.0 * s3 + 3.0 * s2
    b2 = (s3 - 2.0 * s2 + s) * h
    b3 = (s3 - s2) * h
    return left, b0, b1, b2, b3


@dataclass(frozen=True)
class BoundaryCurve:
    """Sampled early-exercise boundary t -> alpha(t), monotonically interpolable.

    Nodes are strictly increasing times starting at t = 0; values are positive
    and non-increasing (a small slack absorbs solver round-off).  Beyond the
    last node the curve extends by ``tail_value`` when set, else by its last
    value.  Interpolation is shape-preserving monotone cubic *in sqrt(t)*: the
    boundary leaves the strike with a square-root profile whose t-derivative
    is unbounded, which a cubic in t cannot represent, while in sqrt(t) the
    shape is mild.  Residuals can be differentiated through ``eval`` without
    overshoot artifacts.
    """

    nodes: np.ndarray
    values: np.ndarray
    tail_value: float | None = None
    knots: np.ndarray = field(init=False, repr=False, compare=False)  # sqrt(nodes)
    slopes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("curve needs at least one node")
        if nodes.shape != values.shape:
            raise ValueError("nodes and values must have equal length")
        if nodes[0] != 0.0:
            raise ValueError(f"first node must be t = 0, got {nodes[0]}")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0.0):
            raise ValueError("nodes must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("boundary values must be finite and positive")
        slack = _MONOTONE_SLACK * float(values.max())
        if nodes.size > 1 and np.any(np.diff(values) > slack):
            raise ValueError("boundary values must be non-increasing")
        if self.tail_value is not None:
            if not (0.0 < self.tail_value <= values[-1] + slack):
                raise ValueError(f"tail value {self.tail_value} inconsistent with curve")
        knots = np.sqrt(nodes)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "slopes", monotone_slopes(knots, values))

    @property
    def t_max(self) -> float:
        return float(self.nodes[-1])

    def eval(self, t):
        """alpha(t) for scalar or array t >= 0."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise ValueError("time must be non-negative")
        if len(self.nodes) == 1:
            out = np.full(np.atleast_1d(t_arr).shape, self.values[0])
        else:
            left, b0, b1, b2, b3 = hermite_design(self.knots, np.sqrt(np.atleast_1d(t_arr)))
            y, d = self.values, self.slopes
            out = b0 * y[left] + b1 * y[left + 1] + b2 * d[left] + b3 * d[left + 1]
        if self.tail_value is not None:
            out = np.where(np.atleast_1d(t_arr) > self.nodes[-1], self.tail_value, out)
        return float(out[0]) if t_arr.ndim == 0 else out

    def end_value(self) -> float:
        return self.tail_value if self.tail_value is not None else float(self.values[-1])

    def floor_value(self) -> float:
        lo = float(self.values.min())
        if self.tail_value is not None:
            lo = min(lo, self.tail_value)
        return lo

    def with_tail(self, tail: float) -> "BoundaryCurve":
        return BoundaryCurve(self.nodes, self.values, tail_value=tail)


def curve_eval(curve: BoundaryCurve, t):
    """Evaluate a boundary curve at time(s) t; see BoundaryCurve.eval."""
    return curve.eval(t)
