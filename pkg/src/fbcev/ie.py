"""Nonlinear integral-equation solvers for the early-exercise boundary.

Three problems are solved here, all derived from the transform representation
of the put price:

* the boundary equation  e^{-K theta}/(K rho) =
  int_{theta/rho}^inf (z+1)^{-1} exp[-rho z alpha(tau(theta,z))] dz,
  discretized by collocation in theta and solved by damped Newton;
* the strike-window scaling equation  e^{-K nu}/K =
  int_0^inf xi^{-1} exp[-xi F(-nu K^2 - 1/xi)] dxi  for F(Lambda);
* the perpetual equation  K rho E1(x) = e^{-x}  with x = rho alpha(inf).

The semi-infinite integrals are computed in the variable w = log(z+1) (resp.
u = log xi), with Gauss-Legendre panels aligned to the interpolation knots and
an exponent cut where the integrand is below exp(-45) of its scale.  When the
decay constant rho*alpha is tiny the integrand is flat over hundreds of log
units before cutting off, which is exactly the regime the log-variable panels
are built for.  All residuals are solved in the form  K rho e^{K theta} I - 1,
so exponentially small right-hand sides never underflow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import exp, expm1, log, log1p

import numpy as np

from . import _kernels
from .asymptotics import alpha_composite, f_tail_neg, log_f_tail_pos
from .model import BoundaryCurve, ModelParams, hermite_design, monotone_slopes, pchip_slopes
from .specfun import log_e1

__all__ = [
    "FLambdaCurve",
    "SolveReport",
    "QuadratureError",
    "tau",
    "ie_residual",
    "solve_boundary",
    "solve_F",
    "perpetual_root",
    "boundary_to_csv",
    "boundary_from_csv",
    "boundary_to_json",
    "boundary_from_json",
    "flambda_to_csv",
]

_TAIL_EXP = 45.0  # integrand cut at exp(-45) relative to its scale
_Z_COEF_CAP = 1e280
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class QuadratureError(RuntimeError):
    """Raised when the estimated quadrature error exceeds its budget."""


@dataclass(frozen=True)
class SolveReport:
    """Convergence metadata for a solver run."""

    iterations: int
    residual_norm: float
    tolerance: float
    quadrature_points: int
    horizon_extension: bool
    status: str  # converged | failed | suspect
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True)
class FLambdaCurve:
    """Sampled strike-window scaling function Lambda -> F(Lambda).

    F is positive and strictly decreasing; interpolation happens in log space
    (the values span hundreds of orders of magnitude across the window), which
    also preserves positivity.  Outside ``valid_range`` the asymptotic tails
    take over (see asymptotics.alpha_regime_ii).
    """

    strike: float
    nodes: np.ndarray
    values: np.ndarray
    valid_range: tuple[float, float] = None  # type: ignore[assignment]
    log_values: np.ndarray = field(init=False, repr=False, compare=False)
    log_slopes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.size == 0 or nodes.shape != values.shape:
            raise ValueError("curve needs matching, non-empty nodes and values")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0.0):
            raise ValueError("Lambda nodes must be strictly increasing")
        if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("F values must be positive and finite")
        if nodes.size > 1 and not np.all(np.diff(values) < 0.0):
            raise ValueError("F must be strictly decreasing")
        if self.valid_range is None:
            object.__setattr__(self, "valid_range", (float(nodes[0]), float(nodes[-1])))
        lv = np.log(values)
        object.__setattr__(self, "log_values", lv)
        object.__setattr__(self, "log_slopes", pchip_slopes(nodes, lv))

    @property
    def Lambda_min(self) -> float:
        return float(self.nodes[0])

    @property
    def Lambda_max(self) -> float:
        return float(self.nodes[-1])

    def eval(self, Lambda):
        """F(Lambda) inside the sampled range."""
        q = np.asarray(Lambda, dtype=float)
        if np.any(q < self.nodes[0]) or np.any(q > self.nodes[-1]):
            raise ValueError("Lambda outside the sampled range; use the tail formulas")
        left, b0, b1, b2, b3 = hermite_design(self.nodes, np.atleast_1d(q))
        lv, d = self.log_values, self.log_slopes
        out = np.exp(b0 * lv[left] + b1 * lv[left + 1] + b2 * d[left] + b3 * d[left + 1])
        return float(out[0]) if q.ndim == 0 else out


def tau(theta: float, z: float, rho: float) -> float:
    """Time argument of the boundary inside the transform integral.

    tau = rho^{-1} log[ ((theta+rho)/theta) * (z/(z+1)) ], written in a
    cancellation-free log1p form; tau(theta, theta/rho) = 0 and
    tau -> rho^{-1} log(1 + rho/theta) as z -> inf.
    """
    if theta <= 0.0 or rho <= 0.0:
        raise ValueError("theta and rho must be positive")
    num = rho * z - theta
    if num < -1e-12 * theta:
        raise ValueError(f"z = {z} below the lower endpoint theta/rho = {theta / rho}")
    t = log1p(num / (theta * (z + 1.0))) / rho
    return max(t, 0.0)


def _subdivide(edges: list[float], max_width: float) -> np.ndarray:
    """Sorted panel edges with every gap at most max_width."""
    edges = sorted(set(edges))
    out = [edges[0]]
    for right in edges[1:]:
        gap = right - out[-1]
        if gap > max_width:
            k = int(np.ceil(gap / max_width))
            out.extend(out[-1] + gap * j / k for j in range(1, k))
        out.append(right)
    return np.asarray(out)


def _gl_points(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on each panel of an edge partition."""
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wts = (half[:, None] * _GL_W[None, :]).ravel()
    return pts, wts


def _theta_quadrature(
    theta: float,
    rho: float,
    knot_times: np.ndarray,
    t_offset: float,
    exp_offset: float,
    alpha_floor: float,
    max_width: float = 1.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature nodes for int_{theta/rho}^inf exp(-rho z alpha(...)) dz/(z+1).

    Works in w = log(z+1); panel edges are aligned with the preimages of the
    curve knots so the integrand is smooth inside every panel.  Returns the
    *absolute* curve times t_offset + tau(z), the exponent coefficients rho*z,
    and the dw weights.  The integration is cut once
    exp_offset - rho z alpha_floor < -45, i.e. where the integrand is dead
    relative to its scale for any curve bounded below by alpha_floor.
    """
    z0 = theta / rho
    w_lo = log1p(z0)
    horizon = log1p(rho / theta) / rho
    z_cut = (max(exp_offset, 0.0) + _TAIL_EXP) / (rho * alpha_floor)
    z_cut = min(max(z_cut, 2.0 * z0 + 2.0), _Z_COEF_CAP / max(rho, 1.0))
    w_hi = log1p(z_cut)

    edges = [w_lo, w_hi]
    # exponent rate at the lower endpoint is ~exp_offset per unit w; when that
    # scale is large the integrand is a boundary layer needing graded panels
    kappa0 = max(exp_offset, 0.0) + 1.0
    if kappa0 > 30.0:
        s = 0.1 / kappa0
        while s < min(1.0, w_hi - w_lo):
            edges.append(w_lo + s)
            s *= 1.5
    for t_i in knot_times:
        rel = t_i - t_offset
        if not 0.0 < rel < horizon:
            continue
        # z at which the integral's clock passes knot t_i
        q = exp(rho * (rel - horizon))
        z_i = q / (-expm1(rho * (rel - horizon)))
        w_i = log1p(z_i)
        if w_lo < w_i < w_hi:
            edges.append(w_i)
    w_pts, w_wts = _gl_points(_subdivide(edges, max_width))
    z = np.expm1(w_pts)
    times = t_offset + np.maximum(horizon - np.log1p(1.0 / z) / rho, 0.0)
    return times, rho * z, w_wts


def _kernel_sums(
    nodes: np.ndarray,
    values: np.ndarray,
    slopes: np.ndarray,
    design,
    coef: np.ndarray,
    weights: np.ndarray,
    seg_bounds: np.ndarray,
    seg_offset: np.ndarray,
    inner_exp: bool = False,
) -> np.ndarray:
    left, b0, b1, b2, b3 = design
    out = np.empty(len(seg_bounds) - 1)
    _kernels.exp_dot_sums(
        values, slopes, left, b0, b1, b2, b3, coef, weights, seg_bounds, seg_offset, inner_exp, out
    )
    return out


def transform_sum(
    theta: float,
    t_offset: float,
    exp_offset: float,
    curve: BoundaryCurve,
    params: ModelParams,
    max_width: float = 1.5,
) -> tuple[float, int, bool]:
    """sum_q w_q exp(exp_offset - rho z_q alpha(t_offset + tau(z_q))) and metadata.

    The scaled building block behind both the equation residual (t_offset = 0,
    exp_offset = K theta) and the price transform (t_offset = t, exp_offset =
    theta alpha(t)).  Queries beyond the curve's last node use the constant
    extension (tail value when set, last value otherwise); the returned flag
    records whether that happened.
    """
    k, rho = params.strike, params.rho
    horizon = log1p(rho / theta) / rho
    extension = t_offset + horizon > curve.t_max * (1.0 + 1e-12)
    times, coef, wts = _theta_quadrature(
        theta, rho, curve.nodes, t_offset, exp_offset, 0.999 * curve.floor_value(), max_width
    )
    knots, values, slopes = curve.knots, curve.values, curve.slopes
    if len(knots) == 1:  # constant curve: give the Hermite kernel two nodes
        knots = np.array([0.0, 1.0])
        values = np.repeat(values, 2)
        slopes = np.zeros(2)
    design = hermite_design(knots, np.sqrt(times))
    seg_bounds = np.array([0, len(times)], dtype=np.int64)
    s = _kernel_sums(
        knots, values, slopes, design, coef, wts, seg_bounds, np.array([exp_offset])
    )[0]
    tail = curve.tail_value
    last = float(curve.values[-1])
    if tail is not None and tail != last:
        # the Hermite design clamps beyond-horizon queries onto the last node;
        # swap in the tail value there
        beyond = times > curve.t_max
        if np.any(beyond):
            e_tail = np.minimum(exp_offset - coef[beyond] * tail, 600.0)
            e_last = np.minimum(exp_offset - coef[beyond] * last, 600.0)
            s += float(np.sum(wts[beyond] * (np.exp(e_tail) - np.exp(e_last))))
    return s, len(times), extension


def _scaled_residual_single(
    theta: float, curve: BoundaryCurve, params: ModelParams, max_width: float
) -> tuple[float, int, bool]:
    """K rho e^{K theta} I(theta) - 1 for one theta against a frozen curve."""
    k, rho = params.strike, params.rho
    s, n_pts, extension = transform_sum(theta, 0.0, k * theta, curve, params, max_width)
    return k * rho * s - 1.0, n_pts, extension


def ie_residual(
    theta: float,
    curve: BoundaryCurve,
    params: ModelParams,
    *,
    scaled: bool = False,
    check: bool = True,
    report: dict | None = None,
) -> float:
    """Residual of the boundary integral equation at transform point theta.

    Returns R(theta) = K rho int_{theta/rho}^inf (z+1)^{-1}
    exp[-rho z alpha(tau(theta,z))] dz - e^{-K theta}; with ``scaled=True``
    the relative form R(theta) e^{K theta} is returned instead (the natural
    scale, since the right-hand side is e^{-K theta}).

    When ``check`` is set the quadrature is repeated with halved panels and a
    disagreement beyond budget raises QuadratureError rather than silently
    returning a wrong value.  A dict passed as ``report`` receives the point
    count, error estimate and whether constant extension beyond the curve
    horizon was used.
    """
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    r, n_pts, extension = _scaled_residual_single(theta, curve, params, max_width=1.5)
    err = 0.0
    if check:
        r_fine, n_fine, _ = _scaled_residual_single(theta, curve, params, max_width=0.75)
        err = abs(r - r_fine)
        n_pts += n_fine
        if err > 1e-7 * max(1.0, abs(r_fine)):
            raise QuadratureError(
                f"quadrature error estimate {err:.3e} at theta={theta} exceeds budget"
            )
        r = r_fine
    if report is not None:
        report.update(
            horizon_extension=extension, quadrature_points=n_pts, quadrature_error=err
        )
    return r if scaled else r * exp(-params.strike * theta)


def perpetual_root(params: ModelParams) -> float:
    """Boundary level of the perpetual option: the root of K rho E1(x) = e^{-x}.

    Solved as g(x) = log(K rho) + log E1(x) + x = 0 (g is strictly decreasing)
    by bracketed bisection from the small-rho asymptote, then Newton polish.
    Returns alpha(inf) = x/rho.
    """
    k, rho = params.strike, params.rho
    log_kr = log(k * rho)
    lx_asym = -0.5772156649015329 - 1.0 / (rho * k)
    if lx_asym < -700.0:
        raise ValueError(
            f"perpetual boundary underflows double precision at rho*K = {rho * k}"
        )

    def g(lx: float) -> float:
        x = exp(lx)
        return log_kr + log_e1(x) + x

    lx_lo, lx_hi = lx_asym + log(0.1), lx_asym + log(10.0)
    for _ in range(200):
        if g(lx_lo) > 0.0:
            break
        lx_lo -= 2.0
        if exp(lx_lo) == 0.0:
            raise ValueError(f"no bracket for the perpetual root at rho = {rho}")
    else:
        raise ValueError(f"no bracket for the perpetual root at rho = {rho}")
    for _ in range(200):
        if g(lx_hi) < 0.0:
            break
        lx_hi += 2.0
        if lx_hi > 710.0:
            raise ValueError(f"no bracket for the perpetual root at rho = {rho}")
    else:
        raise ValueError(f"no bracket for the perpetual root at rho = {rho}")

    for _ in range(60):
        lx_mid = 0.5 * (lx_lo + lx_hi)
        if g(lx_mid) > 0.0:
            lx_lo = lx_mid
        else:
            lx_hi = lx_mid
    x = exp(0.5 * (lx_lo + lx_hi))
    for _ in range(8):
        gx = log_kr + log_e1(x) + x
        # d/dx log E1 = -e^{-x}/(x E1)
        gp = 1.0 - exp(-x - log_e1(x)) / x
        if gp == 0.0:
            break
        step = gx / gp
        x_new = x - step
        if not 0.0 < x_new:
            break
        x = x_new
        if abs(gx) < 1e-15:
            break
    return x / rho


# --------------------------------------------------------------------------- #
# Boundary solve: collocation in theta + damped Newton
# --------------------------------------------------------------------------- #


def _boundary_nodes(t_max: float, n: int, horizon_factor: float) -> tuple[np.ndarray, int]:
    """Square-root-clustered nodes on [0, t_max], refined near 0, plus extension.

    The boundary leaves the strike with a sqrt-like profile, so the base grid
    is t_i = t_max (i/(n-1))^2, i.e. uniform in sqrt(t).  The profile carries
    a slowly varying log factor whose curvature concentrates at small times,
    so the earliest base intervals are subdivided (4x, then 2x) to keep the
    interpolation error there from polluting the large-theta residuals.
    Coverage also extends past t_max so that residuals at small theta (whose
    horizons exceed t_max) are constrained by solved values instead of
    constant extension.
    """
    s_end = np.sqrt(t_max)
    s_base = s_end * np.arange(n) / (n - 1)
    quad = max(1, n // 8)
    dbl = 2 * quad
    pieces = []
    for i in range(n - 1):
        sub = 4 if i < quad else (2 if i < dbl else 1)
        pieces.append(np.linspace(s_base[i], s_base[i + 1], sub + 1)[:-1])
    pieces.append(np.array([s_end]))
    base = np.concatenate(pieces) ** 2
    base[0] = 0.0
    if horizon_factor <= 1.0:
        return base, 0
    n_ext = max(2, n // 4)
    ext = t_max * horizon_factor ** (np.arange(1, n_ext + 1) / n_ext)
    return np.concatenate([base, ext]), n_ext


def _init_boundary(nodes: np.ndarray, params: ModelParams, alpha_inf: float) -> np.ndarray:
    """Strictly decreasing starting curve.

    Matched-regime composite where the expansions apply (rho < 1/e), an
    exponential heuristic otherwise; floored by a decaying envelope above the
    perpetual level so every node keeps a healthy drop (flat stretches would
    freeze the solver's log-drop coordinates).
    """
    k, rho = params.strike, params.rho
    vals = np.empty(len(nodes))
    vals[0] = k
    use_asym = rho < exp(-2.0)  # expansions need lam comfortably above 1
    for i, t in enumerate(nodes[1:], start=1):
        if use_asym:
            vals[i] = alpha_composite(t, params).alpha
        else:
            vals[i] = k * exp(-t / k)
    floor_env = alpha_inf * (1.0 + 0.5 * np.exp(-rho * nodes))
    floor_env[0] = min(k, floor_env[0])
    np.maximum(vals, floor_env, out=vals)
    vals[0] = k
    np.minimum.accumulate(vals, out=vals)
    return vals


def _sensing_horizon(
    t_node: float, nodes: np.ndarray, init_vals: np.ndarray, params: ModelParams, depth_exp: float
) -> float:
    """Horizon h whose residual integrand reaches exponent ``depth_exp`` at t_node.

    The integrand of the theta-residual dies like exp(-E(tau; h)) with
    E = rho z(tau) alpha(tau) - theta(h) alpha(0); a horizon senses the curve
    only where E stays moderate (for small rho*h the depth is ~h^2/K, far
    inside the horizon).  Matching one horizon to each unknown node this way
    keeps the collocation Jacobian well conditioned; uniform-in-log horizon
    families leave deep nodes unsensed and the system rank deficient.
    """
    rho = params.rho
    a0 = init_vals[0]
    a_t = float(np.interp(t_node, nodes, init_vals))

    def excess(h: float) -> float:
        z = 1.0 / expm1(rho * (h - t_node))
        theta = rho / expm1(rho * h)
        return rho * z * a_t - theta * a0 - depth_exp

    width = 1e-9 * max(t_node, 1.0)
    while excess(t_node + width) > 0.0:
        width *= 2.0
        if width > 1e12:
            raise RuntimeError("sensing-horizon search failed to bracket")
    lo, hi = t_node + 0.5 * width, t_node + width
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_boundary(
    params: ModelParams,
    t_max: float,
    n: int,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    horizon_factor: float = 2.0,
    max_width: float = 1.5,
    presolve: bool = True,
) -> tuple[BoundaryCurve, SolveReport]:
    """Solve the boundary integral equation by collocation.

    Unknowns are alpha at the curve nodes (alpha(0) = K pinned); the residual
    vector collects K rho e^{K theta_j} I(theta_j) - 1 over a collocation
    family whose horizons form a geometric sequence covering the node span,
    and is driven to ``tol`` by damped Newton with a finite-difference
    Jacobian.  Newton steps are capped at 0.5 K per node and iterates are kept
    inside [0.6 alpha(inf), K].

    Returns the curve (nodes extend to ``horizon_factor * t_max``; the first
    ``n`` lie in [0, t_max]) and a SolveReport.  Status is "failed" after
    ``max_iter`` without convergence (best iterate returned) and "suspect" if
    the converged values are not non-increasing.
    """
    if t_max <= 0.0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if n < 8:
        raise ValueError(f"need at least 8 nodes, got {n}")
    k, rho = params.strike, params.rho
    alpha_inf = perpetual_root(params)
    floor = 0.5 * alpha_inf

    nodes, _ = _boundary_nodes(t_max, n, horizon_factor)
    n_unknown = len(nodes) - 1

    # continuation: a cheap coarse solve supplies the starting curve (and the
    # sensing-depth map below), cutting the fine iteration count considerably
    if presolve and n >= 32:
        coarse, _ = solve_boundary(
            params,
            t_max,
            max(12, n // 4),
            tol=max(tol, 1e-5),
            max_iter=max_iter,
            horizon_factor=horizon_factor,
            max_width=max_width,
            presolve=False,
        )
        init_vals = np.clip(coarse.eval(nodes), 0.6 * alpha_inf, k)
        init_vals[0] = k
        np.minimum.accumulate(init_vals, out=init_vals)
    else:
        init_vals = _init_boundary(nodes, params, alpha_inf)
    horizons = np.array(
        [_sensing_horizon(t, nodes, init_vals, params, 4.0) for t in nodes[1:]]
    )
    thetas = rho / np.expm1(rho * horizons)

    seg_times, seg_coef, seg_wts, seg_bounds, seg_off = [], [], [], [0], []
    for th, h in zip(thetas, horizons):
        times, coef, wts = _theta_quadrature(th, rho, nodes, 0.0, k * th, floor, max_width)
        seg_times.append(times)
        seg_coef.append(coef)
        seg_wts.append(wts)
        seg_bounds.append(seg_bounds[-1] + len(times))
        seg_off.append(k * th)
    times = np.concatenate(seg_times)
    coef = np.concatenate(seg_coef)
    wts = np.concatenate(seg_wts)
    seg_bounds = np.asarray(seg_bounds, dtype=np.int64)
    seg_off = np.asarray(seg_off)
    s_nodes = np.sqrt(nodes)
    design = hermite_design(s_nodes, np.sqrt(times))
    kr = k * rho

    lo = 0.6 * alpha_inf
    ds = np.diff(s_nodes)

    def reconstruct(u: np.ndarray) -> np.ndarray:
        # monotone-by-construction: node values are K minus accumulated drops;
        # u is the log of the average slope per interval (in sqrt-time), which
        # is smooth across the non-uniform refinement blocks
        y = np.empty(n_unknown + 1)
        y[0] = k
        y[1:] = k - np.cumsum(ds * np.exp(u))
        return np.maximum(y, lo)

    def log_residual(y_full: np.ndarray) -> np.ndarray:
        # log(K rho e^{K theta} I(theta)): zero at the solution, and linear in
        # the curve error even at large theta where the plain ratio saturates
        d = monotone_slopes(s_nodes, y_full)
        sums = kr * _kernel_sums(s_nodes, y_full, d, design, coef, wts, seg_bounds, seg_off)
        return np.log(np.maximum(sums, 1e-300))

    def plain_norm(r_log: np.ndarray) -> float:
        return float(np.abs(np.expm1(np.clip(r_log, -50.0, 50.0))).max())

    # Damped Gauss-Newton in log-drop coordinates.  The collocated system is a
    # discretized first-kind problem whose quasi-null-space is node-scale
    # oscillation; parametrizing by log-drops makes every iterate monotone,
    # excluding those modes, and a Marquardt term with a second-difference
    # penalty keeps the remaining steps tame.  The penalty shapes only the
    # step; converged residuals are what they are.
    drops = np.maximum(-np.diff(np.clip(init_vals, lo, k)), 1e-12)
    u = np.log(drops / ds)
    y = reconstruct(u)
    r = log_residual(y)
    best_y, best_norm = y.copy(), plain_norm(r)
    iterations = 0

    dd = np.zeros((n_unknown - 2, n_unknown))
    for i in range(n_unknown - 2):
        dd[i, i : i + 3] = (1.0, -2.0, 1.0)
    dtd = dd.T @ dd
    mu = 1e-3
    stagnant = 0

    while best_norm > tol and iterations < max_iter:
        iterations += 1
        jac = np.empty((n_unknown, n_unknown))
        for i in range(n_unknown):
            u_p = u.copy()
            u_p[i] += 1e-6
            jac[:, i] = (log_residual(reconstruct(u_p)) - r) / 1e-6
        jtj = jac.T @ jac
        jtr = jac.T @ r
        scale = np.clip(np.diag(jtj), 1e-12 * np.diag(jtj).max() + 1e-300, None)
        # median, not mean: the stiff early rows give a few columns giant
        # scales that would otherwise crush the smoothing term for everyone
        s_bar = float(np.median(scale))

        accepted = False
        norm2 = float(r @ r)
        for _ in range(18):
            m = jtj + mu * (np.diag(scale) + s_bar * dtd)
            try:
                delta = np.linalg.solve(m, -jtr)
            except np.linalg.LinAlgError:
                mu *= 8.0
                continue
            np.clip(delta, -1.5, 1.5, out=delta)
            u_try = u + delta
            y_try = reconstruct(u_try)
            r_try = log_residual(y_try)
            if float(r_try @ r_try) < norm2:
                u, y, r = u_try, y_try, r_try
                mu = max(mu * 0.3, 1e-15)
                accepted = True
                break
            mu *= 8.0
        if not accepted:
            break
        if float(r @ r) > norm2 * (1.0 - 1e-3):
            # shelf: re-regularize to change the descent path
            stagnant += 1
            if stagnant >= 4:
                mu = max(mu, 1e-2)
                stagnant = 0
        else:
            stagnant = 0
        if plain_norm(r) < best_norm:
            best_norm, best_y = plain_norm(r), y.copy()

    status = "converged" if best_norm <= tol else "failed"
    violation = float(np.max(np.diff(best_y))) if len(best_y) > 1 else 0.0
    message = ""
    if status == "converged" and violation > 1e-9 * k:
        status = "suspect"
        message = f"monotonicity violated by {violation:.3e}"
    stored = np.minimum.accumulate(best_y) if violation > 0.0 else best_y
    curve = BoundaryCurve(nodes, stored)
    report = SolveReport(
        iterations=iterations,
        residual_norm=best_norm,
        tolerance=tol,
        quadrature_points=len(times),
        horizon_extension=bool(np.any(horizons > nodes[-1])),
        status=status,
        message=message,
    )
    return curve, report


# --------------------------------------------------------------------------- #
# Strike-window scaling function F(Lambda)
# --------------------------------------------------------------------------- #


def _f_tail_contribution(
    Lambda_j: float, grid_lo: float, strike: float, offset: float, max_width: float
) -> float:
    """xi-integral piece whose F queries fall below the solved grid.

    There the negative-Lambda tail formula stands in for F, so the piece is a
    constant during Newton and is integrated once per collocation point.
    """
    xi_hi = 1.0 / (Lambda_j - grid_lo)
    xi_lo = 1.0 / (4.0 * strike * (_TAIL_EXP + max(offset, 0.0) + 5.0) + (Lambda_j - grid_lo))
    if xi_lo >= xi_hi:
        return 0.0
    u_pts, u_wts = _gl_points(_subdivide([log(xi_lo), log(xi_hi)], max_width))
    xi = np.exp(u_pts)
    lam_q = Lambda_j - 1.0 / xi
    f_q = lam_q * lam_q / (4.0 * strike) + 0.25 * lam_q * (
        np.log(-lam_q) - log(8.0 * np.pi * strike**3)
    )
    e = np.minimum(offset - xi * f_q, 600.0)
    return float(np.sum(u_wts * np.exp(e)))


def solve_F(
    strike: float,
    lambda_range: tuple[float, float],
    n: int,
    *,
    tol: float = 1e-6,
    max_iter: int = 200,
    max_width: float = 1.0,
    pad: float | None = None,
) -> tuple[FLambdaCurve, SolveReport]:
    """Solve the scaling-function integral equation on a Lambda grid.

    Unknowns are log F at uniformly spaced nodes over ``lambda_range``; the
    residual at collocation value nu = -Lambda_j/K^2 is the scaled form
    K e^{-Lambda_j/K} I_j - 1.  Queries below the grid are served by the
    negative-Lambda tail.  The integrand at collocation Lambda_j concentrates
    around Lambda ~ 1.5 Lambda_j, so the grid is padded downward far enough
    (about 0.8 |lo|) that the requested range is solved rather than inherited
    from the tail formula; the padded bottom node is pinned to the tail value
    and the pad rows keep the tail's own small bias.  The returned curve is
    sliced back to the requested range and convergence is measured on it.
    """
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not lo < hi:
        raise ValueError(f"empty Lambda range {lambda_range}")
    if lo < -60.0 * strike or hi > 6.0 * strike:
        raise ValueError(f"Lambda range {lambda_range} outside the supported window")
    if n < 16:
        raise ValueError(f"need at least 16 nodes, got {n}")
    k = strike
    spacing = (hi - lo) / (n - 1)
    pad = max(10.0 * k, 0.8 * abs(lo)) if pad is None else pad
    n_pad = int(np.ceil(pad / spacing))
    nodes = lo + spacing * np.arange(-n_pad, n)
    m = len(nodes)

    # initial guess: tails, bridged linearly in log space across |Lambda| < K;
    # refined from a coarse solve when the grid is fine (cuts iterations a lot)
    log_f0 = np.empty(m)
    anchor_lo = log(f_tail_neg(-k, k))
    anchor_hi = log_f_tail_pos(k, k)
    for i, lam in enumerate(nodes):
        if lam <= -k:
            log_f0[i] = log(f_tail_neg(lam, k))
        elif lam >= k:
            log_f0[i] = log_f_tail_pos(lam, k)
        else:
            w = (lam + k) / (2.0 * k)
            log_f0[i] = (1.0 - w) * anchor_lo + w * anchor_hi
    if n >= 64:
        coarse, _ = solve_F(
            strike, lambda_range, max(32, n // 2), tol=max(tol, 1e-5), max_width=max_width
        )
        inside = (nodes >= coarse.Lambda_min) & (nodes <= coarse.Lambda_max)
        log_f0[inside] = np.log(coarse.eval(nodes[inside]))

    # quadrature tables for the on-grid part of each collocation integral
    seg_coef, seg_q, seg_wts, seg_bounds, seg_off, tail_const = [], [], [], [0], [], []
    for j in range(1, m):
        lam_j = nodes[j]
        offset = -lam_j / k
        floor_j = 0.05 * exp(log_f0[j])
        u_lo = -log(lam_j - nodes[0])
        u_hi = log((_TAIL_EXP + max(offset, 0.0) + 5.0) / floor_j)
        u_hi = max(u_hi, u_lo + 0.5)
        edges = [u_lo, u_hi]
        for i_knot, lam_i in enumerate(nodes[:j]):
            u_i = -log(lam_j - lam_i)
            if not u_lo < u_i < u_hi:
                continue
            # skip knots whose neighborhood is exponentially dead in this row
            if exp(u_i) * exp(log_f0[i_knot]) - max(offset, 0.0) > 80.0:
                continue
            edges.append(u_i)
        u_pts, u_wts = _gl_points(_subdivide(edges, max_width))
        xi = np.exp(u_pts)
        seg_q.append(lam_j - np.exp(-u_pts))
        seg_coef.append(xi)
        seg_wts.append(u_wts)
        seg_bounds.append(seg_bounds[-1] + len(xi))
        seg_off.append(offset)
        tail_const.append(_f_tail_contribution(lam_j, nodes[0], k, offset, max_width))
    queries = np.concatenate(seg_q)
    coef = np.concatenate(seg_coef)
    wts = np.concatenate(seg_wts)
    seg_bounds = np.asarray(seg_bounds, dtype=np.int64)
    seg_off = np.asarray(seg_off)
    tail_const = np.asarray(tail_const)
    design = hermite_design(nodes, queries)

    pinned = log(f_tail_neg(nodes[0], k))

    def residual(log_f_free: np.ndarray) -> np.ndarray:
        lf = np.concatenate([[pinned], log_f_free])
        d = pchip_slopes(nodes, lf)
        sums = _kernel_sums(nodes, lf, d, design, coef, wts, seg_bounds, seg_off, inner_exp=True)
        return k * (sums + tail_const) - 1.0

    u = log_f0[1:].copy()
    r = residual(u)
    # collocation rows inside the requested range; pad rows below it inherit
    # the tail formula's own small inconsistency and cannot be driven to zero
    in_range = nodes[1:] >= lo - 1e-12 * max(1.0, abs(lo))

    def range_norm(res: np.ndarray) -> float:
        return float(np.abs(res[in_range]).max())

    best_u, best_norm = u.copy(), range_norm(r)
    iterations = 0
    n_unknown = m - 1

    # same damped Gauss-Newton recipe as solve_boundary: Marquardt diagonal
    # plus a median-scaled second-difference penalty on the step, with a
    # re-regularization kick when the descent shelves
    dd = np.zeros((n_unknown - 2, n_unknown))
    for i in range(n_unknown - 2):
        dd[i, i : i + 3] = (1.0, -2.0, 1.0)
    dtd = dd.T @ dd
    mu = 1e-3
    stagnant = 0

    while best_norm > tol and iterations < max_iter:
        iterations += 1
        jac = np.empty((n_unknown, n_unknown))
        for i in range(n_unknown):
            u_p = u.copy()
            u_p[i] += 1e-6
            jac[:, i] = (residual(u_p) - r) / 1e-6
        jtj = jac.T @ jac
        jtr = jac.T @ r
        scale = np.clip(np.diag(jtj), 1e-12 * np.diag(jtj).max() + 1e-300, None)
        s_bar = float(np.median(scale))

        accepted = False
        norm2 = float(r @ r)
        for _ in range(18):
            m_lm = jtj + mu * (np.diag(scale) + s_bar * dtd)
            try:
                delta = np.linalg.solve(m_lm, -jtr)
            except np.linalg.LinAlgError:
                mu *= 8.0
                continue
            np.clip(delta, -1.5, 1.5, out=delta)
            u_try = u + delta
            r_try = residual(u_try)
            if float(r_try @ r_try) < norm2:
                u, r = u_try, r_try
                mu = max(mu * 0.3, 1e-15)
                accepted = True
                break
            mu *= 8.0
        if not accepted:
            break
        if float(r @ r) > norm2 * (1.0 - 1e-3):
            stagnant += 1
            if stagnant >= 4:
                mu = max(mu, 1e-2)
                stagnant = 0
        else:
            stagnant = 0
        norm = range_norm(r)
        if norm < best_norm:
            best_norm, best_u = norm, u.copy()

    log_f = np.concatenate([[pinned], best_u])
    keep = nodes >= lo - 1e-12 * max(1.0, abs(lo))
    status = "converged" if best_norm <= tol else "failed"
    message = ""
    values = np.exp(log_f[keep])
    if np.any(np.diff(values) >= 0.0):
        status = "suspect"
        message = "solved F is not strictly decreasing"
        values = np.minimum.accumulate(values)
        for i in range(1, len(values)):  # nudge flats so the curve type accepts it
            if values[i] >= values[i - 1]:
                values[i] = values[i - 1] * (1.0 - 1e-14)
    curve = FLambdaCurve(strike=k, nodes=nodes[keep], values=values, valid_range=(lo, hi))
    report = SolveReport(
        iterations=iterations,
        residual_norm=best_norm,
        tolerance=tol,
        quadrature_points=len(queries),
        horizon_extension=False,
        status=status,
        message=message,
    )
    return curve, report


# --------------------------------------------------------------------------- #
# Serialization
# --------------------------------------------------------------------------- #

_FMT = "{:.11e}"


def boundary_to_csv(curve: BoundaryCurve) -> str:
    lines = ["t,alpha,log_alpha"]
    for t, a in zip(curve.nodes, curve.values):
        lines.append(f"{_FMT.format(t)},{_FMT.format(a)},{_FMT.format(log(a))}")
    return "\n".join(lines) + "\n"


def boundary_from_csv(text: str) -> BoundaryCurve:
    rows = [ln for ln in text.strip().splitlines()[1:] if ln]
    data = np.array([[float(c) for c in ln.split(",")[:2]] for ln in rows])
    return BoundaryCurve(data[:, 0], data[:, 1])


def boundary_to_json(curve: BoundaryCurve, report: SolveReport | None = None) -> str:
    payload = {
        "nodes": [float(t) for t in curve.nodes],
        "values": [float(a) for a in curve.values],
        "tail_value": curve.tail_value,
    }
    if report is not None:
        payload["report"] = {
            "iterations": report.iterations,
            "residual_norm": report.residual_norm,
            "tolerance": report.tolerance,
            "quadrature_points": report.quadrature_points,
            "horizon_extension": report.horizon_extension,
            "status": report.status,
            "message": report.message,
        }
    return json.dumps(payload, indent=2)


def boundary_from_json(text: str) -> BoundaryCurve:
    payload = json.loads(text)
    return BoundaryCurve(
        np.asarray(payload["nodes"]), np.asarray(payload["values"]), payload.get("tail_value")
    )


def flambda_to_csv(curve: FLambdaCurve) -> str:
    lines = ["Lambda,F"]
    for lam, f in zip(curve.nodes, curve.values):
        lines.append(f"{_FMT.format(lam)},{_FMT.format(f)}")
    return "\n".join(lines) + "\n"
