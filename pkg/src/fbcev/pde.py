"""Finite-difference oracle for the free-boundary problem.

Direct time-marching of the obstacle formulation of
P_t = S P_SS + rho S P_S - rho P with payoff max(K - S, 0): at every step the
discrete linear complementarity problem is solved by projected SOR.  The
diffusion coefficient is S (not S^2), so there is no log-transform; the grid
is sinh-clustered around the strike where the payoff kink and the early-time
boundary live, and the drift is upwinded wherever the cell Peclet number
rho*h exceeds 2 so the system stays an M-matrix.

This solver is an *oracle*: independent of the integral-equation machinery,
used to cross-validate boundary and price at moderate rho.  Boundaries that
are exponentially small (the long-time regimes at tiny rho) fall below one
grid cell and are not resolvable here; that is a documented limitation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import asinh, sinh

import numpy as np

from . import _kernels
from .model import BoundaryCurve, ModelParams

__all__ = [
    "PdeGridSpec",
    "PriceSurface",
    "solve_pde",
    "extract_boundary",
    "smooth_pasting_slope",
    "surface_value",
    "surface_to_csv",
]

_CONTACT_EPS_REL = 1e-7  # contact-gap threshold, relative to strike


@dataclass(frozen=True)
class PdeGridSpec:
    """Discretization controls for the obstacle-problem solver.

    ``s_max`` must be at least 4 strikes, ``m`` at least 100 space nodes.  The
    first ``implicit_steps`` steps use implicit Euler to damp the payoff kink,
    after which Crank-Nicolson takes over.
    """

    s_max: float
    m: int = 800
    dt: float = 1e-3
    n_store: int = 201
    relax: float = 1.3
    psor_tol: float = 1e-10
    max_sweeps: int = 100000
    cluster: float = 0.4
    implicit_steps: int = 4

    def validate(self, strike: float) -> None:
        if self.s_max < 4.0 * strike:
            raise ValueError(f"s_max = {self.s_max} must be >= 4 strikes")
        if self.m < 100:
            raise ValueError(f"need at least 100 space nodes, got {self.m}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 1.0 <= self.relax < 2.0:
            raise ValueError(f"relaxation {self.relax} outside [1, 2)")


@dataclass(frozen=True)
class PriceSurface:
    """Stored solution slices P(S, t) with the exercise-contact mask."""

    strike: float
    rho: float
    times: np.ndarray  # (nt,)
    grid: np.ndarray  # (m,)
    values: np.ndarray  # (nt, m)
    exercised: np.ndarray  # (nt, m)

    @property
    def payoff(self) -> np.ndarray:
        return np.maximum(self.strike - self.grid, 0.0)


def _space_grid(strike: float, s_max: float, m: int, cluster: float) -> np.ndarray:
    """sinh-graded grid on [0, s_max] with a node exactly at the strike."""
    b = cluster * strike
    u_lo = asinh(-strike / b)
    u_hi = asinh((s_max - strike) / b)
    m_lo = max(2, int(round(m * (-u_lo) / (u_hi - u_lo))))
    m_hi = m - m_lo - 1
    if m_hi < 2:
        raise ValueError("grid too coarse for the requested clustering")
    u = np.concatenate([np.linspace(u_lo, 0.0, m_lo + 1)[:-1], np.linspace(0.0, u_hi, m_hi + 1)])
    s = strike + b * np.sinh(u)
    s[0] = 0.0
    s[m_lo] = strike
    s[-1] = s_max
    return s


def _operator_bands(s: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tridiagonal bands of L P = S P_SS + rho S P_S - rho P on the grid.

    Row 0 reduces to the degenerate limit P_t = -rho P; the last row is left
    zero (far-field value pinned by the obstacle step).  Central differencing
    for the drift except where rho * h > 2, which would break the M-matrix.
    """
    m = len(s)
    lower = np.zeros(m)
    diag = np.zeros(m)
    upper = np.zeros(m)

    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    a = s[1:-1]
    b = rho * s[1:-1]

    l_diff = 2.0 * a / (hm * (hm + hp))
    u_diff = 2.0 * a / (hp * (hm + hp))
    c_diff = -2.0 * a / (hm * hp)

    central = rho * hp <= 2.0
    l_drift = np.where(central, -b * hp / (hm * (hm + hp)), 0.0)
    c_drift = np.where(central, b * (hp - hm) / (hm * hp), -b / hp)
    u_drift = np.where(central, b * hm / (hp * (hm + hp)), b / hp)

    lower[1:-1] = l_diff + l_drift
    diag[1:-1] = c_diff + c_drift - rho
    upper[1:-1] = u_diff + u_drift
    diag[0] = -rho
    return lower, diag, upper


def solve_pde(params: ModelParams, t_max: float, grid: PdeGridSpec) -> PriceSurface:
    """March the obstacle problem to t_max and return stored slices.

    Raises RuntimeError (with the step index) if projected SOR fails to reach
    its stopping tolerance at any step.
    """
    grid.validate(params.strike)
    if t_max <= 0.0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    k, rho = params.strike, params.rho
    s = _space_grid(k, grid.s_max, grid.m, grid.cluster)
    m = len(s)
    psi = np.maximum(k - s, 0.0)
    lower, diag, upper = _operator_bands(s, rho)

    n_steps = max(1, int(np.ceil(t_max / grid.dt)))
    dt = t_max / n_steps
    store_at = set(
        np.unique(np.round(np.linspace(0, n_steps, min(grid.n_store, n_steps + 1))).astype(int))
    )
    contact_eps = _CONTACT_EPS_REL * k

    def implicit_bands(theta_s: float):
        return -theta_s * dt * lower, 1.0 - theta_s * dt * diag, -theta_s * dt * upper

    bands = {th: implicit_bands(th) for th in (1.0, 0.5)}

    p = psi.copy()
    times, slices, masks = [0.0], [p.copy()], [np.ones(m, dtype=bool)]
    for step in range(1, n_steps + 1):
        theta_s = 1.0 if step <= grid.implicit_steps else 0.5
        a_lo, a_di, a_up = bands[theta_s]
        if theta_s == 1.0:
            rhs = p.copy()
        else:
            rhs = p.copy()
            rhs[1:-1] += 0.5 * dt * (
                lower[1:-1] * p[:-2] + diag[1:-1] * p[1:-1] + upper[1:-1] * p[2:]
            )
            rhs[0] += 0.5 * dt * diag[0] * p[0]
        x = np.maximum(p, psi)
        sweeps = _kernels.psor_solve(
            a_lo, a_di, a_up, rhs, psi, x, grid.relax, grid.psor_tol, grid.max_sweeps
        )
        if sweeps < 0:
            raise RuntimeError(f"projected SOR failed to converge at step {step}")
        p = x
        if step in store_at:
            times.append(step * dt)
            slices.append(p.copy())
            masks.append(p - psi <= contact_eps)

    return PriceSurface(
        strike=k,
        rho=rho,
        times=np.asarray(times),
        grid=s,
        values=np.asarray(slices),
        exercised=np.asarray(masks),
    )


def _contact_index(surface: PriceSurface, row: int) -> int:
    gap = surface.values[row] - surface.payoff
    idx = np.nonzero(gap <= _CONTACT_EPS_REL * surface.strike)[0]
    if idx.size == 0:
        raise RuntimeError(
            f"empty exercise region at t = {surface.times[row]}: grid too coarse "
            "or boundary below resolution"
        )
    i = int(idx[-1])
    if i >= len(surface.grid) - 1:
        raise RuntimeError("exercise region reaches the far-field boundary; enlarge s_max")
    return i


def _refined_alpha(surface: PriceSurface, row: int) -> float:
    eps = _CONTACT_EPS_REL * surface.strike
    gap = surface.values[row] - surface.payoff
    i = _contact_index(surface, row)
    s0, s1 = surface.grid[i], surface.grid[i + 1]
    g0, g1 = gap[i], gap[i + 1]
    alpha = s0 + (eps - g0) * (s1 - s0) / (g1 - g0)
    if alpha <= 0.0:
        raise RuntimeError("extracted boundary collapsed to zero; unresolvable")
    return float(alpha)


def extract_boundary(surface: PriceSurface) -> BoundaryCurve:
    """Exercise boundary from the contact set, refined by the contact gap.

    For each stored time the boundary is the largest S whose gap
    P - (K - S) stays within the contact threshold, linearly interpolated to
    the threshold crossing.  alpha(0) = K is pinned (at t = 0 the surface
    equals the payoff, so the contact set is degenerate there).
    """
    times = [0.0]
    alphas = [surface.strike]
    for row in range(1, len(surface.times)):
        times.append(float(surface.times[row]))
        alphas.append(_refined_alpha(surface, row))
    alphas = np.asarray(alphas)
    # remove sub-cell wiggle from contact detection
    alphas = np.minimum.accumulate(alphas)
    return BoundaryCurve(np.asarray(times), alphas)


def smooth_pasting_slope(surface: PriceSurface, t: float) -> float:
    """One-sided dP/dS estimate at the extracted boundary nearest time t."""
    row = int(np.argmin(np.abs(surface.times - t)))
    if row == 0:
        raise ValueError("smooth pasting is undefined at t = 0")
    alpha = _refined_alpha(surface, row)
    i = _contact_index(surface, row)
    s1 = surface.grid[i + 1]
    p1 = surface.values[row, i + 1]
    return float((p1 - (surface.strike - alpha)) / (s1 - alpha))


def surface_value(surface: PriceSurface, s: float, t: float) -> float:
    """Bilinear price lookup P(s, t) from the stored slices."""
    if not 0.0 <= s <= surface.grid[-1]:
        raise ValueError(f"s = {s} outside the grid")
    if not 0.0 <= t <= surface.times[-1] * (1.0 + 1e-12):
        raise ValueError(f"t = {t} outside the stored times")
    row = np.searchsorted(surface.times, min(t, surface.times[-1]))
    row = max(1, min(row, len(surface.times) - 1))
    t0, t1 = surface.times[row - 1], surface.times[row]
    w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
    v0 = np.interp(s, surface.grid, surface.values[row - 1])
    v1 = np.interp(s, surface.grid, surface.values[row])
    return float((1.0 - w) * v0 + w * v1)


def surface_to_csv(surface: PriceSurface) -> str:
    """Long-format dump: one row per (t, S) with price and exercised flag."""
    lines = ["t,S,P,exercised"]
    for row, t in enumerate(surface.times):
        for j, s in enumerate(surface.grid):
            lines.append(
                f"{t:.11e},{s:.11e},{surface.values[row, j]:.11e},"
                f"{int(surface.exercised[row, j])}"
            )
    return "\n".join(lines) + "\n"
