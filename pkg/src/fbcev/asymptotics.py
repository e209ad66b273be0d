"""Closed-form small-rho evaluators for the five time regimes of the boundary.

For rho = exp(-lam) small, the put boundary alpha(t) behaves differently on
five nested time scales: t = omega/lam with omega below the strike (regime I),
an O(lam^-2) window around t = K/lam described by a scaling function F of
Lambda = lam^2 t - lam K (regime II), omega above the strike (regime III),
t = O(1) (regime IV, WKB form), and t = v/rho (regime V), with the perpetual
value as the v -> infinity limit.  Regimes III-V are exponentially small, so
every evaluator has a log-space variant that never underflows.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import exp, expm1, inf, log, log1p, pi, sqrt
from typing import TYPE_CHECKING, NamedTuple

from .model import ModelParams
from .specfun import EULER_GAMMA

if TYPE_CHECKING:  # avoid a runtime cycle with the solver module
    from .ie import FLambdaCurve

__all__ = [
    "Regime",
    "RegimeICoefficients",
    "CompositeAlpha",
    "regime_i_coefficients",
    "alpha_regime_i",
    "alpha_regime_ii",
    "f_tail_neg",
    "f_tail_pos",
    "log_f_tail_pos",
    "alpha_regime_iii",
    "log_alpha_regime_iii",
    "alpha_regime_iv",
    "log_alpha_regime_iv",
    "wkb_decay_rate",
    "wkb_prefactor",
    "alpha_regime_v",
    "log_alpha_regime_v",
    "regime_v_amplitude",
    "log_regime_v_amplitude",
    "alpha_perpetual_asym",
    "log_alpha_perpetual_asym",
    "alpha_composite",
]


class Regime(str, Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    PERPETUAL = "perpetual"


class RegimeICoefficients(NamedTuple):
    alpha0: float
    alpha1: float
    alpha2: float


def _require_small_rho(params: ModelParams, who: str) -> None:
    if not params.small_rho:
        raise ValueError(f"{who} requires rho < 1, got rho = {params.rho}")


def _plain(logv: float) -> float:
    return exp(logv) if logv < 709.0 else inf


def regime_i_coefficients(omega: float, strike: float) -> RegimeICoefficients:
    """The three expansion coefficients of the short-time regime at omega in (0, K).

    alpha0 is the Clairaut-envelope profile (sqrt(omega) - sqrt(K))^2; alpha1
    and alpha2 are the log(lam)/lam and 1/lam corrections.
    """
    if not 0.0 < omega < strike:
        raise ValueError(f"omega must lie in (0, strike), got {omega}")
    root = sqrt(strike * omega)
    alpha0 = (sqrt(omega) - sqrt(strike)) ** 2
    alpha1 = 0.5 * (omega - root)
    alpha2 = 0.5 * (root - omega) * log(4.0 * pi * strike * strike * omega / (strike - root))
    return RegimeICoefficients(alpha0, alpha1, alpha2)


def alpha_regime_i(omega: float, lam: float, strike: float) -> float:
    """Three-term boundary expansion on t = omega/lam, 0 < omega < K."""
    if lam <= 1.0:
        raise ValueError(f"regime I needs lam > 1, got {lam}")
    a0, a1, a2 = regime_i_coefficients(omega, strike)
    return a0 + (log(lam) / lam) * a1 + a2 / lam


def f_tail_neg(Lambda: float, strike: float) -> float:
    """Scaling-function tail for Lambda -> -infinity (matches regime I)."""
    if Lambda >= 0.0:
        raise ValueError(f"negative-Lambda tail needs Lambda < 0, got {Lambda}")
    k = strike
    return Lambda * Lambda / (4.0 * k) + 0.25 * Lambda * (log(-Lambda) - log(8.0 * pi * k**3))


def log_f_tail_pos(Lambda: float, strike: float) -> float:
    """log of the Lambda -> +infinity tail, exact even when the value underflows."""
    if Lambda <= 0.0:
        raise ValueError(f"positive-Lambda tail needs Lambda > 0, got {Lambda}")
    return log(Lambda) - EULER_GAMMA - exp(Lambda / strike) / strike


def f_tail_pos(Lambda: float, strike: float) -> float:
    """Scaling-function tail for Lambda -> +infinity (doubly-exponentially small)."""
    return _plain(log_f_tail_pos(Lambda, strike))


def alpha_regime_ii(Lambda: float, lam: float, f_curve: "FLambdaCurve") -> float:
    """Boundary in the strike-crossing window: F(Lambda)/lam^2.

    F comes from the solved curve inside its range and from the two tail
    formulas outside of it.
    """
    if f_curve is None:
        raise ValueError("regime II needs a solved F curve (or use the tail formulas)")
    lo, hi = f_curve.Lambda_min, f_curve.Lambda_max
    if Lambda < lo:
        f = f_tail_neg(Lambda, f_curve.strike)
    elif Lambda > hi:
        f = f_tail_pos(Lambda, f_curve.strike)
    else:
        f = f_curve.eval(Lambda)
    return f / (lam * lam)


def log_alpha_regime_iii(omega: float, params: ModelParams) -> float:
    """log boundary on t = omega/lam with omega > K (exponentially small)."""
    _require_small_rho(params, "regime III")
    k, lam = params.strike, params.lam
    if omega <= k:
        raise ValueError(f"regime III needs omega > strike, got {omega}")
    # rho^(K/omega - 1) = exp(lam (1 - K/omega))
    return log((omega - k) / lam) - EULER_GAMMA - exp(lam * (1.0 - k / omega)) / k


def alpha_regime_iii(omega: float, params: ModelParams) -> float:
    return _plain(log_alpha_regime_iii(omega, params))


def wkb_decay_rate(t: float, strike: float) -> float:
    """f(t) in the WKB form alpha ~ g(t) exp(-f(t)/rho)."""
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    return exp(-strike / t) / strike


def wkb_prefactor(t: float, strike: float) -> float:
    """g(t) in the WKB form alpha ~ g(t) exp(-f(t)/rho)."""
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    return t * exp(-EULER_GAMMA) * exp(-0.5 * exp(-strike / t))


def log_alpha_regime_iv(t: float, params: ModelParams) -> float:
    """log boundary at t = O(1): WKB result with rate exp(-K/t)/K."""
    _require_small_rho(params, "regime IV")
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    k = params.strike
    return log(t) - EULER_GAMMA - (0.5 + 1.0 / (params.rho * k)) * exp(-k / t)


def alpha_regime_iv(t: float, params: ModelParams) -> float:
    return _plain(log_alpha_regime_iv(t, params))


def log_regime_v_amplitude(v: float) -> float:
    """log of the slow-clock amplitude A(v); A(inf) = exp(-gamma)."""
    if v <= 0.0:
        raise ValueError(f"v must be positive, got {v}")
    bump = 1.0 / expm1(v) if v < 700.0 else 0.0
    return -EULER_GAMMA + bump + log1p(-exp(-v))


def regime_v_amplitude(v: float) -> float:
    return _plain(log_regime_v_amplitude(v))


def log_alpha_regime_v(v: float, params: ModelParams) -> float:
    """log boundary on t = v/rho: (1/rho) A(v) exp(-1/(rho K))."""
    _require_small_rho(params, "regime V")
    k = params.strike
    return params.lam + log_regime_v_amplitude(v) - 1.0 / (params.rho * k)


def alpha_regime_v(v: float, params: ModelParams) -> float:
    return _plain(log_alpha_regime_v(v, params))


def log_alpha_perpetual_asym(params: ModelParams) -> float:
    _require_small_rho(params, "perpetual asymptote")
    return params.lam - EULER_GAMMA - 1.0 / (params.rho * params.strike)


def alpha_perpetual_asym(params: ModelParams) -> float:
    """Small-rho perpetual boundary (1/rho) exp(-gamma) exp(-1/(rho K))."""
    return _plain(log_alpha_perpetual_asym(params))


@dataclass(frozen=True)
class CompositeAlpha:
    alpha: float
    log_alpha: float
    regime: Regime
    tail_fallback: bool = False


def alpha_composite(
    t: float, params: ModelParams, f_curve: "FLambdaCurve | None" = None
) -> CompositeAlpha:
    """Evaluate the boundary at time t with automatic regime selection.

    The strike-crossing window |lam^2 t - lam K| <= sqrt(lam) selects regime
    II; below it regime I, above it regime III up to t = lam^(-1/2), then
    regime IV until rho t = 0.1, and regime V beyond.  The switch points sit
    inside the overlap zones where adjacent formulas agree.  If regime II is
    selected without a solved F curve, the tail formulas are used and the
    result is flagged.
    """
    _require_small_rho(params, "composite evaluator")
    if t <= 0.0:
        raise ValueError(f"time must be positive, got {t}")
    k, lam, rho = params.strike, params.lam, params.rho
    Lambda = lam * lam * t - lam * k

    if abs(Lambda) <= sqrt(lam):
        if f_curve is not None:
            alpha = alpha_regime_ii(Lambda, lam, f_curve)
            fallback = False
        else:
            if Lambda < 0.0:
                alpha = f_tail_neg(Lambda, k) / lam**2
            elif Lambda > 0.0:
                alpha = f_tail_pos(Lambda, k) / lam**2
            else:
                alpha = 0.0
            fallback = True
        log_alpha = log(alpha) if alpha > 0.0 else -inf
        return CompositeAlpha(alpha, log_alpha, Regime.II, fallback)

    if Lambda < 0.0:
        alpha = alpha_regime_i(lam * t, lam, k)
        return CompositeAlpha(alpha, log(alpha), Regime.I)
    if t <= 1.0 / sqrt(lam):
        log_alpha = log_alpha_regime_iii(lam * t, params)
        return CompositeAlpha(_plain(log_alpha), log_alpha, Regime.III)
    if rho * t < 0.1:
        log_alpha = log_alpha_regime_iv(t, params)
        return CompositeAlpha(_plain(log_alpha), log_alpha, Regime.IV)
    log_alpha = log_alpha_regime_v(rho * t, params)
    return CompositeAlpha(_plain(log_alpha), log_alpha, Regime.V)
