"""Self-contained exponential integral E1.

The perpetual-boundary equation and every exponentially-small time regime
reduce to evaluations of E1(x) = int_x^inf exp(-v)/v dv, often at arguments
where the value itself underflows.  Both the plain value and its logarithm
are provided; the two are consistent to a few ulp by construction.

No platform special-function library is used, so results are reproducible
bit-for-bit across installs at the documented 1e-12 relative accuracy.
"""

from __future__ import annotations

from math import exp, log

EULER_GAMMA = 0.5772156649015329

_SERIES_CUT = 1.0
_MAX_TERMS = 60
_CF_MAX_ITER = 200
_TINY = 1e-300


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - log x + sum_{k>=1} (-1)^{k+1} x^k / (k k!),  fast for x <= 1
    total = -EULER_GAMMA - log(x)
    term = 1.0
    for k in range(1, _MAX_TERMS):
        term *= -x / k
        delta = -term / k
        total += delta
        if abs(delta) < 1e-18 * abs(total):
            return total
    raise ArithmeticError(f"E1 series did not converge at x={x}")


def _e1_cf_factor(x: float) -> float:
    # Continued fraction E1(x) = e^{-x} * 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    # evaluated with the modified Lentz algorithm; returns the e^{+x}-scaled part.
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_ITER):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at x={x}")


def log_e1(x: float) -> float:
    """log E1(x) for x > 0, without intermediate underflow (x up to ~1e4 and beyond)."""
    if not x > 0.0:
        raise ValueError(f"log_e1 requires x > 0, got {x}")
    if x <= _SERIES_CUT:
        return log(_e1_series(x))
    return log(_e1_cf_factor(x)) - x


def e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf exp(-v)/v dv for x > 0.

    Series with the -log x - gamma leading part below x = 1, continued
    fraction above; relative accuracy ~1e-14 across the switch.  For x large
    enough that e^{-x} underflows the result is 0.0 (use log_e1 instead).
    """
    if not x > 0.0:
        raise ValueError(f"e1 requires x > 0, got {x}")
    if x <= _SERIES_CUT:
        return _e1_series(x)
    # exp(log ...) keeps e1 and log_e1 consistent to a few ulp
    return exp(log_e1(x))
