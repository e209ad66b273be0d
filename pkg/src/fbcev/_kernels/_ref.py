"""Pure-NumPy reference kernels (fallback when the compiled core is absent).

Same contracts as ``_core``; the red-black sweep ordering is identical so the
two backends produce matching iterates up to floating-point round-off.
"""

from __future__ import annotations

import numpy as np

_EXP_CAP = 600.0


def exp_dot_sums(y, d, left, b0, b1, b2, b3, coef, weight, seg_bounds, seg_offset, inner_exp, out):
    """out[j] = sum_q w[q] * exp(off[j] - coef[q] * f(q)) over segment j.

    f(q) is the cubic-Hermite combination b0*y[l] + b1*y[l+1] + b2*d[l] +
    b3*d[l+1] (exponentiated first when inner_exp, for curves stored in log
    space).  Exponents are capped so diverging Newton trials stay finite.
    """
    f = b0 * y[left] + b1 * y[left + 1] + b2 * d[left] + b3 * d[left + 1]
    if inner_exp:
        f = np.exp(np.minimum(f, _EXP_CAP))
    counts = np.diff(seg_bounds)
    e = np.repeat(seg_offset, counts) - coef * f
    np.minimum(e, _EXP_CAP, out=e)
    contrib = weight * np.exp(e)
    out[:] = np.add.reduceat(contrib, seg_bounds[:-1])
    return out


def psor_solve(lower, diag, upper, rhs, psi, x, omega, tol, max_sweeps):
    """Projected SOR for the tridiagonal complementarity system, in place.

    Red-black ordering: even rows first with current odd values, then odd rows
    with the refreshed even values.  Returns the sweep count on convergence
    (sup-change <= tol), -1 if the budget is exhausted.
    """
    m = x.shape[0]
    xp = np.zeros(m + 2)
    xp[1:-1] = x
    inner = xp[1:-1]
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for start in (0, 1):
            sl = slice(start, m, 2)
            old = inner[sl]
            gs = (rhs[sl] - lower[sl] * xp[start:m:2] - upper[sl] * xp[start + 2 : m + 2 : 2]) / diag[sl]
            new = np.maximum(psi[sl], old + omega * (gs - old))
            step = np.abs(new - old).max() if new.size else 0.0
            delta = max(delta, step)
            inner[sl] = new
        if delta <= tol:
            x[:] = inner
            return sweep
    x[:] = inner
    return -1
