# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: quadrature exponential sums and projected SOR.

Mirrors ``_ref`` exactly (same formulas, same red-black sweep order); see
that module for the documented contracts.
"""

from libc.math cimport exp

cdef double _EXP_CAP = 600.0


def exp_dot_sums(double[::1] y, double[::1] d, long[::1] left,
                 double[::1] b0, double[::1] b1, double[::1] b2, double[::1] b3,
                 double[::1] coef, double[::1] weight,
                 long[::1] seg_bounds, double[::1] seg_offset,
                 bint inner_exp, double[::1] out):
    cdef Py_ssize_t nseg = seg_bounds.shape[0] - 1
    cdef Py_ssize_t j, q, l
    cdef double f, e, acc, off
    for j in range(nseg):
        acc = 0.0
        off = seg_offset[j]
        for q in range(seg_bounds[j], seg_bounds[j + 1]):
            l = left[q]
            f = b0[q] * y[l] + b1[q] * y[l + 1] + b2[q] * d[l] + b3[q] * d[l + 1]
            if inner_exp:
                if f > _EXP_CAP:
                    f = _EXP_CAP
                f = exp(f)
            e = off - coef[q] * f
            if e > _EXP_CAP:
                e = _EXP_CAP
            acc += weight[q] * exp(e)
        out[j] = acc
    return out


def psor_solve(double[::1] lower, double[::1] diag, double[::1] upper,
               double[::1] rhs, double[::1] psi, double[::1] x,
               double omega, double tol, long max_sweeps):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, start
    cdef long sweep
    cdef double delta, gs, new, xm, xp, step
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for start in range(2):
            for i in range(start, m, 2):
                xm = x[i - 1] if i > 0 else 0.0
                xp = x[i + 1] if i < m - 1 else 0.0
                gs = (rhs[i] - lower[i] * xm - upper[i] * xp) / diag[i]
                new = x[i] + omega * (gs - x[i])
                if new < psi[i]:
                    new = psi[i]
                step = new - x[i]
                if step < 0.0:
                    step = -step
                if step > delta:
                    delta = step
                x[i] = new
        if delta <= tol:
            return sweep
    return -1
