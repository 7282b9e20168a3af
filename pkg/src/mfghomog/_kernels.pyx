# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scalar root-finding kernels for the current method.

F_j(t) = j^2 / (2 t^2) - ln t is inverted through the Lambert-type equation
w + ln w = ln(j^2) + 2 z with t = exp(w / 2 - z); see ``_kernels_py`` for the
reference implementation of the same iteration.
"""

from libc.math cimport exp, log, log1p, fabs, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAX_NEWTON = 100
DEF MAX_LEVEL = 200


class KernelBracketFailure(RuntimeError):
    pass


cdef inline double _lambert(double lx, int *ok) noexcept nogil:
    """w >= 0 with w * exp(w) = exp(lx).

    Newton is monotone from an analytic bracket end: from the right for
    w e^w - x (convex) when lx < 1, from the left for w + ln w - lx (concave)
    otherwise, where lx - ln lx <= w <= lx.
    """
    cdef double x = 0.0, w, f, fp, w_new, ew
    cdef int it
    if lx != lx:
        ok[0] = 0
        return lx
    if lx < -700.0:
        return exp(lx)
    if lx < 1.0:
        x = exp(lx)
        w = log1p(x)
    else:
        w = lx - log(lx)
    for it in range(MAX_NEWTON):
        if lx < 1.0:
            ew = exp(w)
            f = w * ew - x
            fp = (1.0 + w) * ew
        else:
            f = w + log(w) - lx
            fp = 1.0 + 1.0 / w
        w_new = w - f / fp
        if fabs(w_new - w) <= 3.6e-15 * w:
            return w_new
        w = w_new
    ok[0] = 0
    return w


cdef inline double _finv(double j2, double z, int *ok) noexcept nogil:
    """t > 0 with j2 / (2 t^2) - ln t = z, where j2 = j^2."""
    if j2 == 0.0:
        return exp(-z)
    return exp(0.5 * _lambert(log(j2) + 2.0 * z, ok) - z)


def f_inverse(double j, double z):
    cdef int ok = 1
    cdef double t = _finv(j * j, z, &ok)
    if not ok:
        raise KernelBracketFailure("Lambert iteration failed")
    return t


def f_inverse_array(double j, double[::1] z, double[::1] out):
    cdef Py_ssize_t k, n = z.shape[0]
    cdef double j2 = j * j
    cdef int ok = 1, all_ok = 1
    with nogil:
        for k in range(n):
            out[k] = _finv(j2, z[k], &ok)
            if not ok:
                all_ok = 0
    if not all_ok:
        raise KernelBracketFailure("Lambert iteration failed")


cdef double _mass(double j2, double level, double[::1] v, double weight,
                  double[::1] t, double *dmass, int *ok) noexcept nogil:
    cdef Py_ssize_t k, n = v.shape[0]
    cdef double s = 0.0, ds = 0.0, tk, t2
    for k in range(n):
        tk = _finv(j2, level - v[k], ok)
        t[k] = tk
        t2 = tk * tk
        s += tk
        ds += t2 * tk / (j2 + t2)
    dmass[0] = -ds * weight
    return s * weight - 1.0


def solve_level(double j, double[::1] v, double weight, double[::1] t):
    """Level H with weight * sum_k F_j^{-1}(H - v_k) = 1; fills ``t`` with the profile.

    Returns ``(H, weight * sum 1/t)``.  The mass is convex and decreasing in
    H, so Newton from the left end of [j^2/2 + min v, j^2/2 + max v] is
    monotone; bisection guards against round-off.
    """
    cdef Py_ssize_t k, n = v.shape[0]
    cdef double j2 = j * j, vmin = INFINITY, vmax = -INFINITY
    cdef double lo, hi, h, f, fp, h_new, acc = 0.0, inv = 0.0
    cdef int it, ok = 1
    with nogil:
        for k in range(n):
            if v[k] < vmin:
                vmin = v[k]
            if v[k] > vmax:
                vmax = v[k]
        if j2 == 0.0:
            # closed form: H = ln(weight * sum e^v)
            for k in range(n):
                acc += exp(v[k] - vmax)
            h = vmax + log(acc * weight)
            _mass(j2, h, v, weight, t, &fp, &ok)
        else:
            lo = 0.5 * j2 + vmin
            hi = 0.5 * j2 + vmax
            h = lo
            for it in range(MAX_LEVEL):
                f = _mass(j2, h, v, weight, t, &fp, &ok)
                if f == 0.0:
                    break
                if f > 0.0:
                    lo = h
                else:
                    hi = h
                h_new = h - f / fp
                if not (h_new >= lo and h_new <= hi):
                    h_new = 0.5 * (lo + hi)
                if fabs(h_new - h) <= 3.6e-15 * (1.0 + fabs(h)) or hi - lo <= 3.6e-15 * (1.0 + fabs(h)):
                    h = h_new
                    _mass(j2, h, v, weight, t, &fp, &ok)
                    break
                h = h_new
        for k in range(n):
            inv += 1.0 / t[k]
    if not ok:
        raise KernelBracketFailure("Lambert iteration failed")
    return h, inv * weight
