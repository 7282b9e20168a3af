"""Pure numpy implementation of the root-finding kernels.

Mirrors ``_kernels.pyx`` step for step (same equations, starting points and stopping
rules), vectorized across nodes with fixed masks instead of per-node loops.
"""

import numpy as np

MAX_NEWTON = 100
MAX_LEVEL = 200


class KernelBracketFailure(RuntimeError):
    pass


def _lambert(lx: np.ndarray) -> np.ndarray:
    """w >= 0 with w * exp(w) = exp(lx), elementwise (see the compiled kernel)."""
    lx = np.asarray(lx, dtype=float)
    if np.any(np.isnan(lx)):
        raise KernelBracketFailure("Lambert iteration failed")
    small = lx < 1.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x = np.exp(np.minimum(lx, 1.0))
        w = np.where(small, np.log1p(x), lx - np.log(np.maximum(lx, 1.0)))
        act = lx >= -700.0
        for _ in range(MAX_NEWTON):
            if not act.any():
                break
            ew = np.exp(np.where(small, w, 0.0))
            f = np.where(small, w * ew - x, w + np.log(w) - lx)
            fp = np.where(small, (1.0 + w) * ew, 1.0 + 1.0 / w)
            w_new = np.where(act, w - f / fp, w)
            act = act & ~(np.abs(w_new - w) <= 3.6e-15 * w)
            w = w_new
        else:
            raise KernelBracketFailure("Lambert iteration failed")
    return np.where(lx < -700.0, np.exp(np.minimum(lx, -700.0)), w)


def f_inverse_values(j: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if j == 0.0:
        return np.exp(-z)
    return np.exp(0.5 * _lambert(np.log(j * j) + 2.0 * z) - z)


def f_inverse(j: float, z: float) -> float:
    return float(f_inverse_values(j, np.array([z]))[0])


def f_inverse_array(j, z, out):
    out[:] = f_inverse_values(j, z)


def _mass(j2, level, v, weight, j):
    t = f_inverse_values(j, level - v)
    t2 = t * t
    return t, float(np.sum(t)) * weight - 1.0, -float(np.sum(t2 * t / (j2 + t2))) * weight


def solve_level(j, v, weight, t):
    """Level H with weight * sum_k F_j^{-1}(H - v_k) = 1; fills ``t``.

    Returns ``(H, weight * sum 1/t)``.
    """
    v = np.asarray(v, dtype=float)
    j = float(j)
    j2 = j * j
    if j2 == 0.0:
        vmax = float(np.max(v))
        h = vmax + float(np.log(np.sum(np.exp(v - vmax)) * weight))
        prof, _, _ = _mass(j2, h, v, weight, j)
    else:
        lo = 0.5 * j2 + float(np.min(v))
        hi = 0.5 * j2 + float(np.max(v))
        h = lo
        for _ in range(MAX_LEVEL):
            prof, f, fp = _mass(j2, h, v, weight, j)
            if f == 0.0:
                break
            if f > 0.0:
                lo = h
            else:
                hi = h
            h_new = h - f / fp
            if not (lo <= h_new <= hi):
                h_new = 0.5 * (lo + hi)
            if abs(h_new - h) <= 3.6e-15 * (1.0 + abs(h)) or hi - lo <= 3.6e-15 * (1.0 + abs(h)):
                h = h_new
                prof, _, _ = _mass(j2, h, v, weight, j)
                break
            h = h_new
    t[:] = prof
    return h, float(np.sum(1.0 / prof)) * weight
