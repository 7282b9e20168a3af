"""Current-method solutions of the one-dimensional problems.

In 1D the flux j = m (P + u_x) is constant, so the Hamilton-Jacobi equation
turns into the pointwise relation m = F_j^{-1}(H - V) with
F_j(t) = j^2 / (2 t^2) - ln t.  Everything reduces to two scalar unknowns:
the level H (inner root: unit mass) and the current j (outer root:
periodicity, j * int 1/m = P).  These solutions are independent of the
variational solvers and serve as their ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import BracketFailure, GridIncommensurate, RootFindFailure
from .potential import PotentialSpec, sample_oscillating
from .torus import ScalarField, TorusGrid, antiderivative


def eps_to_k(eps) -> int:
    """Integer k with eps = 1/k; accepts Fraction, "1/k" strings, ints and floats."""
    if isinstance(eps, str):
        eps = Fraction(eps.strip())
    elif isinstance(eps, float):
        eps = Fraction(eps).limit_denominator(10**6)
    else:
        eps = Fraction(eps)
    if eps <= 0 or eps > 1 or eps.numerator != 1:
        raise GridIncommensurate(f"eps must be 1/k for a positive integer k, got {eps}")
    return eps.denominator


def f_inverse(j: float, z):
    """t > 0 solving j^2 / (2 t^2) - ln t = z (scalar or array z)."""
    try:
        if np.ndim(z) == 0:
            return kernels.f_inverse(float(j), float(z))
        z = np.ascontiguousarray(z, dtype=float)
        out = np.empty_like(z)
        kernels.f_inverse_array(float(j), z.reshape(-1), out.reshape(-1))
        return out
    except kernels.KernelBracketFailure as exc:
        raise BracketFailure(str(exc)) from None


def level_for_current(j: float, v: np.ndarray, weight: float):
    """Level H with weight * sum F_j^{-1}(H - v) = 1.

    Returns ``(H, m, weight * sum 1/m)`` with ``m`` shaped like ``v``.
    """
    v = np.ascontiguousarray(v, dtype=float)
    t = np.empty(v.size)
    try:
        h, inv = kernels.solve_level(float(j), v.reshape(-1), float(weight), t)
    except kernels.KernelBracketFailure as exc:
        raise BracketFailure(str(exc)) from None
    return h, t.reshape(v.shape), inv


def safeguarded_secant(func, a: float, b: float, fa: float, fb: float, ftol: float, maxiter: int = 200):
    """Root of ``func`` in a sign-changing bracket [a, b].

    Secant steps through the two latest iterates; bisection whenever the
    secant point leaves the bracket or the bracket fails to halve over two
    consecutive steps.
    """
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise RootFindFailure(f"no sign change on [{a}, {b}]")
    x0, f0, x1, f1 = a, fa, b, fb
    width = abs(b - a)
    slow = 0
    for _ in range(maxiter):
        x = x1 - f1 * (x1 - x0) / (f1 - f0) if f1 != f0 else 0.5 * (a + b)
        lo, hi = min(a, b), max(a, b)
        if not (lo < x < hi) or slow >= 2:
            x = 0.5 * (a + b)
            slow = 0
        fx = func(x)
        if abs(fx) <= ftol:
            return x
        if np.sign(fx) == np.sign(fa):
            a, fa = x, fx
        else:
            b, fb = x, fx
        new_width = abs(b - a)
        slow = slow + 1 if new_width > 0.5 * width else 0
        width = new_width
        x0, f0, x1, f1 = x1, f1, x, fx
        if width <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x
    raise RootFindFailure(f"secant iteration did not converge (bracket [{a}, {b}])")


def solve_current(v: np.ndarray, weight: float, P: float):
    """Current j, level H and density m for samples ``v`` of the potential.

    Solves  weight * sum m = 1  and  j * weight * sum 1/m = P  with
    m = F_j^{-1}(H - v).
    """
    P = float(P)
    if P == 0.0:
        h, m, _ = level_for_current(0.0, v, weight)
        return 0.0, h, m

    def residual(j):
        _, _, inv = level_for_current(j, v, weight)
        return j * inv - P

    spread = float(np.max(v) - np.min(v))
    delta = 2.0 * (spread + 1.0)
    a, b = P - delta, P + delta
    fa, fb = residual(a), residual(b)
    for _ in range(60):
        if np.sign(fa) != np.sign(fb):
            break
        delta *= 2.0
        a, b = P - delta, P + delta
        fa, fb = residual(a), residual(b)
    else:
        raise RootFindFailure(f"current residual has no sign change on [{a}, {b}]")
    j = safeguarded_secant(residual, a, b, fa, fb, ftol=1e-14 * max(1.0, abs(P)))
    h, m, _ = level_for_current(j, v, weight)
    return j, h, m


@dataclass(frozen=True)
class CurrentProfile:
    """Solution (u, m, H) of the oscillating 1D problem with its constant current j."""

    j: float
    Hbar: float
    m: ScalarField
    u: ScalarField
    P: float
    potential_values: np.ndarray

    @property
    def grid(self) -> TorusGrid:
        return self.m.grid

    def hj_residual(self) -> float:
        m = self.m.values
        r = np.log(m) + self.Hbar - self.potential_values - 0.5 * (self.j / m) ** 2
        return float(np.max(np.abs(r)))


def _profile(v: np.ndarray, grid: TorusGrid, P: float) -> CurrentProfile:
    j, h, m = solve_current(v, grid.weight, P)
    u = antiderivative(j / m - P)
    return CurrentProfile(j, h, ScalarField(grid, m), ScalarField(grid, u - np.mean(u)), float(P), v)


def solve_eps_1d(V: PotentialSpec, P: float, eps, grid: TorusGrid) -> CurrentProfile:
    """Current-method solution of the 1D problem with potential V(x, x/eps)."""
    if V.d != 1 or grid.d != 1:
        raise ValueError("solve_eps_1d needs a one-dimensional potential and grid")
    k = eps_to_k(eps)
    if grid.n % k:
        raise GridIncommensurate(f"grid size {grid.n} is not a multiple of 1/eps = {k}")
    return _profile(sample_oscillating(V, grid, k), grid, P)


def solve_profile_1d(v, grid: TorusGrid, P: float) -> CurrentProfile:
    """Current-method solution for explicit nodal samples of a 1-periodic potential."""
    return _profile(np.asarray(v, dtype=float), grid, P)


@dataclass(frozen=True)
class Cell1D:
    """1D cell solution: corrector w, density m, effective value H, current j."""

    lam: float
    w: ScalarField
    m: ScalarField
    H: float
    j: float
    potential_values: np.ndarray

    @property
    def flux(self) -> float:
        return self.j

    def hj_residual(self) -> float:
        m = self.m.values
        r = np.log(m) + self.H - self.potential_values - 0.5 * (self.j / m) ** 2
        return float(np.max(np.abs(r)))


def cell_1d(V_slice, lam: float, micro: TorusGrid) -> Cell1D:
    """Cell problem on the unit circle for one frozen macro point.

    ``V_slice`` is either the nodal samples of y -> V(x, y) on ``micro`` or a
    vectorized callable of y.
    """
    if micro.d != 1:
        raise ValueError("cell_1d needs a one-dimensional micro grid")
    v = V_slice(micro.axis_nodes) if callable(V_slice) else V_slice
    v = np.broadcast_to(np.asarray(v, dtype=float), micro.shape).copy()
    j, h, m = solve_current(v, micro.weight, lam)
    w = antiderivative(j / m - lam)
    return Cell1D(float(lam), ScalarField(micro, w - np.mean(w)), ScalarField(micro, m), h, j, v)


@dataclass(frozen=True)
class OneDLimit:
    """Two-scale limit (u0, u1, m, H) of the 1D problem on a macro x micro lattice."""

    j: float
    Hbar: float
    m: np.ndarray  # (n_macro, n_micro)
    u0: ScalarField
    u1: np.ndarray  # (n_macro, n_micro), mean zero in y for every x
    m0: ScalarField
    P: float
    macro: TorusGrid
    micro: TorusGrid
    potential_values: np.ndarray

    def hj_residual(self) -> float:
        r = np.log(self.m) + self.Hbar - self.potential_values - 0.5 * (self.j / self.m) ** 2
        return float(np.max(np.abs(r)))

    def to_two_scale(self):
        from .homog import TwoScaleSolution

        return TwoScaleSolution(
            u0=self.u0,
            u1=self.u1,
            m=self.m,
            m0=self.m0,
            Hbar=self.Hbar,
            P=np.array([self.P]),
            macro=self.macro,
            micro=self.micro,
        )


def sample_two_scale(V: PotentialSpec, macro: TorusGrid, micro: TorusGrid) -> np.ndarray:
    """V(x_i, y_j) on the product lattice, shape ``macro.shape + micro.shape``."""
    d = V.d
    xs = macro.nodes.reshape((d,) + macro.shape + (1,) * d)
    ys = micro.nodes.reshape((d,) + (1,) * d + micro.shape)
    return V(np.broadcast_to(xs, (d,) + macro.shape + micro.shape), ys)


def solve_limit_1d(V: PotentialSpec, P: float, macro: TorusGrid, micro: TorusGrid) -> OneDLimit:
    """Current-method two-scale limit: one current j for the whole (x, y) torus."""
    if V.d != 1 or macro.d != 1 or micro.d != 1:
        raise ValueError("solve_limit_1d needs d = 1")
    v = sample_two_scale(V, macro, micro)
    j, h, m = solve_current(v, macro.weight * micro.weight, P)
    q = j / m
    qbar = np.mean(q, axis=1)
    u0 = antiderivative(qbar - P)
    u1 = antiderivative(q - qbar[:, None], axis=1)
    u1 -= np.mean(u1, axis=1, keepdims=True)
    return OneDLimit(
        j=j,
        Hbar=h,
        m=m,
        u0=ScalarField(macro, u0 - np.mean(u0)),
        u1=u1,
        m0=ScalarField(macro, np.mean(m, axis=1)),
        P=float(P),
        macro=macro,
        micro=micro,
        potential_values=v,
    )


def hbar_closed_form_p0(v: np.ndarray) -> float:
    """ln of the mean of e^v, the exact level for zero drift."""
    vmax = float(np.max(v))
    return vmax + math.log(float(np.mean(np.exp(v - vmax))))
