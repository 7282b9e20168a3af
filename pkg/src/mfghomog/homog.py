"""Homogenized problem: minimize ln int exp(H~(x, P + grad u0)) dx, then rebuild the two-scale solution.

H~ comes from a cell provider: either on-the-fly cell solves (memoized per
macro node and Lambda) or an interpolated table.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .cell import CellSolution, EffectiveHamiltonianTable, cell_values, solve_cell, solve_cell_separable
from .errors import SolverError
from .oned import sample_two_scale
from .potential import PotentialSpec, sample_cell
from .reports import ResidualReport
from .torus import ScalarField, TorusGrid, div_array, grad_array
from .variational import ExpFunctionalSpec, minimize_exp_functional

ENERGY_TOL = 1e-8


class EnergyIdentityViolation(SolverError):
    pass


class OnTheFlyProvider:
    """Cell values solved on demand at the macro nodes, memoized by (node, Lambda).

    The memo key is the exact Lambda: the minimizer probes nearby Lambdas
    during line searches and any quantization would make H~ piecewise
    constant, breaking both the gradient identity and convergence.
    """

    def __init__(self, V: PotentialSpec, macro: TorusGrid, micro: TorusGrid, tol: float = 1e-12, method: str = "auto"):
        if V.d != macro.d:
            raise ValueError("macro grid dimension must match the potential")
        self.V = V
        self.macro = macro
        self.micro = micro if micro.d == V.d else TorusGrid(V.d, micro.n)
        self.tol = tol
        self.fast = method == "current" or (method == "auto" and (V.d == 1 or V.separable))
        self._x = macro.nodes.reshape(V.d, -1).T
        self._memo: dict = {}
        self._warm: dict = {}
        self._lock = threading.Lock()
        self.solves = 0

    def _values(self, k: int, lam: np.ndarray):
        key = (k, lam.tobytes())
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self.fast:
            out = cell_values(self.V, self._x[k], lam, self.micro.n)
        else:
            s = solve_cell(self.V, self._x[k], lam, self.micro, tol=self.tol, init=self._warm.get(k))
            self._warm[k] = s.w.values
            out = (s.H, s.b)
        with self._lock:
            self._memo[key] = out
            self.solves += 1
        return out

    def evaluate(self, lam: np.ndarray):
        """H~ and b~ at every macro node for a field ``lam`` of shape ``(d,) + macro.shape``."""
        d = self.V.d
        flat = np.ascontiguousarray(np.asarray(lam, dtype=float).reshape(d, -1).T)
        H = np.empty(flat.shape[0])
        b = np.empty((d, flat.shape[0]))
        for k in range(flat.shape[0]):
            H[k], b[:, k] = self._values(k, flat[k])
        return H.reshape(self.macro.shape), b.reshape((d,) + self.macro.shape)

    def cell(self, k: int, lam) -> CellSolution:
        """Full cell solution (corrector and density) at macro node ``k``."""
        if self.fast:
            return solve_cell_separable(self.V, self._x[k], lam, self.micro)
        return solve_cell(self.V, self._x[k], lam, self.micro, tol=self.tol, init=self._warm.get(k))


class TableProvider:
    """Cell values interpolated from a precomputed table.

    The gradient is the Lambda-derivative of the H~ interpolant, so the
    objective and its gradient stay consistent for the line search.
    Correctors for the reconstruction still need V and a micro grid.
    """

    def __init__(self, table: EffectiveHamiltonianTable, V: PotentialSpec | None = None, micro: TorusGrid | None = None):
        self.table = table
        self.macro = table.macro
        self.V = V
        self.micro = micro or TorusGrid(table.d, table.micro_n)
        self._x = table.macro.nodes.reshape(table.d, -1)

    def evaluate(self, lam: np.ndarray):
        d = self.table.d
        H, b = self.table.evaluate(self._x, np.asarray(lam, dtype=float).reshape(d, -1), derivative="spline")
        return H.reshape(self.macro.shape), b.reshape((d,) + self.macro.shape)

    def cell(self, k: int, lam) -> CellSolution:
        if self.V is None:
            raise ValueError("reconstruction from a table needs the potential")
        x = self._x[:, k]
        if self.V.d == 1 or self.V.separable:
            return solve_cell_separable(self.V, x, lam, self.micro)
        return solve_cell(self.V, x, lam, self.micro, tol=1e-12)


@dataclass(frozen=True)
class HomogSolution:
    u0: ScalarField
    m0: ScalarField
    Hbar: float
    I_value: float
    P: np.ndarray
    iterations: int = 0

    @property
    def macro(self) -> TorusGrid:
        return self.u0.grid

    def lam(self) -> np.ndarray:
        """P + grad u0 at the macro nodes, shape ``(d,) + macro.shape``."""
        d = self.macro.d
        return self.P.reshape((d,) + (1,) * d) + grad_array(self.u0.values, d)


@dataclass(frozen=True)
class TwoScaleSolution:
    """u0(x) + two-scale corrector u1(x, y) and density m(x, y) on a macro x micro lattice."""

    u0: ScalarField
    u1: np.ndarray
    m: np.ndarray
    m0: ScalarField
    Hbar: float
    P: np.ndarray
    macro: TorusGrid
    micro: TorusGrid
    I_hat: float = float("nan")
    I_bar: float = float("nan")

    @property
    def energy_gap(self) -> float:
        """|I^ - I-| / I^."""
        return abs(self.I_hat - self.I_bar) / self.I_hat

    @property
    def cell_density(self) -> np.ndarray:
        """m~(x, y) = m / m0."""
        d = self.macro.d
        return self.m / self.m0.values.reshape(self.macro.shape + (1,) * d)

    def total_mass(self) -> float:
        return float(np.sum(self.m)) * self.macro.weight * self.micro.weight


def _homog_functional(provider, P: np.ndarray, macro: TorusGrid) -> ExpFunctionalSpec:
    last = {"xi": None, "val": None}

    def both(xi):
        if last["xi"] is not xi:
            last["xi"], last["val"] = xi, provider.evaluate(xi)
        return last["val"]

    return ExpFunctionalSpec(macro, lambda xi: both(xi)[0], lambda xi: both(xi)[1], drift=P)


def solve_homog(provider, P, macro: TorusGrid | None = None, tol: float = 1e-10, init=None, max_iter: int = 1000) -> HomogSolution:
    """Variational solve of the homogenized problem; H is ln of the minimal value."""
    macro = macro or provider.macro
    if macro != provider.macro:
        raise ValueError("provider and macro grid disagree")
    P = np.asarray(P, dtype=float).reshape(-1)
    if P.size != macro.d:
        raise ValueError(f"P must have {macro.d} components")
    spec = _homog_functional(provider, P, macro)
    res = minimize_exp_functional(spec, init=init, tol=tol, max_iter=max_iter)
    H, _ = provider.evaluate(spec.xi(res.u.values))
    m0 = np.exp(H - res.log_value)
    return HomogSolution(res.u, ScalarField(macro, m0), res.log_value, res.value, P, res.iterations)


def _log_two_scale_energy(V: PotentialSpec, u0: ScalarField, u1: np.ndarray, P, macro, micro) -> float:
    """ln of int int exp(|P + grad u0 + grad_y u1|^2 / 2 + V(x, y)) dy dx."""
    xi = _two_scale_xi(u0, u1, P, macro, micro)
    g = 0.5 * np.sum(xi * xi, axis=0) + sample_two_scale(V, macro, micro)
    c = float(np.max(g))
    return c + math.log(float(np.sum(np.exp(g - c))) * macro.weight * micro.weight)


def _two_scale_xi(u0, u1, P, macro, micro) -> np.ndarray:
    d = macro.d
    du0 = grad_array(u0.values, d)
    dy = grad_array(u1, d)  # derivatives along the trailing (micro) axes
    return np.asarray(P).reshape((d,) + (1,) * (2 * d)) + du0.reshape(du0.shape + (1,) * d) + dy


def reconstruct_two_scale(hs: HomogSolution, provider, V: PotentialSpec | None = None, check: bool = True) -> TwoScaleSolution:
    """u1(x, .) = w~(x, P + grad u0(x), .), m = m0 * m~; verifies I^[u0] = I-[u0, u1]."""
    V = V or provider.V
    macro = hs.macro
    micro = provider.micro
    d = macro.d
    lam = hs.lam().reshape(d, -1)
    u1 = np.empty(macro.shape + micro.shape)
    m = np.empty(macro.shape + micro.shape)
    u1f = u1.reshape((-1,) + micro.shape)
    mf = m.reshape((-1,) + micro.shape)
    m0 = hs.m0.values.reshape(-1)
    log_hat_terms = np.empty(lam.shape[1])
    for k in range(lam.shape[1]):
        s = provider.cell(k, lam[:, k])
        u1f[k] = s.w.values
        mf[k] = m0[k] * s.m.values
        log_hat_terms[k] = s.H
    c = float(np.max(log_hat_terms))
    log_hat = c + math.log(float(np.sum(np.exp(log_hat_terms - c))) * macro.weight)
    log_bar = _log_two_scale_energy(V, hs.u0, u1, hs.P, macro, micro)
    tss = TwoScaleSolution(hs.u0, u1, m, hs.m0, hs.Hbar, hs.P, macro, micro, math.exp(log_hat), math.exp(log_bar))
    if check and tss.energy_gap > ENERGY_TOL:
        raise EnergyIdentityViolation(f"energy identity gap {tss.energy_gap:.3e} exceeds {ENERGY_TOL:g}")
    return tss


def residuals_two_scale(tss: TwoScaleSolution, V: PotentialSpec) -> ResidualReport:
    """HJ residual (sup), macro transport (L2) and worst micro transport (L2 in y, max over x)."""
    macro, micro = tss.macro, tss.micro
    d = macro.d
    xi = _two_scale_xi(tss.u0, tss.u1, tss.P, macro, micro)
    v = sample_two_scale(V, macro, micro)
    hj = 0.5 * np.sum(xi * xi, axis=0) + v - np.log(tss.m) - tss.Hbar
    flux = tss.m * xi
    micro_axes = tuple(range(1 + d, 1 + 2 * d))
    macro_flux = np.sum(flux, axis=micro_axes) * micro.weight
    r_macro = div_array(macro_flux, d)
    r_micro = div_array(flux, d)  # trailing axes are the micro ones
    micro_l2 = np.sqrt(np.sum(r_micro**2, axis=tuple(range(d, 2 * d))) * micro.weight)
    macro_l2 = float(np.sqrt(np.sum(r_macro**2) * macro.weight))
    return ResidualReport(
        hj=float(np.max(np.abs(hj))),
        transport=macro_l2,
        threshold=float("inf"),
        extra={"micro_transport": float(np.max(micro_l2)), "mass_defect": abs(tss.total_mass() - 1.0)},
    )
