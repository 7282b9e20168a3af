"""Oscillating problem at fixed eps, solved by minimizing ln int exp(|P + grad u|^2/2 + V(x, x/eps))."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import GridIncommensurate
from .oned import eps_to_k
from .potential import PotentialBounds, PotentialSpec, sample_oscillating
from .reports import BoundCheck, BoundReport, ResidualReport
from .torus import ScalarField, TorusGrid, div_array, grad_array
from .variational import ExpFunctionalSpec, euler_lagrange_residual, minimize_exp_functional, quadratic_exponent

POINTS_PER_PERIOD = 16


def default_grid_size(eps, points_per_period: int = POINTS_PER_PERIOD) -> int:
    """Smallest admissible n with at least ``points_per_period`` nodes per oscillation."""
    k = eps_to_k(eps)
    n = points_per_period * k
    return max(n + n % 2, 8)


@dataclass(frozen=True)
class EpsProblem:
    potential: PotentialSpec
    P: np.ndarray
    eps: Fraction
    grid: TorusGrid

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).reshape(-1)
        if P.size != self.potential.d or self.grid.d != self.potential.d:
            raise ValueError("potential, drift P and grid must share the dimension")
        k = eps_to_k(self.eps)
        if self.grid.n % k:
            raise GridIncommensurate(f"grid size {self.grid.n} is not a multiple of 1/eps = {k}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "eps", Fraction(1, k))

    @property
    def k(self) -> int:
        return self.eps.denominator

    @classmethod
    def build(cls, potential: PotentialSpec, P, eps, n: int | None = None) -> "EpsProblem":
        n = default_grid_size(eps) if n is None else n
        return cls(potential, P, eps, TorusGrid(potential.d, n))

    def potential_values(self) -> np.ndarray:
        return sample_oscillating(self.potential, self.grid, self.k)

    def functional(self) -> ExpFunctionalSpec:
        exponent, grad = quadratic_exponent(self.potential_values())
        return ExpFunctionalSpec(self.grid, exponent, grad, drift=self.P)


@dataclass(frozen=True)
class EpsSolution:
    problem: EpsProblem
    u: ScalarField
    m: ScalarField
    Hbar: float
    I_value: float
    iterations: int = 0
    tol: float = 1e-10

    @property
    def grid(self) -> TorusGrid:
        return self.problem.grid


def density_from_value(problem: EpsProblem, u: np.ndarray, hbar: float) -> np.ndarray:
    """m = exp(|P + grad u|^2 / 2 + V - Hbar)."""
    xi = problem.functional().xi(u)
    return np.exp(0.5 * np.sum(xi * xi, axis=0) + problem.potential_values() - hbar)


def solve_eps(p: EpsProblem, tol: float = 1e-10, init=None, max_iter: int = 1000, raise_on_failure: bool = True) -> EpsSolution:
    """Variational solve of the oscillating problem; H is the log of the minimal value."""
    spec = p.functional()
    res = minimize_exp_functional(spec, init=init, tol=tol, max_iter=max_iter, raise_on_failure=raise_on_failure)
    u = res.u.values
    m = density_from_value(p, u, res.log_value)
    return EpsSolution(p, res.u, ScalarField(p.grid, m), res.log_value, res.value, res.iterations, tol)


def residuals_eps(s: EpsSolution) -> ResidualReport:
    """Transport residual ||div(m (P + grad u))||_L2; the HJ equation holds by construction."""
    p = s.problem
    d = p.grid.d
    xi = p.P.reshape((d,) + (1,) * d) + grad_array(s.u.values, d)
    r = div_array(s.m.values * xi, d)
    transport = float(np.sqrt(np.sum(r * r) * p.grid.weight))
    # the same quantity from the minimizer's own gradient, as a cross-check
    rel, _ = euler_lagrange_residual(p.functional(), s.u)
    return ResidualReport(
        hj=0.0,
        transport=transport,
        threshold=10.0 * s.tol * (1.0 + s.I_value),
        extra={"el_relative": rel, "mass_defect": abs(float(np.sum(s.m.values)) * p.grid.weight - 1.0)},
    )


def verify_bounds_eps(s: EpsSolution, b: PotentialBounds, slack: float = 1e-2) -> BoundReport:
    """The a priori bounds on H, grad u, the entropy and inf m."""
    p = s.problem
    d = p.grid.d
    w = p.grid.weight
    half_p2 = 0.5 * float(p.P @ p.P)
    osc = b.vmax - b.vmin
    du = grad_array(s.u.values, d)
    m = s.m.values
    checks = (
        BoundCheck("hbar_band", s.Hbar, b.vmin, half_p2 + b.vmax, slack),
        BoundCheck("gradient_energy", float(np.sum(du * du)) * w, upper=2.0 * osc, slack=slack),
        BoundCheck("entropy", float(np.sum(m * np.log(m))) * w, upper=half_p2 + osc, slack=slack),
        BoundCheck("density_floor", float(np.min(m)), lower=math.exp(-osc - half_p2), slack=slack),
    )
    return BoundReport(checks)
