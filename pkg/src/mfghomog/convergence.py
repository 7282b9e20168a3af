"""Eps-sweeps against the homogenized limit.

For each eps the oscillating problem is solved and compared with the limit
(u0, u1, m0, m~, H): gaps in H, in u (sup norm), in the minimal energy, and
in two-scale test integrals of the gradient.  The first-order ansatz
u0 + eps u1(x, x/eps) is also plugged back into the oscillating equations.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .eps_solver import EpsProblem, POINTS_PER_PERIOD, residuals_eps, solve_eps, verify_bounds_eps
from .errors import GridIncommensurate, SolverError
from .homog import OnTheFlyProvider, TwoScaleSolution, reconstruct_two_scale, solve_homog
from .oned import eps_to_k, sample_two_scale, solve_limit_1d
from .potential import PotentialSpec, parse_potential, potential_bounds, sample_oscillating
from .torus import ScalarField, TorusGrid, div_array, grad_array, resample

TestFunctionSpec = PotentialSpec

# trig monomials of degree <= 2 in x and y; odd-symmetric ones are left out
# because their gaps vanish identically for even potentials
DEFAULT_BATTERY = (
    "cos(2*pi*x1)",
    "cos(2*pi*y1)",
    "cos(2*pi*x1)*cos(2*pi*y1)",
    "sin(2*pi*x1)*sin(2*pi*y1)",
    "cos(4*pi*x1)*cos(2*pi*y1)",
    "cos(2*pi*x1)*cos(4*pi*y1)",
)


def parse_test_function(text: str, d: int) -> TestFunctionSpec:
    """A test function psi(x, y) in the potential grammar (y-periodic)."""
    return parse_potential(text, d, kind="expression")


def two_scale_test_integral(w_eps, psi: TestFunctionSpec, eps) -> float:
    """int w_eps(x) psi(x, x/eps) dx by the grid quadrature."""
    grid = w_eps.grid
    k = eps_to_k(eps)
    if grid.n % k:
        raise GridIncommensurate(f"grid size {grid.n} is not a multiple of 1/eps = {k}")
    return float(np.sum(w_eps.values * sample_oscillating(psi, grid, k))) * grid.weight


def _limit_gradient_integral(tss: TwoScaleSolution, psi: TestFunctionSpec) -> np.ndarray:
    """int int (grad u0 + grad_y u1) psi dy dx, one entry per component."""
    d = tss.macro.d
    du0 = grad_array(tss.u0.values, d)
    du1 = grad_array(tss.u1, d)
    g = du0.reshape(du0.shape + (1,) * d) + du1
    p = sample_two_scale(psi, tss.macro, tss.micro)
    axes = tuple(range(1, 2 * d + 1))
    return np.sum(g * p, axis=axes) * tss.macro.weight * tss.micro.weight


def _fine_macro(values: np.ndarray, d: int, n_new: int) -> np.ndarray:
    """Trigonometric resampling of the leading d (macro) axes."""
    return resample(values, n_new, axes=range(d))


def expansion_residual(tss: TwoScaleSolution, eps, V: PotentialSpec):
    """HJ (sup) and transport (L2) residuals of u0 + eps u1(x, x/eps), m0 m~(x, x/eps).

    Evaluated on the grid with 16 points per period, using the limit H.
    """
    k = eps_to_k(eps)
    d = tss.macro.d
    n = POINTS_PER_PERIOD * k
    step = tss.micro.n * k
    if step % n:
        raise GridIncommensurate(f"micro grid size {tss.micro.n} is not a multiple of {n // k}")
    ratio = step // n  # micro index of y = x/eps advances by this per fine node
    e = 1.0 / k
    grid = TorusGrid(d, n)
    du0 = np.stack([resample(c, n, axes=range(d)) for c in grad_array(tss.u0.values, d)])
    # fields on (fine x) x (micro y); sample y = x/eps by exact index arithmetic
    idx = np.indices(grid.shape)
    yidx = tuple((i * ratio) % tss.micro.n for i in idx)

    def at_diag(a):
        fine = _fine_macro(a, d, n)
        return fine[tuple(idx) + yidx]

    dxu1 = grad_array(tss.u1, d, first_axis=0)
    dyu1 = grad_array(tss.u1, d)
    xi = (
        tss.P.reshape((d,) + (1,) * d)
        + du0
        + np.stack([e * at_diag(dxu1[i]) + at_diag(dyu1[i]) for i in range(d)])
    )
    m0 = resample(tss.m0.values, n, axes=range(d))
    m = m0 * at_diag(tss.cell_density)
    v = sample_oscillating(V, grid, k)
    hj = 0.5 * np.sum(xi * xi, axis=0) + v - np.log(m) - tss.Hbar
    r = div_array(m * xi, d)
    return float(np.max(np.abs(hj))), float(np.sqrt(np.sum(r * r) * grid.weight))


@dataclass
class ConvergenceConfig:
    potential: PotentialSpec
    P: np.ndarray
    eps: list
    macro_n: int = 64
    micro_n: int = 128
    points_per_period: int = POINTS_PER_PERIOD
    tol: float = 1e-10
    battery: tuple = DEFAULT_BATTERY
    workers: int = 1

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(-1)
        self.eps = [Fraction(1, eps_to_k(e)) for e in self.eps]
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps list must be strictly decreasing")


@dataclass
class ConvergenceReport:
    eps: list
    rows: list
    limit: dict = field(default_factory=dict)

    METRICS = ("hbar_gap", "u_sup_gap", "energy_gap", "expansion_hj")

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def test_gap_names(self) -> list:
        return sorted(k for k in self.rows[0] if k.startswith("test_gap_"))

    def strictly_decreasing(self, name: str) -> bool:
        s = self.series(name)
        return bool(np.all(np.diff(s) < 0))

    def halved(self, name: str) -> bool:
        s = self.series(name)
        return bool(s[-1] <= 0.5 * s[0])

    def to_dict(self) -> dict:
        return {"eps": [f"1/{e.denominator}" for e in self.eps], "rows": self.rows, "limit": self.limit}

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(self.rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([f"{r[c]:.17e}" if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()


def compute_limit(cfg: ConvergenceConfig) -> TwoScaleSolution:
    """Limit from the 1D current method when d = 1, else homogenized solve plus reconstruction."""
    V, d = cfg.potential, cfg.potential.d
    macro, micro = TorusGrid(d, cfg.macro_n), TorusGrid(d, cfg.micro_n)
    if d == 1:
        return solve_limit_1d(V, float(cfg.P[0]), macro, micro).to_two_scale()
    provider = OnTheFlyProvider(V, macro, micro)
    hs = solve_homog(provider, cfg.P, macro, tol=cfg.tol)
    return reconstruct_two_scale(hs, provider)


def run_convergence_study(cfg: ConvergenceConfig) -> ConvergenceReport:
    V, d = cfg.potential, cfg.potential.d
    limit = compute_limit(cfg)
    bounds = potential_bounds(V)
    battery = [parse_test_function(t, d) for t in cfg.battery]
    limit_tests = [_limit_gradient_integral(limit, psi) for psi in battery]

    def one(eps):
        k = eps.denominator
        n = cfg.points_per_period * k
        try:
            sol = solve_eps(EpsProblem(V, cfg.P, eps, TorusGrid(d, n)), tol=cfg.tol)
        except SolverError as exc:
            exc.args = (f"{exc} (eps=1/{k})",)
            raise
        u0 = resample(limit.u0.values, n, axes=range(d))
        row = {
            "eps": f"1/{k}",
            "n": n,
            "hbar_eps": sol.Hbar,
            "hbar_gap": abs(sol.Hbar - limit.Hbar),
            "u_sup_gap": float(np.max(np.abs(sol.u.values - u0))),
            "energy_gap": abs(math.exp(sol.Hbar) - math.exp(limit.Hbar)),
        }
        du = grad_array(sol.u.values, d)
        for i, (psi, ref) in enumerate(zip(battery, limit_tests)):
            val = np.array([two_scale_test_integral(ScalarField(sol.grid, du[c]), psi, eps) for c in range(d)])
            row[f"test_gap_{i + 1}"] = float(np.linalg.norm(val - ref))
        row["expansion_hj"], row["expansion_transport"] = expansion_residual(limit, eps, V)
        row["transport_residual"] = residuals_eps(sol).transport
        row["bounds_passed"] = verify_bounds_eps(sol, bounds).passed
        return row

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(one, cfg.eps))
    else:
        rows = [one(e) for e in cfg.eps]
    meta = {
        "Hbar": limit.Hbar,
        "macro_n": cfg.macro_n,
        "micro_n": cfg.micro_n,
        "potential": V.to_config(),
        "P": cfg.P.tolist(),
        "battery": list(cfg.battery),
    }
    return ConvergenceReport(list(cfg.eps), rows, meta)
