"""Cell problem at a frozen macro point and the effective Hamiltonian surface.

For fixed (x, Lambda) the cell problem minimizes
ln int_Y exp(|Lambda + grad w|^2 / 2 + V(x, y)) dy over mean-zero w; the
minimal value is H~(x, Lambda) and its Lambda-gradient is the flux
b~ = int m~ (Lambda + grad w).  When V is separable (or d = 1) the cell
problem splits into independent 1D current-method solves.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import NotSeparable, OutOfTableRange, SolverError
from .oned import solve_current
from .potential import PotentialBounds, PotentialSpec, eval_potential, from_config, sample_cell
from .reports import BoundCheck, BoundReport
from .torus import ScalarField, TorusGrid, antiderivative, grad_array
from .variational import ExpFunctionalSpec, log_functional_value, minimize_exp_functional, quadratic_exponent

TABLE_FORMAT = "mfghomog-heff"
TABLE_VERSION = 1
# the cubic grid interpolator fits its spline iteratively; the default
# tolerance (about 1e-6) would not even reproduce the stored lattice values
_SPLINE_SOLVER = {"rtol": 1e-14, "atol": 1e-14}


@dataclass(frozen=True)
class CellSolution:
    x: np.ndarray
    lam: np.ndarray
    micro: TorusGrid
    w: ScalarField
    m: ScalarField
    H: float
    b: np.ndarray
    iterations: int = 0

    def energy(self, V: PotentialSpec) -> float:
        """ln of the cell functional at the stored corrector (recomputes H)."""
        return log_functional_value(_cell_functional(V, self.x, self.lam, self.micro), self.w)


def _as_vec(a, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != d:
        raise ValueError(f"expected a vector of length {d}, got {a.size}")
    return a


def _cell_functional(V, x, lam, micro) -> ExpFunctionalSpec:
    exponent, grad = quadratic_exponent(sample_cell(V, x, micro))
    return ExpFunctionalSpec(micro, exponent, grad, drift=lam)


def solve_cell(V: PotentialSpec, x, lam, micro: TorusGrid, tol: float = 1e-10, init=None, max_iter: int = 1000) -> CellSolution:
    """Variational cell solve on the d-dimensional micro torus."""
    d = V.d
    x, lam = _as_vec(x, d), _as_vec(lam, d)
    if micro.d != d:
        raise ValueError("micro grid dimension must match the potential")
    spec = _cell_functional(V, x, lam, micro)
    res = minimize_exp_functional(spec, init=init, tol=tol, max_iter=max_iter)
    xi = spec.xi(res.u.values)
    m = np.exp(spec.exponent(xi) - res.log_value)
    b = np.sum(m * xi, axis=tuple(range(1, d + 1))) * micro.weight
    return CellSolution(x, lam, micro, res.u, ScalarField(micro, m), res.log_value, b, res.iterations)


def _term_samples(V: PotentialSpec, i: int, x: np.ndarray, n: int) -> np.ndarray:
    """Samples of the i-th separable term on a 1D micro grid along y_i."""
    d = V.d
    y = np.broadcast_to(np.arange(n) / n, (d, n))
    xs = np.broadcast_to(x.reshape(d, 1), (d, n))
    return eval_potential(V.term(i), xs, y)


def _axis_terms(V: PotentialSpec):
    if V.d == 1:
        return [V]
    if not V.separable:
        raise NotSeparable(f"potential of kind {V.kind!r} is not separable")
    return [V.term(i) for i in range(V.d)]


def cell_values(V: PotentialSpec, x, lam, n: int):
    """``(H~, b~)`` by 1D current-method solves; requires d = 1 or a separable V."""
    d = V.d
    x, lam = _as_vec(x, d), _as_vec(lam, d)
    _axis_terms(V)
    weight = 1.0 / n
    H = 0.0
    b = np.empty(d)
    for i in range(d):
        v = _term_samples(V, i, x, n) if d > 1 else sample_cell(V, x, TorusGrid(1, n))
        j, h, _ = solve_current(v, weight, lam[i])
        H += h
        b[i] = j
    return H, b


def solve_cell_separable(V: PotentialSpec, x, lam, micro: TorusGrid) -> CellSolution:
    """Product of d independent 1D cell solves; ``micro`` may be 1D or d-dimensional."""
    d = V.d
    if d > 1 and not V.separable:
        raise NotSeparable(f"potential of kind {V.kind!r} is not separable")
    x, lam = _as_vec(x, d), _as_vec(lam, d)
    n = micro.n
    full = TorusGrid(d, n)
    w = np.zeros(full.shape)
    m = np.ones(full.shape)
    H = 0.0
    b = np.empty(d)
    for i in range(d):
        v = _term_samples(V, i, x, n) if d > 1 else sample_cell(V, x, TorusGrid(1, n))
        j, h, mi = solve_current(v, 1.0 / n, lam[i])
        wi = antiderivative(j / mi - lam[i])
        shape = [1] * d
        shape[i] = n
        w = w + (wi - np.mean(wi)).reshape(shape)
        m = m * mi.reshape(shape)
        H += h
        b[i] = j
    return CellSolution(x, lam, full, ScalarField(full, w), ScalarField(full, m), H, b)


def flux_vs_fd(V: PotentialSpec, x, lam, micro: TorusGrid, step: float = 1e-3, method: str = "auto", tol: float = 1e-12) -> dict:
    """Central differences of H~ in each Lambda axis against the flux b~."""
    if not 1e-4 <= step <= 1e-2:
        raise ValueError("fd step must lie in [1e-4, 1e-2]")
    d = V.d
    lam = _as_vec(lam, d)
    fast = method == "current" or (method == "auto" and (d == 1 or V.separable))

    def solve(at):
        if fast:
            return cell_values(V, x, at, micro.n)
        s = solve_cell(V, x, at, micro, tol=tol)
        return s.H, s.b

    _, b = solve(lam)
    fd = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        fd[i] = (solve(lam + e)[0] - solve(lam - e)[0]) / (2 * step)
    mismatch = np.abs(fd - b) / np.maximum(1.0, np.abs(b))
    return {"lam": lam.tolist(), "b": b.tolist(), "fd": fd.tolist(), "max_rel": float(np.max(mismatch))}


def verify_cell_bounds(s: CellSolution, bounds: PotentialBounds, slack: float = 1e-2) -> BoundReport:
    """Coercivity band, corrector energy and density floor of one cell solution."""
    half = 0.5 * float(s.lam @ s.lam)
    osc = bounds.oscillation
    dw = grad_array(s.w.values, s.micro.d)
    return BoundReport((
        BoundCheck("coercivity", s.H, half + bounds.vmin, half + bounds.vmax, slack),
        BoundCheck("corrector_energy", float(np.sum(dw * dw)) * s.micro.weight, upper=2 * osc, slack=slack),
        BoundCheck("density_floor", float(np.min(s.m.values)), lower=math.exp(-osc - half), slack=slack),
        BoundCheck("mass", float(np.sum(s.m.values)) * s.micro.weight, 1.0, 1.0, 1e-9),
    ))


def default_lam_max(P, bounds: PotentialBounds) -> float:
    """Smallest admissible box half-width |P| + 2 (sup V - inf V) + 1."""
    return float(np.linalg.norm(np.asarray(P, dtype=float))) + 2.0 * bounds.oscillation + 1.0


def lam_lattice(lam_max: float, dlam: float) -> np.ndarray:
    k = int(round(lam_max / dlam))
    if k < 2 or abs(k * dlam - lam_max) > 1e-9 * max(1.0, lam_max):
        raise ValueError("lam_max must be an integer multiple (>= 2) of the lattice step")
    return np.arange(-k, k + 1) * dlam


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonianTable:
    """H~ and b~ on (macro nodes) x (Lambda lattice), with cubic interpolation.

    ``H`` has shape ``macro.shape + (len(lam_axis),) * d`` and ``b`` has a
    leading axis of length d.  The x axes are periodic.
    """

    macro: TorusGrid
    lam_axis: np.ndarray
    H: np.ndarray
    b: np.ndarray
    micro_n: int
    potential: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.macro.d

    @property
    def lam_max(self) -> float:
        return float(self.lam_axis[-1])

    @property
    def dlam(self) -> float:
        return float(self.lam_axis[1] - self.lam_axis[0])

    @property
    def box(self):
        return (-self.lam_max, self.lam_max)

    @property
    def size(self) -> int:
        return self.H.size

    def _padded(self, values: np.ndarray):
        d, pad = self.d, 3
        widths = [(pad, pad)] * d + [(0, 0)] * d
        vals = np.pad(values, widths, mode="wrap")
        xs = (np.arange(-pad, self.macro.n + pad)) * self.macro.h
        return tuple([xs] * d + [self.lam_axis] * d), vals

    @cached_property
    def _h_interp(self):
        axes, vals = self._padded(self.H)
        return RegularGridInterpolator(axes, vals, method="cubic", solver_args=_SPLINE_SOLVER)

    @cached_property
    def _b_interp(self):
        out = []
        for i in range(self.d):
            axes, vals = self._padded(self.b[i])
            out.append(RegularGridInterpolator(axes, vals, method="cubic", solver_args=_SPLINE_SOLVER))
        return out

    def _points(self, x, lam):
        d = self.d
        x = np.asarray(x, dtype=float).reshape(d, -1) % 1.0
        lam = np.asarray(lam, dtype=float).reshape(d, -1)
        lo, hi = self.box
        tol = 1e-12 * max(1.0, hi)
        bad = np.any((lam < lo - tol) | (lam > hi + tol), axis=0)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise OutOfTableRange(lam[:, k].tolist(), self.box)
        lam = np.clip(lam, lo, hi)
        x, lam = np.broadcast_arrays(x, lam)
        return np.concatenate([x, lam]).T

    def evaluate(self, x, lam, derivative: str = "flux"):
        """Interpolated ``(H~, D_Lambda H~)`` at columns of ``x`` and ``lam`` (each ``(d, N)``).

        ``derivative="flux"`` interpolates the stored b~; ``"spline"``
        differentiates the H~ interpolant, which keeps value and gradient
        exactly consistent.
        """
        pts = self._points(x, lam)
        d = self.d
        H = self._h_interp(pts)
        if derivative == "flux":
            b = np.stack([f(pts) for f in self._b_interp])
        elif derivative == "spline":
            b = np.empty((d, pts.shape[0]))
            for i in range(d):
                nu = [0] * (2 * d)
                nu[d + i] = 1
                b[i] = self._h_interp(pts, nu=nu)
        else:
            raise ValueError(f"unknown derivative mode {derivative!r}")
        return H, b

    # -- serialization -----------------------------------------------------

    def header(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "d": self.d,
            "macro_n": self.macro.n,
            "micro_n": self.micro_n,
            "lam_max": self.lam_max,
            "dlam": self.dlam,
            "n_lam": int(self.lam_axis.size),
            "potential": self.potential,
            "columns": ["flat_index", "H"] + [f"b{i + 1}" for i in range(self.d)],
        }

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>.json`` (header) and ``<path>.csv`` (flattened lattice, C order)."""
        path = Path(path)
        jpath, cpath = path.with_suffix(".json"), path.with_suffix(".csv")
        jpath.write_text(json.dumps(self.header(), indent=2, sort_keys=True))
        cols = [np.arange(self.H.size), self.H.reshape(-1)] + [self.b[i].reshape(-1) for i in range(self.d)]
        data = np.column_stack(cols)
        np.savetxt(cpath, data, delimiter=",", header=",".join(self.header()["columns"]), comments="",
                   fmt=["%d"] + ["%.17e"] * (1 + self.d))
        return jpath, cpath

    @classmethod
    def load(cls, path) -> "EffectiveHamiltonianTable":
        path = Path(path)
        head = json.loads(path.with_suffix(".json").read_text())
        if head.get("format") != TABLE_FORMAT or head.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported table format {head.get('format')!r} v{head.get('version')}")
        d = head["d"]
        macro = TorusGrid(d, head["macro_n"])
        lam_axis = lam_lattice(head["lam_max"], head["dlam"])
        shape = macro.shape + (lam_axis.size,) * d
        data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        H = data[:, 1].reshape(shape)
        b = np.stack([data[:, 2 + i].reshape(shape) for i in range(d)])
        return cls(macro, lam_axis, H, b, head["micro_n"], head.get("potential", {}))


def tabulate_Heff(
    V: PotentialSpec,
    macro: TorusGrid,
    lam_max: float,
    dlam: float,
    micro: TorusGrid,
    tol: float = 1e-10,
    method: str = "auto",
    workers: int = 1,
) -> EffectiveHamiltonianTable:
    """Solve the cell problem at every (macro node, Lambda lattice point).

    With d = 1 or a separable V the surface is assembled from per-axis 1D
    solves (H~ is a sum over axes); otherwise every lattice point is a
    variational cell solve.
    """
    d = V.d
    if macro.d != d:
        raise ValueError("macro grid dimension must match the potential")
    lam_axis = lam_lattice(lam_max, dlam)
    nl = lam_axis.size
    xs = macro.nodes.reshape(d, -1).T
    fast = method == "current" or (method == "auto" and (d == 1 or V.separable))
    H = np.empty((xs.shape[0],) + (nl,) * d)
    b = np.empty((d, xs.shape[0]) + (nl,) * d)

    def run_node(k):
        x = xs[k]
        try:
            if fast:
                _axis_terms(V)
                h_axes, b_axes = [], []
                for i in range(d):
                    v = _term_samples(V, i, x, micro.n) if d > 1 else sample_cell(V, x, TorusGrid(1, micro.n))
                    hv, bv = np.empty(nl), np.empty(nl)
                    for a, lam in enumerate(lam_axis):
                        j, h, _ = solve_current(v, 1.0 / micro.n, lam)
                        hv[a], bv[a] = h, j
                    h_axes.append(hv)
                    b_axes.append(bv)
                total = np.zeros((nl,) * d)
                for i in range(d):
                    shape = [1] * d
                    shape[i] = nl
                    total = total + h_axes[i].reshape(shape)
                    b[i, k] = np.broadcast_to(b_axes[i].reshape(shape), (nl,) * d)
                H[k] = total
            else:
                init = None
                for idx in np.ndindex(*((nl,) * d)):
                    lam = lam_axis[list(idx)]
                    s = solve_cell(V, x, lam, micro, tol=tol, init=init)
                    H[(k,) + idx] = s.H
                    b[(slice(None), k) + idx] = s.b
        except SolverError as exc:
            exc.args = (f"{exc} (cell at x={x.tolist()})",)
            exc.x = x.tolist()
            raise

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_node, range(xs.shape[0])))
    else:
        for k in range(xs.shape[0]):
            run_node(k)
    shape = macro.shape + (nl,) * d
    return EffectiveHamiltonianTable(macro, lam_axis, H.reshape(shape), b.reshape((d,) + shape), micro.n, V.to_config())


def eval_Heff(table: EffectiveHamiltonianTable, x, lam, derivative: str = "flux"):
    """Interpolated H~ and D_Lambda H~ at one point (x, Lambda)."""
    H, b = table.evaluate(np.asarray(x, dtype=float).reshape(table.d, 1), np.asarray(lam, dtype=float).reshape(table.d, 1), derivative)
    return float(H[0]), b[:, 0]


def lambda_hessians(H: np.ndarray, d: int, dl: float):
    """Finite-difference Lambda-Hessians at interior lattice points, shape ``(..., d, d)``."""
    nd = H.ndim
    lam_axes = list(range(nd - d, nd))
    inner = tuple([slice(None)] * (nd - d) + [slice(1, -1)] * d)
    hess = np.empty(H[inner].shape + (d, d))

    def shifted(offsets):
        sl = [slice(None)] * (nd - d)
        for ax, o in zip(lam_axes, offsets):
            sl.append(slice(1 + o, H.shape[ax] - 1 + o))
        return H[tuple(sl)]

    for i in range(d):
        e = [0] * d
        e[i] = 1
        hess[..., i, i] = (shifted(e) - 2 * shifted([0] * d) + shifted([-v for v in e])) / dl**2
        for j in range(i + 1, d):
            pp = [0] * d
            pp[i] = pp[j] = 1
            pm = list(pp)
            pm[j] = -1
            mp = [-v for v in pm]
            mm = [-v for v in pp]
            val = (shifted(pp) - shifted(pm) - shifted(mp) + shifted(mm)) / (4 * dl**2)
            hess[..., i, j] = hess[..., j, i] = val
    return hess


def verify_Heff_properties(table: EffectiveHamiltonianTable, bounds: PotentialBounds | None = None, slack: float = 1e-2) -> dict:
    """Finite-difference surrogates for the derivative bounds and convexity of H~."""
    d = table.d
    nl = table.lam_axis.size
    if nl < 5 or table.macro.n < 5:
        raise ValueError("need at least 5 points per axis")
    H, dl = table.H, table.dlam
    # periodic central differences in x
    dx = max(
        float(np.max(np.abs(np.roll(H, -1, axis=i) - np.roll(H, 1, axis=i)))) / (2 * table.macro.h) for i in range(d)
    )
    lam_mesh = np.meshgrid(*([table.lam_axis] * d), indexing="ij")
    lam_norm = np.sqrt(sum(l**2 for l in lam_mesh))
    grad_ratio = float(np.max(np.sqrt(np.sum(table.b**2, axis=0)) / (1.0 + lam_norm)))
    hess = lambda_hessians(H, d, dl)
    eig = np.linalg.eigvalsh(hess)
    min_line = min(float(np.min(hess[..., i, i])) for i in range(d))
    report = {
        "max_abs_dH_dx": dx,
        "max_grad_ratio": grad_ratio,
        "min_hessian_eig": float(np.min(eig)),
        "max_abs_hessian": float(np.max(np.abs(hess))),
        "min_line_second_difference": min_line,
        "line_convex": min_line >= -1e-6,
        "convex": float(np.min(eig)) > 0.0,
    }
    if bounds is not None:
        half = 0.5 * lam_norm**2
        excess = H - half
        report["coercivity"] = BoundCheck(
            "coercivity_excess", float(np.min(excess)), bounds.vmin, bounds.vmax, slack
        ).to_dict() | {"max": float(np.max(excess))}
        report["coercivity"]["passed"] = bool(
            np.min(excess) >= bounds.vmin - slack and np.max(excess) <= bounds.vmax + slack
        )
    return report
