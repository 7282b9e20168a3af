"""Uniform periodic grids on the unit d-torus and Fourier-collocation calculus.

Scalar fields are stored as arrays of shape ``(n,) * d`` (``indexing="ij"``)
and vector fields as ``(d,) + (n,) * d``.  The array-level helpers at the
bottom of the module act along arbitrary axes, so the same code handles
single-scale fields and two-scale lattices (macro axes followed by micro axes).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError, NonFiniteField, OddGridSize

MAX_DIM = 3
MIN_POINTS = 8


@dataclass(frozen=True)
class TorusGrid:
    d: int
    n: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or not 1 <= self.d <= MAX_DIM:
            raise GridError(f"dimension must be 1..{MAX_DIM}, got {self.d}")
        if not isinstance(self.n, (int, np.integer)):
            raise GridError(f"points per axis must be an integer, got {self.n!r}")
        if self.n % 2:
            raise OddGridSize(f"points per axis must be even, got {self.n}")
        if self.n < MIN_POINTS:
            raise GridError(f"points per axis must be >= {MIN_POINTS}, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def weight(self) -> float:
        """Quadrature weight of a single node, ``h**d``."""
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def axis_nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(d,) + shape``."""
        mesh = np.meshgrid(*([self.axis_nodes] * self.d), indexing="ij")
        out = np.stack(mesh)
        out.setflags(write=False)
        return out

    def points(self) -> np.ndarray:
        """Node coordinates flattened to shape ``(size, d)``."""
        return self.nodes.reshape(self.d, -1).T


def make_grid(d: int, n: int) -> TorusGrid:
    return TorusGrid(d, n)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteField("field contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.shape != self.grid.shape:
            raise GridError(f"expected values of shape {self.grid.shape}, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __add__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        expected = (self.grid.d,) + self.grid.shape
        if arr.shape != expected:
            raise GridError(f"expected values of shape {expected}, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])


def sample(grid: TorusGrid, func) -> ScalarField:
    """Evaluate ``func(*coords)`` on the grid nodes."""
    return ScalarField(grid, np.broadcast_to(func(*grid.nodes), grid.shape))


def integrate(f: ScalarField) -> float:
    """Periodic trapezoidal rule, ``h**d * sum(f)``."""
    if not np.all(np.isfinite(f.values)):
        raise NonFiniteField("cannot integrate a non-finite field")
    return float(np.sum(f.values) * f.grid.weight)


def gradient(u: ScalarField) -> VectorField:
    return VectorField(u.grid, grad_array(u.values, u.grid.d))


def divergence(w: VectorField) -> ScalarField:
    return ScalarField(w.grid, div_array(w.values, w.grid.d))


def project_mean_zero(u: ScalarField) -> ScalarField:
    return ScalarField(u.grid, u.values - np.mean(u.values))


# -- array-level spectral helpers --------------------------------------------


def _ik(n: int) -> np.ndarray:
    """``2*pi*i*k`` for the rfft modes 0..n/2, with the Nyquist entry zeroed."""
    k = np.arange(n // 2 + 1, dtype=float)
    k[-1] = 0.0
    return 2j * np.pi * k


def _along(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def derivative(values: np.ndarray, axis: int) -> np.ndarray:
    """Fourier-collocation derivative of a periodic array along ``axis``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    coef = np.fft.rfft(values, axis=axis)
    coef *= _along(_ik(n), axis, values.ndim)
    return np.fft.irfft(coef, n=n, axis=axis)


def grad_array(values: np.ndarray, d: int, first_axis: int | None = None) -> np.ndarray:
    """Stack of derivatives over ``d`` consecutive axes.

    By default the last ``d`` axes are differentiated; ``first_axis`` selects
    another block (e.g. the macro axes of a two-scale lattice).
    """
    values = np.asarray(values, dtype=float)
    start = values.ndim - d if first_axis is None else first_axis
    return np.stack([derivative(values, start + i) for i in range(d)])


def div_array(values: np.ndarray, d: int, first_axis: int | None = None) -> np.ndarray:
    """Divergence of a stacked vector array (component axis first)."""
    values = np.asarray(values, dtype=float)
    ndim = values.ndim - 1
    start = ndim - d if first_axis is None else first_axis
    return sum(derivative(values[i], start + i) for i in range(d))


def _wavenumber_mesh(n: int, d: int) -> list[np.ndarray]:
    k = np.fft.fftfreq(n, 1.0 / n)
    return np.meshgrid(*([k] * d), indexing="ij", sparse=True)


def null_mode_mask(n: int, d: int) -> np.ndarray:
    """Fourier modes invisible to the collocation gradient.

    These are the modes whose every wavenumber is 0 or the Nyquist frequency
    (the mean plus ``2**d - 1`` checkerboard modes).
    """
    mesh = _wavenumber_mesh(n, d)
    mask = np.ones((n,) * d, dtype=bool)
    for k in mesh:
        mask = mask & ((k == 0) | (np.abs(k) == n // 2))
    return mask


def remove_null_modes(values: np.ndarray, d: int) -> np.ndarray:
    """Project onto the range of the collocation divergence (mean-zero, no checkerboard)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    axes = tuple(range(values.ndim - d, values.ndim))
    coef = np.fft.fftn(values, axes=axes)
    coef[..., null_mode_mask(n, d)] = 0.0
    return np.fft.ifftn(coef, axes=axes).real


def inverse_laplacian(values: np.ndarray, d: int) -> np.ndarray:
    """Solve ``-lap(u) = f`` for the modes the gradient sees; null modes map to 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    axes = tuple(range(values.ndim - d, values.ndim))
    mesh = _wavenumber_mesh(n, d)
    null = null_mode_mask(n, d)
    # symbol of -div(grad) with the Nyquist derivative zeroed
    sym = sum((2 * np.pi * np.where(np.abs(k) == n // 2, 0.0, k)) ** 2 for k in mesh)
    sym = np.where(null, 1.0, sym)
    coef = np.fft.fftn(values, axes=axes) / sym
    coef[..., null] = 0.0
    return np.fft.ifftn(coef, axes=axes).real


def antiderivative(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Mean-zero periodic antiderivative along ``axis``.

    The input's mean along ``axis`` (and its Nyquist mode) is discarded; the
    collocation derivative of the result returns the input minus those parts.
    """
    values = np.asarray(values, dtype=float)
    axis = axis % values.ndim
    n = values.shape[axis]
    ik = _ik(n)
    inv = np.zeros_like(ik)
    inv[1:-1] = 1.0 / ik[1:-1]
    coef = np.fft.rfft(values, axis=axis) * _along(inv, axis, values.ndim)
    return np.fft.irfft(coef, n=n, axis=axis)


def resample(values: np.ndarray, n_new: int, axes) -> np.ndarray:
    """Trigonometric interpolation of a periodic array onto ``n_new`` points per axis."""
    out = np.asarray(values, dtype=float)
    for axis in axes:
        n = out.shape[axis]
        if n == n_new:
            continue
        coef = np.fft.rfft(out, axis=axis)
        m = min(n, n_new) // 2
        new = np.zeros(out.shape[:axis] + (n_new // 2 + 1,) + out.shape[axis + 1:], dtype=complex)
        idx = [slice(None)] * out.ndim
        idx[axis] = slice(0, m)
        new[tuple(idx)] = coef[tuple(idx)]
        # split the old Nyquist coefficient evenly when upsampling
        if n_new > n:
            nyq = [slice(None)] * out.ndim
            nyq[axis] = slice(n // 2, n // 2 + 1)
            new[tuple(nyq)] = 0.5 * coef[tuple(nyq)]
        out = np.fft.irfft(new, n=n_new, axis=axis) * (n_new / n)
    return out
