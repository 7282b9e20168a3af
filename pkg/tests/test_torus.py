import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfghomog.errors import GridError, NonFiniteField, OddGridSize
from mfghomog.torus import (
    ScalarField,
    TorusGrid,
    antiderivative,
    derivative,
    div_array,
    grad_array,
    integrate,
    inverse_laplacian,
    null_mode_mask,
    project_mean_zero,
    remove_null_modes,
    resample,
    sample,
)


def test_grid_validation():
    with pytest.raises(OddGridSize):
        TorusGrid(1, 33)
    with pytest.raises(GridError):
        TorusGrid(4, 16)
    with pytest.raises(GridError):
        TorusGrid(1, 6)
    g = TorusGrid(2, 16)
    assert g.shape == (16, 16) and g.size == 256
    assert g.weight == pytest.approx(1 / 256)
    assert g.nodes.shape == (2, 16, 16)
    assert g.points().shape == (256, 2)


def test_field_rejects_nonfinite():
    g = TorusGrid(1, 8)
    with pytest.raises(NonFiniteField):
        ScalarField(g, np.full(8, np.nan))
    with pytest.raises(GridError):
        ScalarField(g, np.zeros(9))


def test_integrate_trig_exact():
    g = TorusGrid(2, 16)
    f = sample(g, lambda x, y: 1 + np.cos(2 * np.pi * x) * np.sin(4 * np.pi * y))
    assert integrate(f) == pytest.approx(1.0, abs=1e-15)


@given(st.integers(1, 7), st.floats(-2, 2), st.floats(0, 1))
def test_derivative_of_trig_mode(k, amp, phase):
    g = TorusGrid(1, 16)
    x = g.axis_nodes
    u = amp * np.sin(2 * np.pi * (k * x + phase))
    du = derivative(u, 0)
    assert np.max(np.abs(du - 2 * np.pi * k * amp * np.cos(2 * np.pi * (k * x + phase)))) <= 1e-11 * (1 + abs(amp) * k)


def test_gradient_and_divergence_2d():
    g = TorusGrid(2, 32)
    x, y = g.nodes
    u = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    gu = grad_array(u, 2)
    assert np.allclose(gu[0], 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y), atol=1e-11)
    lap = div_array(gu, 2)
    assert np.allclose(lap, -8 * np.pi**2 * u, atol=1e-10)
    assert np.allclose(inverse_laplacian(-lap, 2), u, atol=1e-12)


def test_null_modes():
    mask = null_mode_mask(8, 2)
    assert mask.sum() == 4  # mean plus 2^d - 1 checkerboard modes
    g = TorusGrid(2, 8)
    i, j = np.indices(g.shape)
    checker = (-1.0) ** i + 3.0
    assert np.max(np.abs(grad_array(checker, 2))) < 1e-12
    assert np.max(np.abs(remove_null_modes(checker, 2))) < 1e-12


def test_antiderivative_roundtrip():
    g = TorusGrid(1, 64)
    f = np.cos(2 * np.pi * g.axis_nodes) + 0.3 * np.sin(6 * np.pi * g.axis_nodes)
    F = antiderivative(f)
    assert abs(np.mean(F)) < 1e-15
    assert np.allclose(derivative(F, 0), f, atol=1e-12)


def test_antiderivative_along_axis():
    a = np.outer(np.arange(3.0), np.cos(2 * np.pi * np.arange(16) / 16))
    F = antiderivative(a, axis=1)
    assert np.allclose(derivative(F, 1), a, atol=1e-12)


@pytest.mark.parametrize("n_new", [8, 32, 64])
def test_resample_band_limited(n_new):
    x = np.arange(16) / 16
    f = 1 + np.cos(2 * np.pi * x) + 0.2 * np.sin(6 * np.pi * x)
    xn = np.arange(n_new) / n_new
    ref = 1 + np.cos(2 * np.pi * xn) + 0.2 * np.sin(6 * np.pi * xn)
    assert np.allclose(resample(f, n_new, axes=[0]), ref, atol=1e-13)


def test_project_mean_zero_and_arithmetic():
    g = TorusGrid(1, 8)
    u = ScalarField(g, np.arange(8.0))
    v = project_mean_zero(u)
    assert abs(integrate(v)) < 1e-15
    assert np.allclose((2 * v - v + v * 0).values, v.values)
    assert v.sup_norm() == pytest.approx(3.5)
