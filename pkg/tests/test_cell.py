import numpy as np
import pytest

from mfghomog.cell import (
    EffectiveHamiltonianTable,
    cell_values,
    default_lam_max,
    eval_Heff,
    flux_vs_fd,
    lam_lattice,
    lambda_hessians,
    solve_cell,
    solve_cell_separable,
    tabulate_Heff,
    verify_cell_bounds,
    verify_Heff_properties,
)
from mfghomog.errors import NotSeparable, OutOfTableRange
from mfghomog.oned import cell_1d
from mfghomog.potential import parse_potential, potential_bounds
from mfghomog.torus import TorusGrid
from oracles import log_bessel_i0

MICRO = TorusGrid(1, 128)


def test_constant_slice():
    V = parse_potential("0.2 + 0.3*cos(2*pi*x1)", 1)
    s = solve_cell(V, [0.0], [1.2], MICRO)
    assert s.H == pytest.approx(0.72 + 0.5, abs=1e-12)
    assert np.max(np.abs(s.w.values)) <= 1e-12 and np.max(np.abs(s.m.values - 1)) <= 1e-12
    assert s.b[0] == pytest.approx(1.2, abs=1e-12)


def test_zero_lambda(cos_potential):
    s = solve_cell(cos_potential, [0.3], [0.0], MICRO)
    assert np.max(np.abs(s.w.values)) <= 1e-14
    assert s.H == pytest.approx(log_bessel_i0(0.5), abs=1e-13)
    assert abs(s.b[0]) <= 1e-14


def test_matches_current_method(cos_potential):
    s = solve_cell(cos_potential, [0.0], [1.0], MICRO)
    o = cell_1d(cos_potential.term(0) if cos_potential.separable else lambda y: 0.5 * np.cos(2 * np.pi * y), 1.0, MICRO)
    assert abs(s.H - o.H) <= 1e-9
    assert np.max(np.abs(s.w.values - o.w.values)) <= 1e-7
    assert s.energy(cos_potential) == pytest.approx(s.H, abs=1e-12)


def test_uniqueness_from_random_init(xdep_potential):
    from mfghomog.variational import random_init

    a = solve_cell(xdep_potential, [0.2], [0.7], MICRO)
    b = solve_cell(xdep_potential, [0.2], [0.7], MICRO, init=random_init(MICRO, 11))
    assert abs(a.H - b.H) <= 1e-9
    assert np.max(np.abs(a.w.values - b.w.values)) <= 1e-7


def test_separable(separable_2d):
    micro = TorusGrid(2, 32)
    s = solve_cell_separable(separable_2d, [0, 0], [1.0, 0.0], micro)
    one = cell_1d(lambda y: 0.3 * np.cos(2 * np.pi * y), 1.0, TorusGrid(1, 32))
    assert s.H == pytest.approx(one.H + log_bessel_i0(0.3), abs=1e-12)
    v = solve_cell(separable_2d, [0, 0], [1.0, 0.0], micro)
    assert abs(v.H - s.H) <= 1e-9
    assert np.allclose(v.b, s.b, atol=1e-8)
    with pytest.raises(NotSeparable):
        solve_cell_separable(parse_potential("cos(2*pi*y1)*cos(2*pi*y2)", 2), [0, 0], [1, 0], micro)


def test_zero_separable_terms():
    V = parse_potential(["0", "0"], 2)
    H, b = cell_values(V, [0, 0], [1.0, -2.0], 16)
    assert H == pytest.approx(2.5, abs=1e-14)
    assert np.allclose(b, [1.0, -2.0], atol=1e-14)


def test_flux_identity(cos_potential):
    r = flux_vs_fd(cos_potential, [0.0], [1.0], MICRO, step=1e-3)
    assert r["max_rel"] <= 1e-4
    r0 = flux_vs_fd(cos_potential, [0.0], [0.0], MICRO, step=1e-3)
    assert abs(r0["b"][0]) <= 1e-8 and abs(r0["fd"][0]) <= 1e-8
    with pytest.raises(ValueError):
        flux_vs_fd(cos_potential, [0.0], [1.0], MICRO, step=0.5)


def test_cell_bounds(xdep_potential):
    bounds = potential_bounds(xdep_potential)
    for lam in (0.0, 1.0, 3.0):
        rep = verify_cell_bounds(solve_cell(xdep_potential, [0.1], [lam], MICRO), bounds)
        assert rep.passed, rep.failures()


def test_lattice_rules():
    assert lam_lattice(1.0, 0.25).size == 9
    with pytest.raises(ValueError):
        lam_lattice(1.0, 0.3)
    b = potential_bounds(parse_potential("0.5*cos(2*pi*y1)", 1))
    assert default_lam_max([1.0], b) == pytest.approx(4.0, abs=1e-6)


@pytest.fixture(scope="module")
def cos_table():
    V = parse_potential("0.5*cos(2*pi*y1)", 1)
    return V, tabulate_Heff(V, TorusGrid(1, 8), 3.0, 0.25, TorusGrid(1, 64))


def test_table_band_symmetry_and_properties(cos_table):
    V, t = cos_table
    lam = t.lam_axis
    excess = t.H - 0.5 * lam**2
    assert np.all(excess >= -0.5 - 1e-12) and np.all(excess <= 0.5 + 1e-12)
    assert np.max(np.abs(t.H - t.H[:, ::-1])) <= 1e-8
    props = verify_Heff_properties(t, potential_bounds(V))
    assert props["max_abs_dH_dx"] <= 1e-8
    assert props["min_line_second_difference"] > 0 and props["convex"]


def test_table_lookup_and_round_trip(cos_table, tmp_path):
    _, t = cos_table
    H, b = eval_Heff(t, [t.macro.h * 3], [t.lam_axis[5]])
    assert H == pytest.approx(t.H[3, 5], abs=1e-13) and b[0] == pytest.approx(t.b[0, 3, 5], abs=1e-13)
    t.save(tmp_path / "tab")
    u = EffectiveHamiltonianTable.load(tmp_path / "tab")
    assert np.array_equal(u.H, t.H) and np.array_equal(u.b, t.b) and np.array_equal(u.lam_axis, t.lam_axis)
    with pytest.raises(OutOfTableRange):
        eval_Heff(t, [0.0], [3.5])


def test_spline_vs_flux_consistency(cos_table):
    _, t = cos_table
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, lam = rng.uniform(0, 1), rng.uniform(-2.5, 2.5)
        h = 1e-4
        fd = (eval_Heff(t, [x], [lam + h])[0] - eval_Heff(t, [x], [lam - h])[0]) / (2 * h)
        assert abs(fd - eval_Heff(t, [x], [lam])[1][0]) <= 5e-3


def test_zero_table_quadratic():
    t = tabulate_Heff(parse_potential(["0", "0"], 2), TorusGrid(2, 8), 2.0, 0.5, TorusGrid(2, 16))
    assert np.max(np.abs(t.H - 0.5 * (t.lam_axis[:, None] ** 2 + t.lam_axis[None, :] ** 2))) <= 1e-14
    H, b = eval_Heff(t, [0.1, 0.7], [0.33, -1.21])
    assert H == pytest.approx(0.5 * (0.33**2 + 1.21**2), abs=1e-8)
    hess = lambda_hessians(t.H, 2, t.dlam)
    assert np.allclose(hess, np.eye(2), atol=1e-10)
