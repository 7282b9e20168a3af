import numpy as np
import pytest

from mfghomog.cell import tabulate_Heff
from mfghomog.eps_solver import EpsProblem, solve_eps
from mfghomog.homog import (
    OnTheFlyProvider,
    TableProvider,
    reconstruct_two_scale,
    residuals_two_scale,
    solve_homog,
)
from mfghomog.oned import cell_1d, solve_limit_1d
from mfghomog.potential import parse_potential
from mfghomog.torus import TorusGrid
from mfghomog.variational import random_init

MACRO, MICRO = TorusGrid(1, 32), TorusGrid(1, 64)


def _solve(V, P, macro=MACRO, micro=MICRO, **kw):
    prov = OnTheFlyProvider(V, macro, micro)
    return prov, solve_homog(prov, P, macro, **kw)


@pytest.mark.parametrize("d,P", [(1, [1.5]), (2, [1.0, 0.5])])
def test_zero_potential(d, P):
    V = parse_potential("0" if d == 1 else ["0", "0"], d)
    prov, hs = _solve(V, P, TorusGrid(d, 16), TorusGrid(d, 16))
    assert np.max(np.abs(hs.u0.values)) <= 1e-12 and np.max(np.abs(hs.m0.values - 1)) <= 1e-12
    assert hs.Hbar == pytest.approx(0.5 * np.dot(P, P), abs=1e-12)
    tss = reconstruct_two_scale(hs, prov)
    assert np.max(np.abs(tss.u1)) <= 1e-12 and np.max(np.abs(tss.m - 1)) <= 1e-12
    r = residuals_two_scale(tss, V)
    assert max(r.hj, r.transport, r.extra["micro_transport"]) <= 1e-10


def test_x_independent(cos_potential):
    prov, hs = _solve(cos_potential, [1.0])
    c = cell_1d(lambda y: 0.5 * np.cos(2 * np.pi * y), 1.0, MICRO)
    assert np.max(np.abs(hs.u0.values)) <= 1e-12
    assert hs.Hbar == pytest.approx(c.H, abs=1e-12)
    tss = reconstruct_two_scale(hs, prov)
    lim = solve_limit_1d(cos_potential, 1.0, MACRO, MICRO)
    u1 = tss.u1 - tss.u1.mean(axis=1, keepdims=True)
    assert np.max(np.abs(u1 - (lim.u1 - lim.u1.mean(axis=1, keepdims=True)))) <= 1e-6
    assert residuals_two_scale(tss, cos_potential).transport <= 1e-8


def test_matches_limit_oracle(xdep_potential):
    prov, hs = _solve(xdep_potential, [1.0])
    lim = solve_limit_1d(xdep_potential, 1.0, MACRO, MICRO)
    assert abs(hs.Hbar - lim.Hbar) <= 1e-6
    assert np.max(np.abs(hs.u0.values - lim.u0.values)) <= 1e-7
    assert abs(np.sum(hs.m0.values) * MACRO.weight - 1) <= 1e-9
    assert abs(np.mean(hs.u0.values)) <= 1e-12
    tss = reconstruct_two_scale(hs, prov)
    assert tss.energy_gap <= 1e-8
    assert abs(np.log(tss.I_bar) - hs.Hbar) <= 1e-8
    assert abs(tss.total_mass() - 1) <= 1e-8
    assert np.allclose(tss.cell_density.mean(axis=1), 1.0, atol=1e-12)
    r = residuals_two_scale(tss, xdep_potential)
    assert r.hj <= 1e-10 and r.extra["micro_transport"] <= 1e-7


def test_uniqueness(xdep_potential):
    _, a = _solve(xdep_potential, [0.6])
    _, b = _solve(xdep_potential, [0.6], init=random_init(MACRO, 5))
    assert np.max(np.abs(a.u0.values - b.u0.values)) <= 1e-7
    assert abs(a.Hbar - b.Hbar) <= 1e-9


def test_micro_constant_potential_reduces_to_macro_problem():
    W = parse_potential("0.4*cos(2*pi*x1)", 1)
    _, hs = _solve(W, [0.8], TorusGrid(1, 64))
    # a potential with no y-dependence is the unscaled problem at eps = 1
    s = solve_eps(EpsProblem.build(W, [0.8], "1/1", 64))
    assert abs(hs.Hbar - s.Hbar) <= 1e-7
    assert np.max(np.abs(hs.u0.values - s.u.values)) <= 1e-7


def test_separable_2d(separable_2d_xdep):
    macro, micro = TorusGrid(2, 16), TorusGrid(2, 32)
    prov, hs = _solve(separable_2d_xdep, [1.0, 0.0], macro, micro)
    tss = reconstruct_two_scale(hs, prov)
    assert tss.energy_gap <= 1e-8
    # H splits along axes: each axis solves its own 1D limit problem
    a = solve_limit_1d(parse_potential("0.2*cos(2*pi*x1) + 0.3*cos(2*pi*y1)", 1), 1.0, TorusGrid(1, 16), TorusGrid(1, 32))
    b = solve_limit_1d(parse_potential("0.3*cos(2*pi*y1) + 0.1*sin(2*pi*x1)", 1), 0.0, TorusGrid(1, 16), TorusGrid(1, 32))
    assert hs.Hbar == pytest.approx(a.Hbar + b.Hbar, abs=1e-9)


def test_table_provider_agrees(xdep_potential):
    table = tabulate_Heff(xdep_potential, MACRO, 3.0, 0.125, MICRO)
    prov = TableProvider(table, xdep_potential, MICRO)
    hs = solve_homog(prov, [1.0])
    _, ref = _solve(xdep_potential, [1.0])
    assert abs(hs.Hbar - ref.Hbar) <= 1e-5
    assert np.max(np.abs(hs.u0.values - ref.u0.values)) <= 1e-4


def test_memo_counts(xdep_potential):
    prov = OnTheFlyProvider(xdep_potential, MACRO, MICRO)
    lam = np.ones((1, 32))
    prov.evaluate(lam)
    prov.evaluate(lam)
    assert prov.solves == 32
