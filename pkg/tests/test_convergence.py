import numpy as np
import pytest

from mfghomog.convergence import (
    DEFAULT_BATTERY,
    ConvergenceConfig,
    compute_limit,
    expansion_residual,
    parse_test_function,
    run_convergence_study,
    two_scale_test_integral,
)
from mfghomog.errors import GridIncommensurate
from mfghomog.oned import sample_two_scale, solve_eps_1d, solve_limit_1d
from mfghomog.potential import parse_potential
from mfghomog.torus import ScalarField, TorusGrid


def test_test_integral_trivial():
    g = TorusGrid(1, 128)
    one = ScalarField(g, np.ones(128))
    assert abs(two_scale_test_integral(one, parse_test_function("cos(2*pi*y1)", 1), "1/8")) <= 1e-12
    assert two_scale_test_integral(one, parse_test_function("1", 1), "1/8") == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(GridIncommensurate):
        two_scale_test_integral(one, parse_test_function("1", 1), "1/3")


def test_density_weak_limit(xdep_potential):
    psi = parse_test_function("cos(2*pi*x1)*cos(2*pi*y1)", 1)
    lim = solve_limit_1d(xdep_potential, 1.0, TorusGrid(1, 64), TorusGrid(1, 128))
    ref = float(np.sum(lim.m * sample_two_scale(psi, lim.macro, lim.micro))) * lim.macro.weight * lim.micro.weight
    prof = solve_eps_1d(xdep_potential, 1.0, "1/16", TorusGrid(1, 256))
    assert abs(two_scale_test_integral(prof.m, psi, "1/16") - ref) <= 1e-10
    assert abs(ref) > 1e-2  # the comparison is not vacuous


def test_zero_potential_sweep():
    cfg = ConvergenceConfig(parse_potential("0", 1), [1.5], ["1/4", "1/8"], macro_n=16, micro_n=32)
    rep = run_convergence_study(cfg)
    for row in rep.rows:
        gaps = [row[k] for k in row if k.endswith("_gap") or k.startswith("test_gap") or k.startswith("expansion")]
        assert max(gaps) <= 1e-10
        assert row["bounds_passed"]


def test_expansion_zero_potential():
    V = parse_potential(["0", "0"], 2)
    tss = compute_limit(ConvergenceConfig(V, [1.0, 2.0], ["1/2"], macro_n=8, micro_n=16))
    hj, tr = expansion_residual(tss, "1/2", V)
    assert hj <= 1e-10 and tr <= 1e-10


def test_expansion_requires_commensurate_micro(xdep_potential):
    tss = compute_limit(ConvergenceConfig(xdep_potential, [1.0], ["1/4"], macro_n=16, micro_n=24))
    with pytest.raises(GridIncommensurate):
        expansion_residual(tss, "1/4", xdep_potential)


def test_config_validation(cos_potential):
    with pytest.raises(ValueError):
        ConvergenceConfig(cos_potential, [1.0], ["1/8", "1/4"])
    with pytest.raises(GridIncommensurate):
        ConvergenceConfig(cos_potential, [1.0], ["2/5"])


def test_report_shape_and_export(xdep_potential):
    cfg = ConvergenceConfig(xdep_potential, [1.0], ["1/4", "1/8"], macro_n=32, micro_n=64, workers=2)
    rep = run_convergence_study(cfg)
    assert len(rep.test_gap_names()) == len(DEFAULT_BATTERY) == 6
    assert all(np.isfinite(rep.series(k)).all() for k in rep.METRICS)
    assert rep.strictly_decreasing("u_sup_gap")
    csv = rep.to_csv().splitlines()
    assert len(csv) == 3 and csv[0].startswith("eps,n,hbar_eps")
    assert rep.to_dict()["eps"] == ["1/4", "1/8"]
    assert all(r["bounds_passed"] for r in rep.rows)


def test_x_independent_energy_gap_is_flat(cos_potential):
    # for V = V(y) and integer 1/eps, H_eps equals H exactly: the gap sits at roundoff
    rep = run_convergence_study(ConvergenceConfig(cos_potential, [1.0], ["1/4", "1/8"], macro_n=16, micro_n=64))
    assert np.max(rep.series("hbar_gap")) <= 1e-13
