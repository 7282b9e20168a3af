import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfghomog.errors import DimensionError, PeriodicityViolation, PotentialError, PotentialSyntaxError
from mfghomog.potential import (
    eval_potential,
    from_config,
    parse_expression,
    parse_potential,
    potential_bounds,
    sample_cell,
    sample_oscillating,
    to_text,
)
from mfghomog.torus import TorusGrid


def test_examples():
    V = parse_potential("0.5*cos(2*pi*y1)", 1)
    assert float(V(np.array([[0.3]]), np.array([[0.0]]))[0]) == pytest.approx(0.5)
    assert abs(float(V(np.array([[0.3]]), np.array([[0.25]]))[0])) < 1e-15
    assert parse_potential("cos(2*pi*x1)*sin(2*pi*y1)", 1).depends_on_x()
    assert float(parse_potential("0", 1)(np.zeros((1, 1)), np.ones((1, 1)))[0]) == 0.0


@pytest.mark.parametrize("text", ["y1", "exp(y1)", "cos(y1)", "sin(2*pi*y1*y1)", "cos(2*pi*0.5*y1)", "0.3*cos(2*pi*(x1+y1))"])
def test_periodicity_violation(text):
    with pytest.raises(PeriodicityViolation):
        parse_potential(text, 1)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        parse_potential("x2", 1)
    with pytest.raises(DimensionError):
        parse_potential(["cos(2*pi*y2)", "0"], 2, kind="separable")
    with pytest.raises(PotentialError):
        parse_potential(["0"], 2, kind="separable")


@pytest.mark.parametrize("text,pos", [("cos(2*pi*y1", 3), ("1 +", 3), ("2**3", 0), ("foo(1)", 0), ("z1", 0)])
def test_syntax_errors_have_position(text, pos):
    with pytest.raises(PotentialSyntaxError) as info:
        parse_potential(text, 1)
    assert info.value.position == pos
    assert info.value.expected


def test_bounds_examples():
    assert potential_bounds(parse_potential("0", 1)) == pytest.approx(potential_bounds(parse_potential("0", 1)))
    b = potential_bounds(parse_potential("0", 1))
    assert (b.vmin, b.vmax) == (0.0, 0.0)
    b = potential_bounds(parse_potential("0.5*cos(2*pi*y1)", 1))
    assert abs(b.vmin + 0.5) < 1e-3 and abs(b.vmax - 0.5) < 1e-3
    b = potential_bounds(parse_potential(["cos(2*pi*x1)+cos(2*pi*y1)"], 1, kind="separable"))
    assert abs(b.vmin + 2) < 1e-3 and abs(b.vmax - 2) < 1e-3
    with pytest.raises(PotentialError):
        potential_bounds(parse_potential("0", 1), samples=10)


def test_periodic_in_y_random_points():
    V = parse_potential("0.4*cos(2*pi*x1 + 4*pi*y1)*sin(2*pi*y2) + exp(0.3*sin(2*pi*y2))", 2)
    rng = np.random.default_rng(0)
    x = rng.random((2, 1000))
    y = rng.normal(size=(2, 1000)) * 5
    for i in range(2):
        e = np.zeros((2, 1))
        e[i] = 1.0
        assert np.max(np.abs(V(x, y) - V(x, y + e))) <= 1e-12


def test_separable_is_sum_of_terms():
    V = parse_potential(["0.2*cos(2*pi*x1)+0.3*cos(2*pi*y1)", "0.3*cos(2*pi*y2)*cos(2*pi*x2)"], 2)
    rng = np.random.default_rng(1)
    x, y = rng.random((2, 2, 200))
    total = V.term(0)(x, y) + V.term(1)(x, y)
    assert np.max(np.abs(V(x, y) - total)) <= 1e-12


def test_with_offset_and_config_roundtrip():
    V = parse_potential("0.5*cos(2*pi*y1)", 1)
    x, y = np.zeros((1, 5)), np.linspace(0, 1, 5)[None]
    assert np.allclose(V.with_offset(-0.7)(x, y), V(x, y) - 0.7)
    W = from_config(V.to_config())
    assert np.allclose(W(x, y), V(x, y))


def test_sampling_helpers():
    V = parse_potential("cos(2*pi*x1) + 0.5*cos(2*pi*y1)", 1)
    g = TorusGrid(1, 32)
    v = sample_oscillating(V, g, 4)
    x = g.axis_nodes
    assert np.allclose(v, np.cos(2 * np.pi * x) + 0.5 * np.cos(8 * np.pi * x), atol=1e-14)
    c = sample_cell(V, [0.25], g)
    assert np.allclose(c, np.cos(np.pi / 2) + 0.5 * np.cos(2 * np.pi * x), atol=1e-14)


_leaf = st.one_of(
    st.floats(-5, 5, allow_nan=False).map(lambda v: repr(round(v, 3))),
    st.sampled_from(["pi", "x1", "x2"]),
)


def _expr(depth):
    if depth == 0:
        return _leaf
    sub = _expr(depth - 1)
    return st.one_of(
        _leaf,
        st.tuples(sub, st.sampled_from(["+", "-", "*"]), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
        sub.map(lambda s: f"-{s}"),
    )


@given(_expr(3))
def test_parse_print_roundtrip(text):
    tree = parse_expression(text)
    assert parse_expression(to_text(tree)) == tree
