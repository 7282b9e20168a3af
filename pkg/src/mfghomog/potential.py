"""Smooth potentials V(x, y), 1-periodic in every micro variable y_i.

Expressions are written in a small grammar::

    expr := number | x<i> | y<i> | pi | (expr) | -expr
          | expr (+|-|*) expr | sin(expr) | cos(expr) | exp(expr)

Python's own tokenizer/parser does the heavy lifting (``ast.parse``); the
resulting tree is validated and converted to the immutable node classes below.
A micro variable ``y<i>`` may only occur as a phase ``2*pi*k*y<i>`` (k a
nonzero integer) added into the argument of ``sin``/``cos``, which makes
every accepted expression periodic in y by construction.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import optimize

from .errors import DimensionError, PeriodicityViolation, PotentialError, PotentialSyntaxError
from .torus import TorusGrid

FUNCS = ("sin", "cos", "exp")
_EXPECTED = ("number", "x<i>", "y<i>", "pi", "(", "-", "sin(", "cos(", "exp(")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # "+", "-", "*"
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Pi, Var, Neg, BinOp, Call]

_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*"}
_PREC = {"+": 1, "-": 1, "*": 2}


def _convert(node: ast.AST, text: str) -> Node:
    pos = getattr(node, "col_offset", None)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return Num(float(node.value))
    if isinstance(node, ast.Name):
        name = node.id
        if name == "pi":
            return Pi()
        if len(name) >= 2 and name[0] in "xy" and name[1:].isdigit():
            return Var(name[0], int(name[1:]))
        raise PotentialSyntaxError(f"unknown name {name!r}", pos, ("x<i>", "y<i>", "pi"))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return Neg(_convert(node.operand, text))
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, text)
        raise PotentialSyntaxError("unsupported unary operator", pos, ("-",))
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise PotentialSyntaxError("unsupported binary operator", pos, ("+", "-", "*"))
        return BinOp(op, _convert(node.left, text), _convert(node.right, text))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCS:
            raise PotentialSyntaxError("unknown function", pos, tuple(f + "(" for f in FUNCS))
        if len(node.args) != 1 or node.keywords:
            raise PotentialSyntaxError(f"{node.func.id} takes exactly one argument", pos)
        return Call(node.func.id, _convert(node.args[0], text))
    raise PotentialSyntaxError(f"unsupported syntax {type(node).__name__}", pos, _EXPECTED)


def parse_expression(text: str) -> Node:
    """Parse one expression of the grammar into a node tree (no semantic checks)."""
    if not isinstance(text, str) or not text.strip():
        raise PotentialSyntaxError("empty expression", 0, _EXPECTED)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        # offsets <= 0 come from errors at end of input
        pos = len(text.strip()) if not exc.offset or exc.offset <= 0 else exc.offset - 1
        raise PotentialSyntaxError(exc.msg, pos, _EXPECTED) from None
    return _convert(tree.body, text)


def to_text(node: Node, parent_prec: int = 0, right: bool = False) -> str:
    """Print a node tree; ``parse_expression(to_text(t)) == t``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        s = "-" + to_text(node.operand, 3)
        return f"({s})" if parent_prec >= 2 else s
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    prec = _PREC[node.op]
    s = f"{to_text(node.left, prec)} {node.op} {to_text(node.right, prec, True)}"
    if prec < parent_prec or (right and prec == parent_prec):
        s = f"({s})"
    return s


def variables(node: Node) -> set[Var]:
    if isinstance(node, Var):
        return {node}
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        return variables(node.arg)
    return set()


def _constant_value(node: Node):
    """Numeric value of a variable-free subtree, else None."""
    if variables(node):
        return None
    return float(evaluate(node, np.zeros(1), np.zeros(1)))


def _additive_terms(node: Node, sign: float = 1.0):
    if isinstance(node, BinOp) and node.op in "+-":
        yield from _additive_terms(node.left, sign)
        yield from _additive_terms(node.right, sign if node.op == "+" else -sign)
    elif isinstance(node, Neg):
        yield from _additive_terms(node.operand, -sign)
    else:
        yield sign, node


def _factors(node: Node):
    if isinstance(node, BinOp) and node.op == "*":
        yield from _factors(node.left)
        yield from _factors(node.right)
    elif isinstance(node, Neg):
        yield Num(-1.0)
        yield from _factors(node.operand)
    else:
        yield node


def _is_phase(term: Node) -> bool:
    """True if ``term`` is ``2*pi*k*y_i`` for a nonzero integer k."""
    factors = list(_factors(term))
    ys = [f for f in factors if isinstance(f, Var) and f.kind == "y"]
    if len(ys) != 1:
        return False
    coef = 1.0
    for f in factors:
        if f is ys[0]:
            continue
        value = _constant_value(f)
        if value is None:
            return False
        coef *= value
    k = coef / (2 * math.pi)
    return round(k) != 0 and abs(k - round(k)) <= 1e-9 * max(1.0, abs(k))


def is_periodic(node: Node) -> bool:
    if isinstance(node, Var):
        return node.kind == "x"
    if isinstance(node, (Num, Pi)):
        return True
    if isinstance(node, Neg):
        return is_periodic(node.operand)
    if isinstance(node, BinOp):
        return is_periodic(node.left) and is_periodic(node.right)
    if node.func in ("sin", "cos"):
        return all(is_periodic(t) or _is_phase(t) for _, t in _additive_terms(node.arg))
    return is_periodic(node.arg)


def evaluate(node: Node, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate with ``x[i-1]`` and ``y[i-1]`` bound to ``x<i>``, ``y<i>`` (broadcasting)."""
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Pi):
        return np.float64(math.pi)
    if isinstance(node, Var):
        return (x if node.kind == "x" else y)[node.index - 1]
    if isinstance(node, Neg):
        return -evaluate(node.operand, x, y)
    if isinstance(node, BinOp):
        a = evaluate(node.left, x, y)
        b = evaluate(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        return a * b
    return getattr(np, node.func)(evaluate(node.arg, x, y))


@dataclass(frozen=True)
class PotentialBounds:
    vmin: float
    vmax: float
    samples: int

    def __post_init__(self):
        if not (math.isfinite(self.vmin) and math.isfinite(self.vmax)) or self.vmin > self.vmax:
            raise PotentialError(f"invalid bounds ({self.vmin}, {self.vmax})")

    @property
    def oscillation(self) -> float:
        return self.vmax - self.vmin


@dataclass(frozen=True)
class PotentialSpec:
    d: int
    kind: str
    terms: tuple
    texts: tuple = field(compare=False)

    @property
    def separable(self) -> bool:
        return self.kind == "separable"

    def __call__(self, x, y):
        return eval_potential(self, x, y)

    def term(self, i: int) -> "PotentialSpec":
        """The i-th (0-based) separable term as its own expression spec."""
        return PotentialSpec(self.d, "expression", (self.terms[i],), (self.texts[i],))

    def with_offset(self, c: float) -> "PotentialSpec":
        c = float(c)
        first = BinOp("+", self.terms[0], Num(c)) if c >= 0 else BinOp("-", self.terms[0], Num(-c))
        terms = (first,) + self.terms[1:]
        return PotentialSpec(self.d, self.kind, terms, tuple(to_text(t) for t in terms))

    def depends_on_x(self) -> bool:
        return any(v.kind == "x" for t in self.terms for v in variables(t))

    def to_config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "terms": [to_text(t) for t in self.terms]}


def _check_term(tree: Node, d: int, allowed_y, text: str):
    for v in variables(tree):
        if v.index < 1 or v.index > d:
            raise DimensionError(f"{v.kind}{v.index} in {text!r} exceeds dimension {d}")
        if v.kind == "y" and v.index not in allowed_y:
            raise DimensionError(f"separable term {text!r} may only use y{allowed_y[0]}")
    if not is_periodic(tree):
        raise PeriodicityViolation(
            f"{text!r}: y-variables may only appear as 2*pi*k*y<i> phases inside sin/cos"
        )


def parse_potential(text, d: int, kind: str | None = None) -> PotentialSpec:
    """Build a potential from one expression or a list of per-axis terms.

    A single string (or a one-element list with ``kind="expression"``) gives a
    general expression.  A list of ``d`` strings with ``kind="separable"``
    declares ``V(x, y) = sum_i V_i(x, y_i)``.
    """
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= 3:
        raise DimensionError(f"dimension must be 1..3, got {d}")
    texts = [text] if isinstance(text, str) else list(text)
    if kind is None:
        kind = "separable" if len(texts) > 1 else "expression"
    if kind == "expression":
        if len(texts) != 1:
            raise PotentialError("an expression potential takes exactly one term")
        tree = parse_expression(texts[0])
        _check_term(tree, d, tuple(range(1, d + 1)), texts[0])
        return PotentialSpec(d, kind, (tree,), tuple(texts))
    if kind == "separable":
        if len(texts) != d:
            raise PotentialError(f"separable potential needs {d} terms, got {len(texts)}")
        trees = []
        for i, t in enumerate(texts, start=1):
            tree = parse_expression(t)
            _check_term(tree, d, (i,), t)
            trees.append(tree)
        return PotentialSpec(d, kind, tuple(trees), tuple(texts))
    raise PotentialError(f"unknown potential kind {kind!r}")


def from_config(block: dict) -> PotentialSpec:
    try:
        return parse_potential(block["terms"], int(block["d"]), block.get("kind", "expression"))
    except KeyError as exc:
        raise PotentialError(f"potential block missing key {exc}") from None


def eval_potential(spec: PotentialSpec, x, y) -> np.ndarray:
    """V(x, y) for coordinate arrays with leading axis of length d."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != spec.d or y.shape[0] != spec.d:
        raise DimensionError(f"expected leading axis of length {spec.d}")
    out = sum(evaluate(t, x, y) for t in spec.terms)
    return np.broadcast_to(out, np.broadcast_shapes(x.shape[1:], y.shape[1:])).astype(float)


def sample_oscillating(spec: PotentialSpec, grid: TorusGrid, k: int) -> np.ndarray:
    """V(x, x*k) on the grid nodes, with x*k reduced mod 1 in exact integer arithmetic."""
    idx = np.indices(grid.shape)
    y = ((idx * k) % grid.n) / grid.n
    return eval_potential(spec, grid.nodes, y)


def sample_cell(spec: PotentialSpec, x, micro: TorusGrid) -> np.ndarray:
    """V(x, .) on the micro grid for one frozen macro point x."""
    x = np.asarray(x, dtype=float).reshape((spec.d,) + (1,) * micro.d)
    return eval_potential(spec, np.broadcast_to(x, (spec.d,) + micro.shape), micro.nodes)


def _default_samples(d: int) -> int:
    return max(64**d, min(64 ** (2 * d), 2**22))


def potential_bounds(spec: PotentialSpec, samples: int | None = None, refine: bool = True) -> PotentialBounds:
    """Approximate inf/sup of V over the (x, y) torus.

    Dense uniform lattice followed by local polishing of the best lattice
    points.  Only used to set tolerances of bound checks.
    """
    d = spec.d
    if samples is None:
        samples = _default_samples(d)
    if samples < 64**d:
        raise PotentialError(f"need at least 64**d = {64**d} samples")
    per_axis = max(2, math.ceil(samples ** (1.0 / (2 * d)) - 1e-9))
    axis = np.arange(per_axis) / per_axis
    # lattice over the first (2d - 1) coordinates, last coordinate vectorized
    lo, hi = math.inf, -math.inf
    lo_pt = hi_pt = None
    rest = np.indices((per_axis,) * (2 * d - 1)).reshape(2 * d - 1, -1) if d > 0 else None
    chunk = max(1, 2**20 // per_axis)
    for start in range(0, rest.shape[1], chunk):
        pts = axis[rest[:, start:start + chunk]]  # (2d-1, m)
        m = pts.shape[1]
        full = np.empty((2 * d, m, per_axis))
        full[:-1] = pts[:, :, None]
        full[-1] = axis[None, :]
        vals = eval_potential(spec, full[:d], full[d:])
        imin, imax = np.unravel_index(np.argmin(vals), vals.shape), np.unravel_index(np.argmax(vals), vals.shape)
        if vals[imin] < lo:
            lo, lo_pt = float(vals[imin]), full[(slice(None),) + imin].copy()
        if vals[imax] > hi:
            hi, hi_pt = float(vals[imax]), full[(slice(None),) + imax].copy()
    if refine:
        def f(z, s):
            return s * float(eval_potential(spec, z[:d], z[d:]))

        for s, start in ((1.0, lo_pt), (-1.0, hi_pt)):
            res = optimize.minimize(f, start, args=(s,), method="BFGS", options={"gtol": 1e-10})
            if np.isfinite(res.fun):
                if s > 0:
                    lo = min(lo, float(res.fun))
                else:
                    hi = max(hi, -float(res.fun))
    return PotentialBounds(lo, hi, per_axis ** (2 * d))
