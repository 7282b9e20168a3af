"""Run configuration: JSON schema, validation and hashing.

Example::

    {
      "dimension": 1,
      "P": [1.0],
      "potential": {"kind": "expression", "d": 1, "terms": ["0.5*cos(2*pi*y1)"]},
      "eps": ["1/4", "1/8"],
      "grid": {"n": 256, "macro_n": 64, "micro_n": 128, "points_per_period": 16},
      "solver": {"tol": 1e-10, "max_iter": 1000},
      "cell": {"x": [0.0], "lam": [1.0]},
      "table": {"macro_n": 16, "lam_max": 3.0, "dlam": 0.25},
      "battery": ["cos(2*pi*x1)", "cos(2*pi*x1)*cos(2*pi*y1)"],
      "output": "runs/example"
    }

Only ``dimension``, ``P`` and ``potential`` are required.  ``grid.n`` fixes
the eps-level resolution; when absent it is 16 points per oscillation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridIncommensurate, MFGHomogError
from .oned import eps_to_k
from .potential import PotentialSpec, from_config

TOP_KEYS = {"dimension", "P", "potential", "eps", "grid", "solver", "cell", "table", "battery", "output", "seed"}
GRID_KEYS = {"n", "macro_n", "micro_n", "points_per_period"}
SOLVER_KEYS = {"tol", "max_iter"}
TABLE_KEYS = {"macro_n", "lam_max", "dlam", "path"}
CELL_KEYS = {"x", "lam"}


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form of the configuration."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_eps(text) -> Fraction:
    """"1/k" -> Fraction(1, k); anything else is a configuration error."""
    if not isinstance(text, str) or "/" not in text:
        raise ConfigError(f"eps must be a string '1/k', got {text!r}")
    try:
        return Fraction(1, eps_to_k(text))
    except (ValueError, ZeroDivisionError, GridIncommensurate) as exc:
        raise ConfigError(f"invalid eps {text!r}: {exc}") from None


def _vector(value, d: int, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of {d} numbers") from None
    if arr.size != d or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a list of {d} finite numbers")
    return arr


def _block(raw: dict, key: str, allowed: set) -> dict:
    block = raw.get(key, {})
    if not isinstance(block, dict):
        raise ConfigError(f"'{key}' must be an object")
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown keys in '{key}': {sorted(extra)}")
    return block


def _pos_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{name} must be a positive integer")
    return value


@dataclass
class RunConfig:
    raw: dict
    d: int
    P: np.ndarray
    potential: PotentialSpec
    eps: list = field(default_factory=list)
    n: int | None = None
    macro_n: int = 64
    micro_n: int = 128
    points_per_period: int = 16
    tol: float = 1e-10
    max_iter: int = 1000
    cell_x: np.ndarray | None = None
    cell_lam: np.ndarray | None = None
    table: dict = field(default_factory=dict)
    battery: list | None = None
    output: str | None = None
    seed: int | None = None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def grid_size(self, eps: Fraction) -> int:
        """eps-level resolution: explicit ``grid.n`` (checked) or the points-per-period rule."""
        k = eps.denominator
        if self.n is None:
            return max(8, self.points_per_period * k)
        if self.n % k:
            raise GridIncommensurate(f"grid size {self.n} is not a multiple of 1/eps = {k}")
        return self.n


def validate(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
    for key in ("dimension", "P", "potential"):
        if key not in raw:
            raise ConfigError(f"missing required key '{key}'")
    d = raw["dimension"]
    if d not in (1, 2, 3) or isinstance(d, bool):
        raise ConfigError("dimension must be 1, 2 or 3")
    pblock = raw["potential"]
    if not isinstance(pblock, dict):
        raise ConfigError("'potential' must be an object")
    pblock = {"d": d, **pblock}
    if pblock["d"] != d:
        raise ConfigError("potential.d disagrees with dimension")
    try:
        potential = from_config(pblock)
    except MFGHomogError as exc:
        raise ConfigError(f"potential: {exc}") from exc
    cfg = RunConfig(raw=raw, d=d, P=_vector(raw["P"], d, "P"), potential=potential)
    eps = raw.get("eps", [])
    if not isinstance(eps, list):
        raise ConfigError("eps must be a list of strings '1/k'")
    cfg.eps = [parse_eps(e) for e in eps]
    grid = _block(raw, "grid", GRID_KEYS)
    if "n" in grid and grid["n"] is not None:
        cfg.n = _pos_int(grid["n"], "grid.n")
    cfg.macro_n = _pos_int(grid.get("macro_n", cfg.macro_n), "grid.macro_n")
    cfg.micro_n = _pos_int(grid.get("micro_n", cfg.micro_n), "grid.micro_n")
    cfg.points_per_period = _pos_int(grid.get("points_per_period", 16), "grid.points_per_period")
    solver = _block(raw, "solver", SOLVER_KEYS)
    try:
        cfg.tol = float(solver.get("tol", cfg.tol))
    except (TypeError, ValueError):
        raise ConfigError("solver.tol must be a number") from None
    if not cfg.tol > 0:
        raise ConfigError("solver.tol must be positive")
    cfg.max_iter = _pos_int(solver.get("max_iter", cfg.max_iter), "solver.max_iter")
    cell = _block(raw, "cell", CELL_KEYS)
    cfg.cell_x = _vector(cell.get("x", [0.0] * d), d, "cell.x")
    cfg.cell_lam = _vector(cell.get("lam", list(cfg.P)), d, "cell.lam")
    cfg.table = dict(_block(raw, "table", TABLE_KEYS))
    battery = raw.get("battery")
    if battery is not None and (not isinstance(battery, list) or not all(isinstance(b, str) for b in battery)):
        raise ConfigError("battery must be a list of expression strings")
    cfg.battery = battery
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output must be a path string")
    cfg.output = out
    seed = raw.get("seed")
    if seed is not None:
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        cfg.seed = seed
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate(raw)
