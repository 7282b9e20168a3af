"""Command-line front end.

    mfghomog <subcommand> --config run.json [--out DIR] [--eps 1/k] [--seed N]

Exit codes: 0 success, 1 solver failure, 2 configuration or parse error.
Every run writes JSON + CSV artifacts carrying the config hash and a
``manifest.json`` listing them (timings and versions live only there).
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import kernels
from .cell import (
    EffectiveHamiltonianTable,
    default_lam_max,
    flux_vs_fd,
    solve_cell,
    solve_cell_separable,
    tabulate_Heff,
    verify_Heff_properties,
    verify_cell_bounds,
)
from .config import RunConfig, load_config, parse_eps
from .convergence import DEFAULT_BATTERY, ConvergenceConfig, run_convergence_study
from .eps_solver import EpsProblem, residuals_eps, solve_eps, verify_bounds_eps
from .errors import ConfigError, GridIncommensurate, MFGHomogError, PotentialError, SolverError
from .homog import OnTheFlyProvider, TableProvider, reconstruct_two_scale, residuals_two_scale, solve_homog
from .io import write_csv, write_json
from .oned import solve_eps_1d, solve_limit_1d
from .potential import potential_bounds
from .torus import TorusGrid
from .variational import random_init

SUBCOMMANDS = (
    "solve-eps",
    "solve-cell",
    "tabulate-heff",
    "solve-homog",
    "reconstruct",
    "converge",
    "oracle-1d",
    "verify-bounds",
)


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.artifacts: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict):
        # potentials are configured examples, so every report says where V came from
        payload = {"config_hash": self.cfg.hash, "potential_source": "run configuration", **payload}
        self.artifacts.append(str(write_json(self.out / name, payload).name))

    def csv(self, name: str, columns: dict):
        self.artifacts.append(str(write_csv(self.out / name, columns, self.cfg.hash).name))

    def manifest(self, command: str, seconds: float):
        try:
            version = metadata.version("artifact")
        except metadata.PackageNotFoundError:
            version = "unknown"
        write_json(self.out / "manifest.json", {
            "command": command,
            "config_hash": self.cfg.hash,
            "artifacts": self.artifacts,
            "timings": {"total_seconds": seconds, "finished": time.strftime("%Y-%m-%dT%H:%M:%S")},
            "versions": {
                "package": version,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "kernels": kernels.BACKEND,
            },
        })


def _eps_list(cfg: RunConfig, args) -> list:
    if args.eps:
        return [parse_eps(args.eps)]
    if not cfg.eps:
        raise ConfigError("no eps given (config 'eps' list or --eps)")
    return cfg.eps


def _init(grid: TorusGrid, seed):
    return None if seed is None else random_init(grid, seed)


def _seed(cfg, args):
    return args.seed if args.seed is not None else cfg.seed


def _node_columns(grid: TorusGrid) -> dict:
    return {f"x{i + 1}": grid.nodes[i] for i in range(grid.d)}


def cmd_solve_eps(run: Run, args):
    cfg = run.cfg
    for eps in _eps_list(cfg, args):
        grid = TorusGrid(cfg.d, cfg.grid_size(eps))
        p = EpsProblem(cfg.potential, cfg.P, eps, grid)
        s = solve_eps(p, tol=cfg.tol, init=_init(grid, _seed(cfg, args)), max_iter=cfg.max_iter)
        k = eps.denominator
        run.json(f"eps_{k}.json", {
            "problem": {"eps": f"1/{k}", "n": grid.n, "P": cfg.P, "potential": cfg.potential.to_config()},
            "Hbar": s.Hbar,
            "I_value": s.I_value,
            "iterations": s.iterations,
            "residuals": residuals_eps(s).to_dict(),
        })
        run.csv(f"eps_{k}.csv", {**_node_columns(grid), "u": s.u.values, "m": s.m.values})


def cmd_verify_bounds(run: Run, args):
    cfg = run.cfg
    bounds = potential_bounds(cfg.potential)
    reports = []
    for eps in _eps_list(cfg, args):
        grid = TorusGrid(cfg.d, cfg.grid_size(eps))
        s = solve_eps(EpsProblem(cfg.potential, cfg.P, eps, grid), tol=cfg.tol, max_iter=cfg.max_iter)
        reports.append({"eps": f"1/{eps.denominator}", **verify_bounds_eps(s, bounds).to_dict()})
    run.json("bounds.json", {"vmin": bounds.vmin, "vmax": bounds.vmax, "reports": reports,
                             "passed": all(r["passed"] for r in reports)})


def _micro(cfg: RunConfig) -> TorusGrid:
    return TorusGrid(cfg.d, cfg.micro_n)


def cmd_solve_cell(run: Run, args):
    cfg = run.cfg
    micro = _micro(cfg)
    V = cfg.potential
    seed = _seed(cfg, args)
    if seed is None and (V.d == 1 or V.separable):
        s = solve_cell_separable(V, cfg.cell_x, cfg.cell_lam, micro)
    else:
        s = solve_cell(V, cfg.cell_x, cfg.cell_lam, micro, tol=cfg.tol, init=_init(micro, seed))
    bounds = potential_bounds(V)
    run.json("cell.json", {
        "x": s.x, "lam": s.lam, "H": s.H, "b": s.b, "micro_n": micro.n,
        "bounds": verify_cell_bounds(s, bounds).to_dict(),
        "flux_vs_fd": flux_vs_fd(V, s.x, s.lam, micro),
        "spectral_decay": _spectral_decay(s.w.values),
    })
    run.csv("cell.csv", {**{f"y{i + 1}": micro.nodes[i] for i in range(micro.d)}, "w": s.w.values, "m": s.m.values})


def _spectral_decay(w: np.ndarray) -> dict:
    """Largest Fourier amplitude in the top quarter of the spectrum relative to the overall largest.

    Informational only: a smooth corrector shows a tiny ratio.
    """
    amp = np.abs(np.fft.fftn(w)) / w.size
    n = w.shape[0]
    k = np.abs(np.fft.fftfreq(n, 1.0 / n))
    kmax = np.max(np.stack(np.meshgrid(*([k] * w.ndim), indexing="ij")), axis=0)
    peak = float(amp.max())
    tail = float(amp[kmax >= n // 4].max())
    return {"tail_ratio": tail / peak if peak > 0 else 0.0, "tail_from_mode": n // 4}


def _table_params(cfg: RunConfig):
    bounds = potential_bounds(cfg.potential)
    dlam = float(cfg.table.get("dlam", 0.25))
    lam_max = cfg.table.get("lam_max")
    if lam_max is None:
        lam_max = dlam * np.ceil(default_lam_max(cfg.P, bounds) / dlam)
    return TorusGrid(cfg.d, int(cfg.table.get("macro_n", 16))), float(lam_max), dlam, bounds


def cmd_tabulate(run: Run, args):
    cfg = run.cfg
    macro, lam_max, dlam, bounds = _table_params(cfg)
    table = tabulate_Heff(cfg.potential, macro, lam_max, dlam, _micro(cfg), tol=cfg.tol)
    paths = table.save(run.out / "heff")
    run.artifacts.extend(p.name for p in paths)
    run.json("heff_properties.json", verify_Heff_properties(table, bounds))


def _provider(cfg: RunConfig):
    macro = TorusGrid(cfg.d, cfg.macro_n)
    path = cfg.table.get("path")
    if path:
        table = EffectiveHamiltonianTable.load(path)
        if table.macro != macro:
            raise ConfigError("table macro grid differs from grid.macro_n")
        return TableProvider(table, cfg.potential, _micro(cfg))
    return OnTheFlyProvider(cfg.potential, macro, _micro(cfg))


def _homog(run: Run, args):
    cfg = run.cfg
    provider = _provider(cfg)
    hs = solve_homog(provider, cfg.P, provider.macro, tol=cfg.tol,
                     init=_init(provider.macro, _seed(cfg, args)), max_iter=cfg.max_iter)
    seed = _seed(cfg, args)
    extra = {}
    if seed is not None:
        extra["init"] = {"seed": seed, "note": "agreement across random inits is numerical evidence of uniqueness, not a proof"}
    run.json("homog.json", {"Hbar": hs.Hbar, "I_value": hs.I_value, "iterations": hs.iterations,
                            "macro_n": provider.macro.n, "P": hs.P, **extra})
    run.csv("homog.csv", {**_node_columns(provider.macro), "u0": hs.u0.values, "m0": hs.m0.values})
    return hs, provider


def cmd_solve_homog(run: Run, args):
    _homog(run, args)


def cmd_reconstruct(run: Run, args):
    hs, provider = _homog(run, args)
    tss = reconstruct_two_scale(hs, provider, check=isinstance(provider, OnTheFlyProvider))
    res = residuals_two_scale(tss, run.cfg.potential)
    run.json("two_scale.json", {"Hbar": tss.Hbar, "I_hat": tss.I_hat, "I_bar": tss.I_bar,
                                "energy_gap": tss.energy_gap, "residuals": res.to_dict()})
    d = tss.macro.d
    big = np.indices(tss.macro.shape + tss.micro.shape).astype(float)
    cols = {f"x{i + 1}": big[i] * tss.macro.h for i in range(d)}
    cols.update({f"y{i + 1}": big[d + i] * tss.micro.h for i in range(d)})
    run.csv("two_scale.csv", {**cols, "u1": tss.u1, "m": tss.m})


def cmd_converge(run: Run, args):
    cfg = run.cfg
    eps = _eps_list(cfg, args)
    battery = tuple(cfg.battery) if cfg.battery else DEFAULT_BATTERY
    conv = ConvergenceConfig(cfg.potential, cfg.P, eps, macro_n=cfg.macro_n, micro_n=cfg.micro_n,
                             points_per_period=cfg.points_per_period, tol=cfg.tol, battery=battery)
    report = run_convergence_study(conv)
    summary = {name: {"strictly_decreasing": report.strictly_decreasing(name), "halved": report.halved(name)}
               for name in list(report.METRICS) + report.test_gap_names()}
    # slow convergence and failure look alike; non-monotone series are flagged, not judged
    flags = sorted(k for k, v in summary.items() if not v["strictly_decreasing"])
    run.json("report.json", {**report.to_dict(), "summary": summary, "non_monotone": flags})
    path = run.out / "report.csv"
    path.write_text(f"# config_hash={cfg.hash}\n" + report.to_csv())
    run.artifacts.append(path.name)


def cmd_oracle_1d(run: Run, args):
    cfg = run.cfg
    if cfg.d != 1:
        raise ConfigError("oracle-1d needs dimension 1")
    P = float(cfg.P[0])
    for eps in _eps_list(cfg, args):
        grid = TorusGrid(1, cfg.grid_size(eps))
        prof = solve_eps_1d(cfg.potential, P, eps, grid)
        k = eps.denominator
        run.json(f"oracle_eps_{k}.json", {"eps": f"1/{k}", "n": grid.n, "j": prof.j, "Hbar": prof.Hbar,
                                          "hj_residual": prof.hj_residual()})
        run.csv(f"oracle_eps_{k}.csv", {"x1": grid.axis_nodes, "u": prof.u.values, "m": prof.m.values})
    macro, micro = TorusGrid(1, cfg.macro_n), _micro(cfg)
    lim = solve_limit_1d(cfg.potential, P, macro, micro)
    run.json("oracle_limit.json", {"j": lim.j, "Hbar": lim.Hbar, "macro_n": macro.n, "micro_n": micro.n,
                                   "hj_residual": lim.hj_residual()})
    run.csv("oracle_limit_macro.csv", {"x1": macro.axis_nodes, "u0": lim.u0.values, "m0": lim.m0.values})
    xx, yy = np.meshgrid(macro.axis_nodes, micro.axis_nodes, indexing="ij")
    run.csv("oracle_limit_two_scale.csv", {"x1": xx, "y1": yy, "u1": lim.u1, "m": lim.m})


COMMANDS = {
    "solve-eps": cmd_solve_eps,
    "solve-cell": cmd_solve_cell,
    "tabulate-heff": cmd_tabulate,
    "solve-homog": cmd_solve_homog,
    "reconstruct": cmd_reconstruct,
    "converge": cmd_converge,
    "oracle-1d": cmd_oracle_1d,
    "verify-bounds": cmd_verify_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfghomog", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (default: config 'output' or runs/<hash>)")
    parser.add_argument("--eps", help='single eps "1/k" overriding the config list')
    parser.add_argument("--seed", type=int, help="random initial guess for uniqueness checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output or Path("runs") / cfg.hash[:12])
        run = Run(cfg, out)
        start = time.perf_counter()
        COMMANDS[args.command](run, args)
        run.manifest(args.command, time.perf_counter() - start)
    except (ConfigError, PotentialError, GridIncommensurate) as exc:
        print(f"mfghomog: configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"mfghomog: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except MFGHomogError as exc:
        print(f"mfghomog: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
