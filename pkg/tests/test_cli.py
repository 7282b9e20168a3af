import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from mfghomog.cli import main
from mfghomog.config import config_hash, load_config, validate
from mfghomog.errors import ConfigError, GridIncommensurate
from mfghomog.io import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


def test_zero_converge(tmp_path):
    assert _run("converge", CONFIGS / "zero_1d.json", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    for row in rep["rows"]:
        assert max(v for k, v in row.items() if "gap" in k or k.startswith("expansion")) <= 1e-10
    man = json.loads((tmp_path / "manifest.json").read_text())
    chash = config_hash(json.loads((CONFIGS / "zero_1d.json").read_text()))
    assert man["config_hash"] == chash
    for name in man["artifacts"]:
        assert (tmp_path / name).exists()
    assert (tmp_path / "report.csv").read_text().startswith(f"# config_hash={chash}")


def test_incommensurate_exit_code(tmp_path, capsys):
    assert _run("solve-eps", CONFIGS / "incommensurate.json", tmp_path) == 2
    assert "GridIncommensurate" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dimension": 1, "P": [1.0]}')
    assert _run("solve-eps", bad, tmp_path / "o") == 2
    bad.write_text("{not json")
    assert _run("solve-eps", bad, tmp_path / "o") == 2
    assert main(["no-such-command", "--config", str(bad)]) == 2


def test_solver_failure_exit_code(tmp_path):
    raw = json.loads((CONFIGS / "standard_1d.json").read_text())
    raw["solver"] = {"tol": 1e-10, "max_iter": 1}
    raw["grid"]["n"] = 64
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(raw))
    assert _run("solve-eps", cfg, tmp_path / "o", "--eps", "1/4", "--seed", "3") == 1


def test_deterministic_reports(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert _run("solve-eps", CONFIGS / "standard_1d.json", out, "--eps", "1/8", "--seed", "2") == 0
    assert (a / "eps_8.json").read_bytes() == (b / "eps_8.json").read_bytes()
    assert (a / "eps_8.csv").read_bytes() == (b / "eps_8.csv").read_bytes()


def test_oracle_fixtures_match_solvers(tmp_path):
    assert _run("oracle-1d", CONFIGS / "standard_1d.json", tmp_path, "--eps", "1/8") == 0
    assert _run("solve-eps", CONFIGS / "standard_1d.json", tmp_path, "--eps", "1/8") == 0
    chash = load_config(CONFIGS / "standard_1d.json").hash
    oracle, h1 = read_csv(tmp_path / "oracle_eps_8.csv")
    sol, h2 = read_csv(tmp_path / "eps_8.csv")
    assert h1 == h2 == chash
    assert abs(oracle["u"] - sol["u"]).max() <= 1e-7
    assert abs(oracle["m"] - sol["m"]).max() <= 1e-7


def test_pipeline_commands(tmp_path):
    cfg = CONFIGS / "standard_1d.json"
    for cmd in ("solve-cell", "tabulate-heff", "verify-bounds", "reconstruct"):
        assert _run(cmd, cfg, tmp_path, "--eps", "1/4") == 0, cmd
    assert json.loads((tmp_path / "bounds.json").read_text())["passed"]
    assert json.loads((tmp_path / "heff_properties.json").read_text())["convex"]
    assert json.loads((tmp_path / "two_scale.json").read_text())["energy_gap"] <= 1e-8
    assert json.loads((tmp_path / "cell.json").read_text())["flux_vs_fd"]["max_rel"] <= 1e-4


def test_table_path_is_used(tmp_path):
    raw = json.loads((CONFIGS / "standard_1d.json").read_text())
    raw["grid"]["macro_n"] = 16
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(raw))
    assert _run("tabulate-heff", cfg, tmp_path / "t") == 0
    raw["table"]["path"] = str(tmp_path / "t" / "heff")
    cfg.write_text(json.dumps(raw))
    assert _run("solve-homog", cfg, tmp_path / "h") == 0
    ref = tmp_path / "r.json"
    del raw["table"]["path"]
    ref.write_text(json.dumps(raw))
    assert _run("solve-homog", ref, tmp_path / "r") == 0
    h = json.loads((tmp_path / "h" / "homog.json").read_text())["Hbar"]
    r = json.loads((tmp_path / "r" / "homog.json").read_text())["Hbar"]
    assert abs(h - r) <= 1e-4


def test_validate_schema():
    base = {"dimension": 1, "P": [1.0], "potential": {"terms": ["cos(2*pi*y1)"]}}
    cfg = validate(base)
    assert cfg.grid_size(cfg.eps[0] if cfg.eps else __import__("fractions").Fraction(1, 4)) == 64
    for bad in (
        {**base, "extra": 1},
        {**base, "eps": [0.25]},
        {**base, "eps": ["1/0"]},
        {**base, "P": [1.0, 2.0]},
        {**base, "grid": {"n": -4}},
        {**base, "solver": {"tol": 0}},
        {**base, "seed": -1},
        {**base, "potential": {"terms": ["cos(2*pi*y2)"]}},
    ):
        with pytest.raises(ConfigError):
            validate(bad)
    with pytest.raises(GridIncommensurate):
        validate({**base, "grid": {"n": 64}}).grid_size(__import__("fractions").Fraction(1, 7))


@pytest.mark.skipif(shutil.which("mfghomog") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["mfghomog", "solve-eps", "--config", str(CONFIGS / "incommensurate.json"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 2


def test_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mfghomog.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "solve-eps" in r.stdout
