import json
import os

import pytest

from stadium_eth.cli import THREADS_ENV, main
from stadium_eth.config import DEFAULTS, ConfigError, RunConfig, config_hash, load_config

SMALL = """
output = "unused"
[solver]
k_min = 30.0
k_max = 36.0
[analysis]
n_boot = 200
n_ave = [1, 4, 16]
"""

SHORT_SWEEP = """
[semiclassics]
sweep_points = 5
grid_points = 2
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- configuration ------------------------------------------------------------

def test_defaults_round_trip():
    cfg = load_config()
    assert cfg.to_dict() == DEFAULTS
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert len(cfg.hash) == 16 and cfg.hash == config_hash(DEFAULTS)


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, "c.toml", "[solver]\nk_mx = 3.0\n"))
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, "c.toml", "colour = 1\n"))


@pytest.mark.parametrize("text", [
    "[solver]\nk_min = 50.0\nk_max = 40.0\n",
    "[physics]\nhbar = -1.0\n",
    "[analysis]\npoints_per_wavelength = 5.0\n",
    "[semiclassics]\ndomain_mode = 'other'\n",
    "[solver]\nmargin = 'ten'\n",
    "[semiclassics]\ne_min = 1.0\n",
    "[analysis]\nn_ave = [0, 4]\n",
])
def test_invalid_values_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "c.toml", text))


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "c.toml", "[solver\n"))


def test_presets():
    preset = load_config(preset="paper-regime")
    assert preset["physics"]["hbar"] == 0.01
    assert preset["semiclassics"]["e_center"] == 4.654
    assert not preset["solver"]["enabled"]
    assert load_config(preset="desk") == load_config()
    with pytest.raises(ConfigError):
        load_config(preset="nope")


def test_file_overrides_preset(tmp_path):
    cfg = load_config(write(tmp_path, "c.toml", SHORT_SWEEP), "paper-regime")
    assert cfg["physics"]["hbar"] == 0.01 and cfg["semiclassics"]["grid_points"] == 2


def test_json_config_and_hash_sensitivity(tmp_path):
    cfg = load_config(write(tmp_path, "c.json", json.dumps({"seed": 7})))
    assert cfg["seed"] == 7
    assert cfg.hash != load_config().hash


# --- command line -------------------------------------------------------------

def test_malformed_config_exit_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    bad = write(tmp_path, "bad.toml", "[solver]\nbogus = 1\n")
    assert main(["semiclassics", "--config", bad, "--out", str(out)]) == 2
    assert not out.exists()
    assert "unknown key" in capsys.readouterr().err


def test_bad_thread_env_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "many")
    assert main(["semiclassics", "--out", str(tmp_path / "x")]) == 2
    assert main(["semiclassics", "--threads", "0", "--out", str(tmp_path / "x")]) == 2


def test_missing_prerequisites_exit_3(tmp_path):
    out = str(tmp_path / "empty")
    assert main(["eth", "--out", out]) == 3
    assert main(["compare", "--out", out]) == 3
    assert main(["eth", "--preset", "paper-regime", "--out", out]) == 3
    assert main(["solve", "--preset", "paper-regime", "--out", out]) == 3


def test_semiclassics_small_hbar_preset(tmp_path):
    out = tmp_path / "small_hbar"
    cfg = write(tmp_path, "fast.toml", SHORT_SWEEP)
    assert main(["semiclassics", "--preset", "paper-regime", "--config", cfg,
                 "--out", str(out)]) == 0
    rep = json.loads((out / "semiclassics_report.json").read_text())
    assert abs(rep["bandwidth"] - 0.0717) < 1e-4
    assert rep["mean_level_spacing"] == rep["overlap_prefactor"]
    first = (out / "f2_sweep.csv").read_text()
    assert first.startswith(f"# config_hash={rep['config_hash']}\n")
    assert first.splitlines()[1] == "Ei,Ej,f2_numeric,f2_closed_full,f2_closed_truncated"
    manifest = out / "run_manifest.json"
    assert load_config(str(manifest)) == load_config(cfg, "paper-regime")


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    cfg = write(base, "small.toml", SMALL)
    out = base / "run"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert main(["eth", "--config", cfg, "--out", str(out)]) == 0
    assert main(["berry", "--config", cfg, "--out", str(out)]) == 0
    return cfg, out


def test_solve_outputs(desk_run):
    cfg, out = desk_run
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["n_states"] > 32
    assert rep["max_residual"] < 1e-3
    assert all(abs(w["count_in_range"] - w["weyl_in_range"]) <= 3 for w in rep["weyl"])
    assert (out / "manifest.txt").read_text().startswith("# config_hash=")


def test_eth_and_berry_outputs(desk_run):
    _, out = desk_run
    summary = json.loads((out / "eth_summary.json").read_text())
    assert summary["max_norm_error"] < 1e-6 and summary["max_asymmetry"] == 0
    berry = json.loads((out / "berry_report.json").read_text())
    assert set(berry["same_state"]) == {"1", "4", "16"}
    for name in ("eth_matrix.csv", "eth_profile.csv", "eth_band.csv", "eth_diagonal.csv",
                 "berry_same_state_Nave4.csv", "berry_synthetic_cross_state_Nave16.csv"):
        assert (out / name).read_text().startswith("# config_hash=")


def test_rerun_is_byte_identical_across_threads(desk_run, tmp_path, monkeypatch):
    cfg, out = desk_run
    names = sorted(n for n in os.listdir(out) if n.startswith("eth_"))
    before = {n: (out / n).read_bytes() for n in names}
    monkeypatch.setenv(THREADS_ENV, "4")
    assert main(["eth", "--config", cfg, "--out", str(out)]) == 0
    assert {n: (out / n).read_bytes() for n in names} == before


def test_compare_exit_code_matches_report(desk_run, capsys):
    cfg, out = desk_run
    code = main(["compare", "--config", cfg, "--out", str(out)])
    rep = json.loads((out / "compare_report.json").read_text())
    assert code == (0 if rep["passed"] else 1)
    names = {c["name"] for c in rep["checks"]}
    assert {"bandwidth_hwhm", "peak_magnitude", "diagonal_mean", "residual_excess_kurtosis",
            "spacing_identity", "berry_same_state_trend"} <= names
    assert "overall:" in capsys.readouterr().out


def test_compare_refuses_other_config(desk_run, tmp_path):
    _, out = desk_run
    other = write(tmp_path, "other.toml", "seed = 99\n" + SMALL)
    assert main(["compare", "--config", other, "--out", str(out)]) == 3


def test_run_manifest_round_trip(desk_run):
    cfg, out = desk_run
    assert load_config(str(out / "run_manifest.json")) == load_config(cfg)
