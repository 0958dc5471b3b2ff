import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from benporath import cli


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def read_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_solve_baseline(tmp_path, capsys):
    assert run_cli("solve", "--out", tmp_path / "o") == 0
    sol = pd.read_csv(tmp_path / "o" / "solution.csv").set_index("solution")
    assert abs(sol.loc["baseline", "s"] - 0.287) < 1e-3 and abs(sol.loc["baseline", "R"] - 0.644) < 1e-3
    assert "baseline" in capsys.readouterr().out


def test_solve_displacement_invariance(tmp_path, capsys):
    code = run_cli("solve", "--shock", "displacement", "--lambda", 0.9, "--d", 0.0, "--fix-schooling",
                   "--out", tmp_path / "o")
    assert code == 0
    out = capsys.readouterr().out
    assert "R change (ex_post - baseline) = 0" in out
    sol = pd.read_csv(tmp_path / "o" / "solution.csv").set_index("solution")
    assert "ex_ante" not in sol.index
    assert sol.loc["ex_post", "R"] == sol.loc["baseline", "R"]


def test_solve_injury_side_by_side(tmp_path):
    assert run_cli("solve", "--shock", "injury", "--kappa", 1.2, "--out", tmp_path / "o") == 0
    sol = pd.read_csv(tmp_path / "o" / "solution.csv").set_index("solution")
    assert list(sol.index) == ["baseline", "ex_ante", "ex_post"]
    assert sol.loc["ex_post", "R"] < sol.loc["baseline", "R"]


def test_malformed_config_fails_closed(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[preferences]\nr = -1\nunknown_key = 3\n")
    out = tmp_path / "o"
    assert run_cli("solve", "--config", cfg, "--out", out) != 0
    err = capsys.readouterr().err
    assert "preferences.r" in err and "preferences.unknown_key" in err
    assert not out.exists()
    assert not list(tmp_path.glob(".staging-*"))


def test_unparseable_config(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[preferences\n")
    assert run_cli("solve", "--config", cfg, "--out", tmp_path / "o") != 0


def test_figures_bundle(tmp_path):
    out = tmp_path / "o"
    assert run_cli("figures", "--out", out) == 0
    d2 = pd.read_csv(out / "fig_d2.csv")
    assert d2["series"].nunique() == 4
    assert set(d2["series"]) == {"disutility", "displaced_d=0.5", "displaced_d=0.55", "displaced_d=0.6"}
    a = pd.read_csv(out / "fig_d1a.csv").dropna()
    diff = (a["R_eq1_baseline"] - a["R_eq2_baseline"]).to_numpy()
    assert np.count_nonzero(np.diff(np.sign(diff))) == 1
    points = pd.read_csv(out / "fig_d1_points.csv")
    assert set(points["panel"]) == {"a", "b", "c", "d"}
    for panel in "abcd":
        assert (out / f"fig_d1{panel}.csv").exists()


def test_figures_rerun_byte_identical(tmp_path):
    assert run_cli("figures", "--out", tmp_path / "a") == 0
    assert run_cli("figures", "--out", tmp_path / "b") == 0
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


def test_simulate_twice_identical(tmp_path):
    for name in ("a", "b"):
        assert run_cli("simulate", "--n-agents", 1000, "--seed", 7, "--workers", 1, "--out", tmp_path / name) == 0
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")
    header = (tmp_path / "a" / "panel.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "id,birth_year,age,year,state,exited_employment,displaced,injured,pow,female"


def test_simulate_echoes_default_prevalence(tmp_path):
    assert run_cli("simulate", "--n-agents", 10, "--out", tmp_path / "o") == 0
    manifest = json.loads((tmp_path / "o" / "run_manifest.json").read_text())
    assert manifest["config"]["cohort"]["prevalence"] == {
        "injury": 0.299, "captivity_gt6m": 0.474, "displacement": 0.227}
    assert manifest["seed"] == 0 and set(manifest["artifacts"]) == {"panel.csv", "profile.csv"}


def test_invalid_probability_names_field(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[cohort.prevalence]\ninjury = 1.3\n")
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") != 0
    assert "cohort.prevalence.injury" in capsys.readouterr().err


def test_empty_panel_fails(tmp_path, capsys):
    panel = tmp_path / "empty.csv"
    panel.write_text("id,birth_year,age,year,state,exited_employment,displaced,injured,pow,female\n")
    assert run_cli("estimate", "--panel", panel, "--out", tmp_path / "o") != 0
    assert "no data rows" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_estimate_event_study_injury(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        "seed = 3\n[cohort]\nn_agents = 2000\n[cohort.noise]\nexit_jitter_sd = 1.5\n"
        "[cohort.prevalence]\ninjury = 0.3\ncaptivity_gt6m = 0.0\ndisplacement = 0.0\n"
        "[estimate]\nmethod = 'event_study'\ntreatment = 'injured'\nages = [35, 65]\n")
    assert run_cli("simulate", "--config", cfg, "--workers", 1, "--out", tmp_path / "sim") == 0
    assert run_cli("estimate", "--config", cfg, "--panel", tmp_path / "sim" / "panel.csv",
                   "--out", tmp_path / "est") == 0
    res = pd.read_csv(tmp_path / "est" / "results.csv")
    assert list(res.columns) == ["term", "estimate", "se", "ci_lo", "ci_hi"]
    res["age"] = res["term"].str.extract(r"age(\d+)$").astype(int)
    late = res[res["age"].between(50, 58)]
    assert (late["ci_hi"] < 0).any()
    assert res.loc[res["estimate"].idxmin(), "age"] >= 50


def test_estimate_did_total_per_cohort(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[cohort]\nn_agents = 900\nbirth_years = [1895, 1897]\n"
                   "[cohort.noise]\nexit_jitter_sd = 1.0\n[estimate]\nmethod = 'did_total'\n")
    assert run_cli("simulate", "--config", cfg, "--workers", 1, "--out", tmp_path / "sim") == 0
    assert run_cli("estimate", "--config", cfg, "--panel", tmp_path / "sim" / "panel.csv",
                   "--out", tmp_path / "est") == 0
    table = pd.read_csv(tmp_path / "est" / "did_total.csv")
    assert list(table["birth_year"]) == [1895, 1896, 1897]
    assert np.allclose(table["total_effect_years"], table["effect"] * table["post_period_length"])


def test_sweep_ordered_by_input(tmp_path):
    assert run_cli("sweep", "--workers", 2, "--out", tmp_path / "o") == 0
    frame = pd.read_csv(tmp_path / "o" / "sweep.csv")
    assert list(frame["value"]) == [1.1, 1.2, 1.3, 1.4]
    assert (np.diff(frame["R_ex_post"]) < 0).all()


@pytest.mark.parametrize("command, extra", [
    ("solve", ["--shock", "captivity", "--x", "0.1"]),
    ("figures", []),
    ("simulate", ["--n-agents", "300", "--seed", "11"]),
    ("sweep", ["--workers", "1"]),
])
def test_manifest_rerun_byte_identical(tmp_path, command, extra):
    first = tmp_path / "first"
    assert run_cli(command, *extra, "--out", first) == 0
    again = tmp_path / "again"
    assert run_cli(command, "--manifest", first / "run_manifest.json", "--out", again) == 0
    assert read_bytes(first) == read_bytes(again)


def test_manifest_command_mismatch(tmp_path):
    assert run_cli("solve", "--out", tmp_path / "o") == 0
    assert run_cli("figures", "--manifest", tmp_path / "o" / "run_manifest.json", "--out", tmp_path / "p") != 0


def test_parallel_and_serial_simulation_agree(tmp_path):
    assert run_cli("simulate", "--n-agents", 400, "--workers", 1, "--out", tmp_path / "s") == 0
    assert run_cli("simulate", "--n-agents", 400, "--workers", 3, "--out", tmp_path / "p") == 0
    assert (tmp_path / "s" / "panel.csv").read_bytes() == (tmp_path / "p" / "panel.csv").read_bytes()


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert run_cli("solve") == 0
    assert (tmp_path / "env" / "solution.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "benporath.cli", "solve", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "benporath.cli", "solve", "--kappa", "0.5",
                          "--shock", "injury", "--out", str(tmp_path / "x")], capture_output=True, text=True)
    assert bad.returncode != 0 and "shock.kappa" in bad.stderr
