import json
import math

import pytest

from linni.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_OK, ConfigError, main, make_config, parse_domain


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_green_on_the_unit_ball_passes(tmp_path):
    out = tmp_path / "green"
    assert main(["green", "--domain", "ball4", "--out", str(out)]) == EXIT_OK
    s = _summary(out)
    assert s["passed"]
    assert s["results"]["H_QQ"] == pytest.approx(2 / (3 * math.pi**2), rel=1e-12)
    assert "green_line.csv" in s["artifacts"]
    assert (out / "green_line.csv").read_text().startswith("x1,H,G")


def test_box_grid_oracle_runs_from_the_command_line(tmp_path):
    out = tmp_path / "box"
    assert main(["green", "--domain", "box4", "--grid", "16", "--out", str(out)]) == EXIT_OK
    names = [a["name"] for a in _summary(out)["assertions"]]
    assert names == ["series_vs_grid_oracle"]


def test_failed_assertion_exits_with_one(tmp_path):
    # psi6 drifts by ln r / r^2 at r = 100, so the 1e-4 check fails honestly
    out = tmp_path / "profiles"
    assert main(["profiles", "--out", str(out)]) == EXIT_FAIL
    failed = {a["name"] for a in _summary(out)["assertions"] if not a["passed"]}
    assert "psi6_4r2_at_100" in failed
    assert "int_U4_R4_vs_pi2_over_6" not in failed


def test_numerical_accuracy_error_exits_with_three(tmp_path):
    out = tmp_path / "edge"
    assert main(["green", "--domain", "ball4", "--Q", "0.97,0,0,0", "--out", str(out)]) == EXIT_NUMERIC
    assert _summary(out)["results"]["error"]["type"] == "GreenAccuracyError"


@pytest.mark.parametrize("argv", [
    ["energy-verify", "--eps", "0.5"],
    ["energy-verify", "--dim", "5"],
    ["energy-verify", "--beta", "0.4"],
    ["green", "--domain", "torus4"],
    ["green", "--domain", "ball4", "--Q", "2,0,0,0"],
    ["dichotomy", "--mu", "-0.1"],
    ["shoot", "--R", "0"],
])
def test_configuration_errors_exit_with_two(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_unknown_and_unreadable_config_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epsilon": [0.1]}))
    assert main(["green", "--config", str(bad), "--out", str(tmp_path / "a")]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["green", "--config", str(broken), "--out", str(tmp_path / "b")]) == EXIT_CONFIG
    assert main(["green", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_flags_override_the_config_file(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"dim": 4, "eps": [0.1], "mu": [0.2], "C": {"C3": 2e-5}}))
    cfg = make_config(["energy-verify", "--config", str(cfg_file), "--eps", "0.05,0.025", "--C4", "1e-3"])
    assert cfg.dim == 4
    assert cfg.eps == [0.05, 0.025]
    assert cfg.C == {"C3": 2e-5, "C4": 1e-3}


def test_unsafe_admits_parameters_outside_the_box():
    with pytest.raises(ConfigError):
        make_config(["energy-verify", "--dim", "4", "--lam", "100"])
    assert make_config(["energy-verify", "--dim", "4", "--lam", "100", "--unsafe"]).lam == 100


def test_jobs_come_from_the_environment(monkeypatch):
    monkeypatch.setenv("LINNI_JOBS", "3")
    assert make_config(["dichotomy"]).jobs == 3
    assert make_config(["dichotomy", "--jobs", "2"]).jobs == 2
    monkeypatch.setenv("LINNI_JOBS", "0")
    with pytest.raises(ConfigError):
        make_config(["dichotomy"])


def test_defaults_per_subcommand():
    assert make_config(["find-critical"]).dim == 4
    assert make_config(["find-critical"]).eps == [1e-2, 1e-3, 1e-4]
    d = make_config(["dichotomy"])
    assert d.dims == [3, 4, 5, 6, 7] and d.mu == [0.1, 0.05, 0.02]


def test_summary_is_deterministic(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        main(["shoot", "--dim", "5", "--mu", "0.1", "--out", str(out)])
        runs.append({k: v for k, v in _summary(out).items() if k != "config"})
    assert runs[0] == runs[1]
    assert runs[0]["assertions"][0]["passed"]


def test_parse_domain():
    assert parse_domain("ball6").n == 6
    b = parse_domain("box4:2,1,1,1")
    assert b.shape == "box" and tuple(b.lengths) == (2.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        parse_domain("ball5")
