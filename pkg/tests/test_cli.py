"""Command line entry points: config resolution, bundles, exit codes."""

import json
import os

import pytest

from hypernse.cli import ConfigError, main, resolve_config


def test_defaults():
    cfg = resolve_config(None, {})
    assert cfg.mu == 1.0e4
    assert cfg.beta == 1.45
    assert cfg.s == pytest.approx((3.0 - 2.0 * 1.45 + 1.0 / 6.0) / 2.0)
    assert cfg.integrator == "eif"
    assert cfg.include_nonlinear is True


def test_s_tracks_overridden_beta():
    cfg = resolve_config(None, {"beta": 1.47})
    assert cfg.s == pytest.approx((3.0 - 2.0 * 1.47 + 1.0 / 6.0) / 2.0)
    # explicit s wins over the derived midpoint
    cfg2 = resolve_config(None, {"beta": 1.47, "s": 0.1})
    assert cfg2.s == 0.1


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\nmu = 500\nseed = 3\n")
    cfg = resolve_config(str(path), {})
    assert cfg.mu == 500.0 and cfg.seed == 3
    cfg = resolve_config(str(path), {"mu": 600.0})
    assert cfg.mu == 600.0 and cfg.seed == 3


def test_config_file_unknown_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mu = 500\nbogus = 1\n")
    with pytest.raises(ConfigError) as ei:
        resolve_config(str(path), {})
    assert "bogus" in str(ei.value)
    assert "2" in str(ei.value)  # line number


def test_invalid_parameters_name_the_invariant():
    with pytest.raises(ConfigError) as ei:
        resolve_config(None, {"beta": 1.3})
    assert "17/12" in str(ei.value)
    with pytest.raises(ConfigError) as ei:
        resolve_config(None, {"s": 0.3})
    assert "1/6" in str(ei.value)
    with pytest.raises(ConfigError):
        resolve_config(None, {"samples": 0})


def test_gaps_command_writes_bundle(tmp_path):
    out = tmp_path / "gaps"
    rc = main(["lattice", "gaps", "--gap-limit", "10000", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "gaps.json").read_text())
    assert report["command"] == "lattice-gaps"
    assert report["config"]["gap_limit"] == 10000
    lines = (out / "gap_records.csv").read_text().splitlines()
    assert lines[0] == "lower,upper,gap"
    assert lines[1] == "2,4,2"


def test_annulus_command(tmp_path):
    out = tmp_path / "ann"
    rc = main(["lattice", "annulus", "--lambda", "25", "--k", "3", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "annulus.json").read_text())
    assert report["results"]["lambda"] == 25.0
    rows = (out / "annulus_points.csv").read_text().splitlines()
    assert rows[0] == "j1,j2"
    assert len(rows) - 1 == report["results"]["n_points"]


def test_sparse_command(tmp_path):
    out = tmp_path / "sp"
    rc = main(["lattice", "sparse", "--mu", "10000", "--s", "0.15", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "sparse.json").read_text())
    res = report["results"]
    assert res["found"] is True
    assert res["n_points"] == 16
    assert res["min_separation"] == 4.0
    assert res["lambda"] == pytest.approx(10005.97, abs=0.01)
    rows = (out / "sparse_annulus_points.csv").read_text().splitlines()
    assert len(rows) - 1 == 16


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    rc = main(
        [
            "simulate",
            "--M", "8",
            "--T", "0.01",
            "--dt", "0.001",
            "--out", str(out),
        ]
    )
    assert rc == 0
    report = json.loads((out / "simulate.json").read_text())
    assert report["results"]["blow_up"] is False
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,energy,regularity_norm"
    assert len(traj) == 12  # header + 11 samples
    assert (out / "final_field.csv").exists()


def test_pipeline_stage_subset_and_bitwise_determinism(tmp_path):
    args = [
        "pipeline",
        "--mu", "10000",
        "--s", "0.15",
        "--gap-limit", "50000",
        "--stages", "gaps,sparse,strips",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    names1 = sorted(os.listdir(out1))
    assert names1 == sorted(os.listdir(out2))
    assert "pipeline.json" in names1
    for name in names1:
        a = (out1 / name).read_bytes()
        b = (out2 / name).read_bytes()
        assert a == b, name


def test_pipeline_rejects_unknown_stage(tmp_path):
    rc = main(["pipeline", "--stages", "gaps,nonsense", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_pipeline_cone_requires_sparse(tmp_path):
    rc = main(["pipeline", "--stages", "cone", "--out", str(tmp_path / "x")])
    assert rc == 2
    rc = main(["pipeline", "--stages", "averaging", "--out", str(tmp_path / "y")])
    assert rc == 2


def test_bad_flag_value_exits_2(tmp_path):
    rc = main(["simulate", "--beta", "1.3", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_unwritable_output_exits_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory\n")
    rc = main(["lattice", "gaps", "--gap-limit", "100", "--out", str(blocker / "sub")])
    assert rc == 1


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HYPERNSE_OUTPUT_DIR", str(tmp_path / "env_runs"))
    rc = main(["lattice", "gaps", "--gap-limit", "100"])
    assert rc == 0
    printed = capsys.readouterr().out.strip().splitlines()[-1]
    assert str(tmp_path / "env_runs") in printed
    runs = os.listdir(tmp_path / "env_runs")
    assert len(runs) == 1
    assert runs[0].endswith("lattice-gaps")


def test_reports_carry_no_timestamps(tmp_path):
    out = tmp_path / "g"
    main(["lattice", "gaps", "--gap-limit", "1000", "--out", str(out)])
    report = json.loads((out / "gaps.json").read_text())
    assert set(report) == {"command", "version", "config", "results"}


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--version"])
    assert ei.value.code == 0
    assert "hypernse" in capsys.readouterr().out
