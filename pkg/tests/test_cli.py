import json

from racesim.cli import main as cli_main

from harness_helpers import SUITES, TRACKS


def test_sim_run_then_plot_without_track_flag(tmp_path, capsys):
    ep_dir = tmp_path / "episode"
    rc = cli_main([
        "sim", "run",
        "--track", str(TRACKS / "single_gate.json"),
        "--instruction", "Fly through one gate",
        "--policy", "scripted",
        "--timeout", "30",
        "--out", str(ep_dir),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "outcome: success" in out
    assert (ep_dir / "steps.jsonl").exists()
    assert (ep_dir / "events.json").exists()

    plots = tmp_path / "plots"
    rc = cli_main(["plot", "--episode", str(ep_dir), "--out", str(plots)])
    assert rc == 0
    assert (plots / "topdown.svg").exists()
    assert (plots / "trajectory.csv").exists()
    assert (plots / "actions.csv").exists()


def test_eval_gen_report_shape(tmp_path):
    report_path = tmp_path / "gen.json"
    rc = cli_main([
        "eval", "gen",
        "--suite", str(SUITES / "desk_generalization.json"),
        "--report", str(report_path),
    ])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert set(report) == {"trials", "axes", "reference"}
    axes = {row["axis"]: row for row in report["axes"]}
    assert set(axes) == {"visual", "motion", "physical", "semantic"}
    for row in report["axes"]:
        assert 0.0 <= row["score"] <= 100.0
    assert set(report["reference"]) == {"openvla", "rt2"}


def test_codec_check_exit_code(capsys):
    assert cli_main(["codec", "check", "--samples", "500"]) == 0
    out = capsys.readouterr().out
    assert "within half bin: True" in out
