import json

import pytest

from erwlab.exceptions import InsufficientRegenerationsError
from erwlab.lab import Laboratory
from erwlab.models import CheckSuiteReport
from erwlab_cli._internal.commands import parse_probs
from erwlab_cli.cli import main


def run(*argv) -> int:
    with pytest.raises(SystemExit) as e:
        main(list(argv))
    return e.value.code


def test_classify_prints_json(capsys):
    assert run("classify", "--probs", "0.9,0.9,0.9") == 0
    data = json.loads(capsys.readouterr().out)
    assert data["classification"] == "TransientPositiveSpeed"
    assert data["delta"] == pytest.approx(2.4)


def test_periodic_classification(capsys):
    assert run("classify", "--probs", "0.6,0.4", "--form", "periodic") == 0
    data = json.loads(capsys.readouterr().out)
    assert data["theta"] == pytest.approx(1 / 24)


@pytest.mark.parametrize("probs", ["0.9,1.0", "0.9,abc", ""])
def test_bad_environment_exits_with_validation_code(probs, capsys):
    assert run("classify", "--probs", probs) == 1
    assert "❌" in capsys.readouterr().err


def test_parse_probs_accepts_semicolons():
    assert parse_probs("0.9; 0.8,0.7") == [0.9, 0.8, 0.7]


def test_oracle_query(capsys):
    assert run("oracle", "--probs", "0.9", "--horizon", "3", "--query", "hit 1") == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.945)
    assert run("oracle", "--probs", "0.9,0.9,0.9", "--horizon", "3", "--query", "hit 1") == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.981)


def test_oracle_horizon_guard(capsys):
    assert run("oracle", "--probs", "0.9", "--horizon", "25") == 1
    assert "guard" in capsys.readouterr().err


def test_check_writes_csv(tmp_path, capsys):
    config = tmp_path / "check.json"
    config.write_text(
        json.dumps(
            {
                "environment": {"probs": [0.7, 0.9, 0.9]},
                "kernel": {"construction": "swap", "swap": [1, 2]},
                "replicas": 4,
                "horizon": 200,
                "guard": 10,
            }
        )
    )
    out = tmp_path / "report.csv"
    assert run("check", "--config", str(config), "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "check,count"
    assert "prefix_domination,0" in lines
    assert "Report written" in capsys.readouterr().err


def test_check_violation_exit_code(mocker, capsys):
    report = CheckSuiteReport(
        samples=1, horizon=10, guard=5, counts={"prefix_domination": 1}, replay=[{"seed": 3, "replica": 0}]
    )
    mocker.patch.object(Laboratory, "check", return_value=report)
    assert run("check", "--probs", "0.9", "--format", "json") == 2
    err = capsys.readouterr().err
    assert "--seed 3 --replica 0" in err


def test_negative_control_flag(capsys):
    code = run(
        "check", "--probs", "0.7,0.9,0.9", "--replicas", "3", "--horizon", "200", "--guard", "10", "--negative-control"
    )
    assert code == 2
    assert "prefix_domination" in capsys.readouterr().out


def test_replaying_a_failing_replica(capsys):
    argv = ("check", "--probs", "0.7,0.9,0.9", "--horizon", "200", "--guard", "10", "--negative-control")
    assert run(*argv, "--replicas", "4", "--format", "json") == 2
    failing = json.loads(capsys.readouterr().out)["replay"][-1]["replica"]
    assert run(*argv, "--replica", str(failing), "--format", "json") == 2
    captured = capsys.readouterr()
    report = json.loads(captured.out)
    assert report["samples"] == 1
    assert report["replay"] == [{"seed": 0, "replica": failing}]
    assert f"--seed 0 --replica {failing}" in captured.err


def test_speed_insufficient_exit_code(mocker, capsys):
    mocker.patch.object(Laboratory, "speed", side_effect=InsufficientRegenerationsError())
    assert run("speed", "--probs", "0.5") == 3
    assert "insufficient regenerations" in capsys.readouterr().err


def test_speed_report_with_missing_estimate(capsys):
    code = run(
        "speed", "--probs", "0.5", "--replicas", "5", "--horizon", "200", "--guard", "100", "--format", "csv"
    )
    captured = capsys.readouterr()
    assert code == 3
    assert captured.out.startswith("estimate,method,guard")


def test_sweep_grid_file(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps([[0.9, 0.9, 0.9], [0.6, 0.6]]))
    assert run("sweep", "--grid", str(grid)) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("schema_version,probs,form,delta")
    assert len(lines) == 3


def test_bad_seed_is_a_validation_error(capsys):
    assert run("classify", "--probs", "0.9", "--seed", "-4") == 1


def test_no_command_prints_help(capsys):
    main([])
    assert "commands" in capsys.readouterr().out
