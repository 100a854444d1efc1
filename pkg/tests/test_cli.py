import json

import pytest

from llinbo.cli import build_parser, main


def test_run_and_aggregate(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"budget": 128, "T": 2}))
    assert main(["run", "--config", str(cfg), "--policy", "BO", "--function", "Branin2", "--reps", "2", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["replications_completed"] == 2 and summary["T"] == 2
    csv_path = tmp_path / "agg.csv"
    assert main(["aggregate", str(out), "--out", str(csv_path)]) == 0
    assert csv_path.read_text() == (out / "aggregate.csv").read_text()


def test_run_against_stub(tmp_path, stub_valid, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"budget": 128, "T": 2, "agent": {"max_retries": 0, "timeout": 5}}))
    rc = main(["run", "--config", str(cfg), "--policy", "Transient", "--agent", "ChatCompletion",
               "--endpoint", stub_valid.url, "--reps", "1"])
    assert rc == 0
    assert len(stub_valid.requests) == 3


def test_oracle_check_single(capsys):
    assert main(["oracle", "Branin2"]) == 0
    assert "ok" in capsys.readouterr().out


def test_oracle_rejects_unknown():
    assert main(["oracle", "Nope"]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    args = build_parser().parse_args(["stub-server", "--mode", "error", "--port", "0"])
    assert args.mode == "error"
