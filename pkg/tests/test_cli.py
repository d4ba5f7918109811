from pathlib import Path

import pytest

from kiteupset import campaign, cli
from kiteupset.errors import NumericalFailure
from kiteupset.io import read_json

REPO_ROOT = Path(__file__).resolve().parents[1]

DEFAULT = str(REPO_ROOT / "configs" / "default.yaml")


def test_benchmark_mode_prints_summary(tmp_path, capsys):
    code = cli.main(
        ["subsim", "--benchmark", "--dim", "10", "--beta", "2.0", "--n-samples", "500", "--out", str(tmp_path), "--quiet"]
    )
    assert code == cli.EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("command=subsim p_f=")
    result = read_json(tmp_path / "subsim" / "benchmark" / "result.json")
    assert result["p_f_exact"] == pytest.approx(0.02275, rel=1e-3)
    assert 1 / 3 <= result["ratio"] <= 3


def test_dry_run_validates_only(tmp_path, capsys):
    code = cli.main(["subsim", "--config", DEFAULT, "--out", str(tmp_path), "--dry-run"])
    assert code == cli.EXIT_OK
    assert "dry_run=1" in capsys.readouterr().out
    assert not (tmp_path / "subsim").exists()


def test_dry_run_reports_checked_subsim_settings(tmp_path, capsys):
    code = cli.main(["subsim", "--config", DEFAULT, "--out", str(tmp_path), "--dry-run", "--n-samples", "200"])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "n_samples=200" in out and "p_s=0.1" in out

    code = cli.main(["subsim", "--config", DEFAULT, "--out", str(tmp_path), "--dry-run", "--n-samples", "15"])
    assert code == cli.EXIT_INVALID
    assert "n_samples" in capsys.readouterr().err


def test_unreadable_artifact_is_reported_with_its_path(tmp_path, capsys):
    (tmp_path / "reports" / "evaluation.json").mkdir(parents=True)
    code = cli.main(["loss", "--config", DEFAULT, "--out", str(tmp_path)])
    assert code == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert "evaluation.json" in err


def test_bad_config_exits_with_validation_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("training:\n  k_neighbors: -1\n")
    code = cli.main(["subsim", "--config", str(bad), "--dry-run"])
    assert code == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "bad.yaml:2" in err


def test_shared_subsim_run_is_refused(tmp_path, capsys):
    for tag in ("train", "eval"):
        path = tmp_path / "subsim" / tag
        path.mkdir(parents=True)
        (path / "result.json").write_text('{"run_id": "same"}')
    code = cli.main(["evaluate", "--config", DEFAULT, "--out", str(tmp_path), "--quiet"])
    assert code == cli.EXIT_INVALID
    assert "independent" in capsys.readouterr().err


def test_numerical_failure_exit_code(monkeypatch, tmp_path, capsys):
    def fail(*args, **kwargs):
        raise NumericalFailure("minority covariance is not finite")

    monkeypatch.setattr(campaign, "benchmark_stage", fail)
    code = cli.main(["subsim", "--benchmark", "--out", str(tmp_path)])
    assert code == cli.EXIT_NUMERICAL
    assert "minority covariance" in capsys.readouterr().err


def test_missing_upstream_artifacts(tmp_path, capsys):
    code = cli.main(["features", "--config", DEFAULT, "--out", str(tmp_path)])
    assert code == cli.EXIT_INVALID
    assert "kiteupset subsim" in capsys.readouterr().err


def test_report_command(tmp_path, capsys):
    assert cli.main(["report", "--config", DEFAULT, "--out", str(tmp_path)]) == cli.EXIT_OK
    assert "sections=none" in capsys.readouterr().out


def test_summary_formatting():
    assert cli._summary("loss", {"a": 1, "b": 0.000123456789, "c": float("inf")}) == "command=loss a=1 b=0.000123457 c=inf"


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("KITEUPSET_WORKERS", "4")
    args = cli.build_parser().parse_args(["report", "--config", DEFAULT])
    assert cli._campaign(args).workers == 4
