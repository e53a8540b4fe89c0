import json
import re

import pytest

from wcalc import __version__
from wcalc.cli import main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("WCALC_SEED", raising=False)
    monkeypatch.delenv("WCALC_OUT", raising=False)


def write_config(path, **extra):
    cfg = {"schema": "wcalc-run-v1"}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return str(path)


def verify_config(tmp_path, **extra):
    base = dict(command="verify", check="girsanov", seed=11, n_paths=1500,
                grid={"n_steps": 8}, out_dir=str(tmp_path / "out"))
    base.update(extra)
    return write_config(tmp_path / "cfg.json", **base)


def read_report(out_dir):
    with open(out_dir / "report.json") as fh:
        return json.load(fh)


def test_verify_pass_writes_report_and_csv(tmp_path, capsys):
    cfg = verify_config(tmp_path)
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    rep = read_report(tmp_path / "out")
    assert rep["schema"] == "wcalc-report-v1"
    assert rep["version"] == __version__
    assert rep["command"] == "verify" and rep["check"] == "girsanov"
    assert rep["passed"] is True
    assert rep["resolved"]["seed"] == 11
    assert rep["resolved"]["n_paths"] == 1500
    assert all(r["passed"] for r in rep["records"])

    csv_lines = (tmp_path / "out" / "girsanov.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "name,lhs,rhs,std_err,tolerance,gap,passed"
    assert len(csv_lines) == 1 + len(rep["records"])

    out = capsys.readouterr().out
    assert "all records pass" in out
    assert out.count("pass  ") == len(rep["records"])


def test_verify_forced_failure_exits_one(tmp_path):
    cfg = verify_config(tmp_path,
                        tolerances={"girsanov/inverse|sin-t": 1e-30})
    assert main(["verify", "girsanov", "--config", cfg]) == 1
    rep = read_report(tmp_path / "out")
    assert rep["passed"] is False
    failed = [r["name"] for r in rep["records"] if not r["passed"]]
    assert failed == ["girsanov/inverse|sin-t"]


def test_verify_rejects_bad_config(tmp_path, capsys):
    cfg = verify_config(tmp_path, n_paths="many")
    assert main(["verify", "girsanov", "--config", cfg]) == 2
    assert "error:" in capsys.readouterr().err

    cfg2 = verify_config(tmp_path, banana=1)
    assert main(["verify", "girsanov", "--config", cfg2]) == 2

    missing = str(tmp_path / "nope.json")
    assert main(["verify", "girsanov", "--config", missing]) == 2


def test_verify_rejects_command_and_check_mismatch(tmp_path):
    cfg = verify_config(tmp_path, check="chain-rule")
    assert main(["verify", "girsanov", "--config", cfg]) == 2
    cfg2 = verify_config(tmp_path, command="pipeline")
    assert main(["verify", "girsanov", "--config", cfg2]) == 2


def test_unknown_check_is_a_usage_error(tmp_path):
    cfg = verify_config(tmp_path)
    with pytest.raises(SystemExit):
        main(["verify", "nope", "--config", cfg])


def test_seed_precedence_flag_env_config(tmp_path, monkeypatch):
    cfg = verify_config(tmp_path)
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    assert read_report(tmp_path / "out")["resolved"]["seed"] == 11

    monkeypatch.setenv("WCALC_SEED", "22")
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    assert read_report(tmp_path / "out")["resolved"]["seed"] == 22

    assert main(["verify", "girsanov", "--config", cfg, "--seed", "33"]) == 0
    assert read_report(tmp_path / "out")["resolved"]["seed"] == 33

    monkeypatch.setenv("WCALC_SEED", "not-a-number")
    assert main(["verify", "girsanov", "--config", cfg]) == 2


def test_out_dir_precedence(tmp_path, monkeypatch):
    cfg = verify_config(tmp_path)
    monkeypatch.setenv("WCALC_OUT", str(tmp_path / "envout"))
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    assert (tmp_path / "envout" / "report.json").exists()

    flag_dir = tmp_path / "flagout"
    assert main(["verify", "girsanov", "--config", cfg,
                 "--out", str(flag_dir)]) == 0
    assert (flag_dir / "report.json").exists()


def test_reruns_are_byte_identical_up_to_wall_time(tmp_path):
    cfg = verify_config(tmp_path)
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    first = (tmp_path / "out" / "report.json").read_text()
    assert main(["verify", "girsanov", "--config", cfg]) == 0
    second = (tmp_path / "out" / "report.json").read_text()
    strip = lambda s: re.sub(r'"wall_time_s": [0-9.]+', "", s)
    assert strip(first) == strip(second)
    assert first != ""  # sanity: something was written


def test_pipeline_command_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(tmp_path / "p.json", command="pipeline", seed=3,
                       n_paths=2000, grid={"n_steps": 8}, lam=0.3,
                       lam_prime=0.5,
                       pipeline={"dyadic_level": 2, "step_count": 4,
                                 "quad_order": 12, "inner_mc": 4},
                       out_dir=str(out))
    assert main(["pipeline", "--config", cfg]) == 0
    for name in ("report.json", "pipeline.csv", "pipeline_report.json",
                 "gamma_table.csv"):
        assert (out / name).exists(), name
    rep = read_report(out)
    names = [r["name"] for r in rep["records"]]
    assert names == ["pipeline/value-error", "pipeline/deriv-error",
                     "pipeline/segment-error", "pipeline/gamma-consistency"]
    assert rep["passed"] is True
    stdout = capsys.readouterr().out
    for sid in (1, 3, 4, 5, 6, 7):
        assert f"stage {sid}:" in stdout

    tight = write_config(tmp_path / "p2.json", command="pipeline", seed=3,
                         n_paths=2000, grid={"n_steps": 8}, lam=0.3,
                         lam_prime=0.5,
                         pipeline={"dyadic_level": 2, "step_count": 4,
                                   "quad_order": 12, "inner_mc": 4},
                         tolerances={"pipeline/value-error": 1e-12},
                         out_dir=str(tmp_path / "run2"))
    assert main(["pipeline", "--config", tight]) == 1


def test_report_aggregates_a_tree(tmp_path, capsys):
    cfg = verify_config(tmp_path, out_dir=str(tmp_path / "tree" / "a"))
    assert main(["verify", "girsanov", "--config", cfg]) == 0

    fake = {"schema": "wcalc-report-v1", "version": __version__,
            "command": "verify", "check": "chain-rule",
            "records": [{"name": "x", "passed": False}], "passed": False}
    b = tmp_path / "tree" / "b"
    b.mkdir(parents=True)
    (b / "report.json").write_text(json.dumps(fake))
    (b / "not_a_report.json").write_text("{}")

    assert main(["report", str(tmp_path / "tree")]) == 1
    with open(tmp_path / "tree" / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["schema"] == "wcalc-summary-v1"
    assert summary["n_reports"] == 2
    assert summary["all_passed"] is False
    assert summary["version_conflict"] is False
    rows = {r["path"]: r for r in summary["reports"]}
    assert rows["a/report.json"]["passed"] is True
    assert rows["b/report.json"]["n_failed"] == 1
    md = (tmp_path / "tree" / "summary.md").read_text()
    assert "| a/report.json |" in md and "NO" in md


def test_report_flags_version_conflicts(tmp_path):
    for sub, version, ok in (("a", __version__, True), ("b", "0.0.1", True)):
        d = tmp_path / sub
        d.mkdir()
        (d / "report.json").write_text(json.dumps(
            {"schema": "wcalc-report-v1", "version": version,
             "command": "verify", "check": "girsanov", "records": [],
             "passed": ok}))
    assert main(["report", str(tmp_path)]) == 0
    with open(tmp_path / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["version_conflict"] is True
    assert "WARNING: mixed versions" in (tmp_path / "summary.md").read_text()


def test_report_on_an_empty_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 0
    assert "No reports found." in capsys.readouterr().out
    with open(tmp_path / "summary.json") as fh:
        assert json.load(fh)["n_reports"] == 0


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
