"""Command line behavior, run in process through main(argv)."""
import json

import pytest

from spanbandit.cli import main


def _simulate(tmp_path, name="traces.jsonl", extra=()):
    out = tmp_path / name
    rc = main(
        [
            "simulate",
            "--preset", "media",
            "--out", str(out),
            "--requests", "40",
            "--seed", "3",
            *extra,
        ]
    )
    assert rc == 0
    return out


def test_simulate_writes_jsonl_and_summary(tmp_path, capsys):
    truth = tmp_path / "truth.json"
    out = _simulate(tmp_path, extra=("--truth-out", str(truth)))
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "simulate"
    assert summary["requests"] == 40
    lines = out.read_text().splitlines()
    trace_ids = {json.loads(line)["traceId"] for line in lines}
    assert summary["traces"] == len(trace_ids) and summary["traces"] > 0
    assert len(lines) > len(trace_ids)
    assert "faulty" in json.loads(truth.read_text())


def test_decompose_csv(tmp_path, capsys):
    src = _simulate(tmp_path)
    capsys.readouterr()
    csv_path = tmp_path / "rows.csv"
    assert main(["decompose", "--in", str(src), "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["trace_id", "span_id", "service"]
    assert len(lines) > 40
    assert main(["decompose", "--in", str(src)]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("trace_id,")


def test_learn_report_pipeline(tmp_path, capsys):
    src = _simulate(tmp_path)
    capsys.readouterr()
    state = tmp_path / "state.json"
    policy = tmp_path / "policy.json"
    rc = main(
        [
            "learn",
            "--in", str(src),
            "--state", str(state),
            "--policy-out", str(policy),
            "--mc-rows", "1500",
            "--seed", "1",
        ]
    )
    assert rc == 0
    learn_summary = json.loads(capsys.readouterr().out)
    assert learn_summary["epoch"] == 1
    assert learn_summary["identitiesTracked"] > 0
    assert learn_summary["policyEntries"] == learn_summary["identitiesTracked"]
    assert json.loads(state.read_text())["epoch"] == 1
    assert json.loads(policy.read_text())["entries"]

    # A second pass over the same state advances the epoch.
    assert main(["learn", "--in", str(src), "--state", str(state)]) == 0
    assert json.loads(capsys.readouterr().out)["epoch"] == 2
    assert json.loads(state.read_text())["epoch"] == 2

    csv_path = tmp_path / "report.csv"
    rc = main(
        [
            "report",
            "--state", str(state),
            "--policy", str(policy),
            "--top", "5",
            "--csv", str(csv_path),
        ]
    )
    assert rc == 0
    table = capsys.readouterr().out
    assert "rank" in table and "vital" in table
    assert csv_path.read_text().startswith("rank,service,operation")


def test_experiment_summary_and_sweep_csv(tmp_path, capsys):
    rc = main(
        [
            "experiment",
            "--preset", "media",
            "--seeds", "0",
            "--epochs", "2",
            "--batch-size", "20",
            "--mc-rows", "800",
        ]
    )
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "experiment"
    assert summary["seeds"] == 1
    assert "meanCumulativeFractionEnabled" in summary

    out = tmp_path / "sweep.csv"
    rc = main(
        [
            "experiment",
            "--preset", "media",
            "--seeds", "0",
            "--epochs", "2",
            "--batch-size", "20",
            "--mc-rows", "800",
            "--sweep", "epsilon",
            "--values", "0.05,0.1",
            "--out", str(out),
        ]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert [p["value"] for p in payload["sweep"]] == [0.05, 0.1]
    assert out.read_text().startswith("# config: ")


def test_tags_json_output(tmp_path, capsys):
    out = tmp_path / "traces.jsonl"
    rc = main(
        [
            "simulate",
            "--preset", "media-canary",
            "--out", str(out),
            "--requests", "120",
            "--seed", "3",
        ]
    )
    assert rc == 0
    capsys.readouterr()
    rc = main(
        [
            "tags",
            "--in", str(out),
            "--service", "recommend",
            "--operation", "list",
            "--target", "e2e",
            "--json",
        ]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["identity"] == "recommend/list"
    assert payload["target"] == "e2e"
    keys = [row["key"] for row in payload["correlations"]]
    assert "service.version" in keys


def test_tags_requires_service_and_operation_together(tmp_path, capsys):
    src = _simulate(tmp_path)
    capsys.readouterr()
    rc = main(["tags", "--in", str(src), "--service", "video"])
    captured = capsys.readouterr()
    assert rc == 2
    err = json.loads(captured.err)
    assert err["error"] == "ValueError"


def test_compare_baselines_json(tmp_path, capsys):
    out = tmp_path / "cmp.json"
    rc = main(
        [
            "compare-baselines",
            "--arms", "20",
            "--budget", "600",
            "--seed", "0",
            "--mc-rows", "2000",
            "--out", str(out),
        ]
    )
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary["survivors"]) == {
        "median_elimination", "exponential_gap", "belief_sampler",
    }
    assert summary["survivors"]["median_elimination"] == 20
    full = json.loads(out.read_text())
    assert len(full["armMeans"]) == 20


def test_bench_inference_json(capsys):
    rc = main(["bench-inference", "--identities", "30", "--mc-rows", "1000", "--reps", "2"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["command"] == "bench-inference"
    assert payload["numIdentities"] == 30
    assert len(payload["timesMs"]) == 2


def test_missing_input_reports_json_error(tmp_path, capsys):
    rc = main(["decompose", "--in", str(tmp_path / "nope.jsonl")])
    captured = capsys.readouterr()
    assert rc == 2
    err = json.loads(captured.err)
    assert err["error"] == "FileNotFoundError"
    assert "message" in err


def test_seed_env_fallback(tmp_path, capsys, monkeypatch):
    flagged = tmp_path / "flagged.jsonl"
    rc = main(["simulate", "--preset", "media", "--out", str(flagged),
               "--requests", "25", "--seed", "11"])
    assert rc == 0
    monkeypatch.setenv("SPANBANDIT_SEED", "11")
    env_out = tmp_path / "env.jsonl"
    rc = main(["simulate", "--preset", "media", "--out", str(env_out), "--requests", "25"])
    assert rc == 0
    capsys.readouterr()
    assert env_out.read_bytes() == flagged.read_bytes()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "spanbandit" in capsys.readouterr().out
