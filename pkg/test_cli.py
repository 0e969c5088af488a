"""
Tests de la ligne de commande (appels directs à run_command)
"""

import json
import re

import pytest

import cli
from cli import EXIT_INPUT, EXIT_INVARIANT, EXIT_OK, EXIT_VALIDATION, run_command
from conftest import FIXTURES, GRAPHS


def _records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


def _simulate(out, *extra):
    return run_command([
        "simulate", "--graphs", str(GRAPHS), "--trajectories", str(FIXTURES / "trajectories.jsonl"),
        "--out", str(out), "--format", "records", *extra,
    ])


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("TASKGRAPH_JOBS", "TASKGRAPH_SAFEGUARD", "TASKGRAPH_STALL_ROUNDS", "TASKGRAPH_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


# ============================================================================
# VALIDATE / THREADS / PLAN
# ============================================================================

def test_validate_fixture_graphs(capsys):
    assert run_command(["validate", str(GRAPHS)]) == EXIT_OK
    assert capsys.readouterr().out.count("✅") == 5


def test_validate_cyclic_graph(capsys):
    code = run_command(["validate", str(FIXTURES / "invalid" / "cyclic.json"), "--format", "records"])
    assert code == EXIT_VALIDATION
    [record] = _records(capsys)
    assert record["valid"] is False
    assert "acyclicity" in [v["rule"] for v in record["violations"]]


def test_validate_parse_error(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    assert run_command(["validate", str(broken), str(GRAPHS / "g2.json")]) == EXIT_INPUT
    assert "❌" in capsys.readouterr().out


def test_threads_records(capsys):
    assert run_command(["threads", str(GRAPHS / "g2.json"), "--format", "records"]) == EXIT_OK
    threads = {r["node"]: r["thread"] for r in _records(capsys)}
    assert threads["a1"] == threads["a2"] == 1 and threads["b1"] == 2


def test_plan_prefers_parallel_branch(capsys):
    code = run_command(["plan", str(GRAPHS / "g2.json"), "--human", "cut bread",
                        "--predicted", "toast bread", "boil water"])
    assert code == EXIT_OK
    assert "Execute(b1)" in capsys.readouterr().out


def test_plan_records_and_unresolved(capsys):
    code = run_command(["plan", str(GRAPHS / "g2.json"), "--human", "a1", "--policy", "greedy",
                        "--predicted", "toast bread", "Tighten flux capacitor", "--format", "records"])
    assert code == EXIT_OK
    [record] = _records(capsys)
    assert record["node"] == "a2"
    assert record["unresolved"] == ["Tighten flux capacitor"]
    assert record["breakdown"]["h_mix"] == pytest.approx(1.0)


def test_plan_unknown_history_label(capsys):
    code = run_command(["plan", str(GRAPHS / "g2.json"), "--human", "polish shoes"])
    assert code == EXIT_INPUT
    assert "polish shoes" in capsys.readouterr().err


# ============================================================================
# SIMULATE / EVAL
# ============================================================================

def test_human_only_saves_nothing(tmp_path, capsys):
    assert _simulate(tmp_path, "--policy", "none") == EXIT_OK
    [report] = _records(capsys)
    assert report["ss"] == 0.0
    assert report["n"]["videos"] == 5


def test_eval_reproduces_simulation_report(tmp_path, capsys):
    assert _simulate(tmp_path, "--policy", "entropy") == EXIT_OK
    [simulated] = _records(capsys)
    assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8")) == simulated

    code = run_command(["eval", "--logs", str(tmp_path / "logs.jsonl"), "--graphs", str(GRAPHS),
                        "--format", "records"])
    assert code == EXIT_OK
    [evaluated] = _records(capsys)
    assert evaluated == simulated


def test_online_mode_report(tmp_path, capsys):
    code = _simulate(tmp_path, "--mode", "online", "--predictions", str(FIXTURES / "predictions.jsonl"))
    assert code == EXIT_OK
    [report] = _records(capsys)
    assert report["mode"] == "online"
    assert report["n"]["samples"] == 7
    assert report["n"]["skipped"] == 12

    assert run_command(["eval", "--logs", str(tmp_path / "logs.jsonl"), "--format", "records"]) == EXIT_OK
    assert _records(capsys) == [report]


def test_online_mode_needs_predictions(tmp_path):
    assert _simulate(tmp_path, "--mode", "online") == EXIT_INPUT


def test_online_mode_rejects_oracle(tmp_path, capsys):
    code = _simulate(tmp_path, "--mode", "online", "--oracle", "--predictions", str(FIXTURES / "predictions.jsonl"))
    assert code == EXIT_INPUT
    [record] = _records(capsys)
    assert record["error"] == "ingestion"
    assert "--oracle" in record["message"]


def test_parallel_jobs_give_identical_logs(tmp_path, capsys):
    assert _simulate(tmp_path / "seq", "--jobs", "1") == EXIT_OK
    assert _simulate(tmp_path / "par", "--jobs", "8") == EXIT_OK
    capsys.readouterr()
    for name in ("logs.jsonl", "report.json"):
        sequential = (tmp_path / "seq" / name).read_bytes()
        assert (tmp_path / "par" / name).read_bytes() == sequential


def test_eval_with_missing_graph(tmp_path, capsys):
    assert _simulate(tmp_path, "--oracle") == EXIT_OK
    capsys.readouterr()
    code = run_command(["eval", "--logs", str(tmp_path / "logs.jsonl"), "--graphs", str(GRAPHS / "chain.json"),
                        "--format", "records"])
    assert code == EXIT_INPUT
    [record] = _records(capsys)
    assert record["error"] == "ingestion"
    assert {"locus": "g2-v1", "detail": "breakfast"} in record["loci"]


def test_unexpected_failure_is_internal(tmp_path, capsys, monkeypatch):
    assert _simulate(tmp_path) == EXIT_OK
    capsys.readouterr()

    def broken_report(**kwargs):
        raise RuntimeError("rapport impossible")

    monkeypatch.setattr(cli, "build_report", broken_report)
    code = run_command(["eval", "--logs", str(tmp_path / "logs.jsonl"), "--format", "records"])
    assert code == EXIT_INVARIANT
    [record] = _records(capsys)
    assert record == {"error": "internal", "message": "rapport impossible", "loci": []}


def test_eval_detects_tampered_log(tmp_path, capsys):
    assert _simulate(tmp_path) == EXIT_OK
    capsys.readouterr()
    logs = tmp_path / "logs.jsonl"
    records = [json.loads(line) for line in logs.read_text(encoding="utf-8").splitlines()]
    header = next(r for r in records if r["type"] == "rollout")
    header["final_executed"] = ["Start"]
    logs.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    assert run_command(["eval", "--logs", str(logs), "--graphs", str(GRAPHS)]) == 3


# ============================================================================
# EXPORT / FIGURE / GENERATE
# ============================================================================

def test_export_dot(capsys):
    assert run_command(["export-dot", str(GRAPHS / "g2.json")]) == EXIT_OK
    source = capsys.readouterr().out
    assert source.startswith("// Graphe de tâche breakfast")
    assert len(re.findall(r"fillcolor=", source)) == 8
    assert len([line for line in source.splitlines() if "->" in line]) == 8
    assert set(re.findall(r"fillcolor=(\w+)", source)) == {"lightgrey", "lightblue", "lightgreen"}
    assert "thread_2" in source


def test_figure(tmp_path, capsys):
    assert _simulate(tmp_path / "run") == EXIT_OK
    out = tmp_path / "fig.html"
    assert run_command(["figure", "--logs", str(tmp_path / "run" / "logs.jsonl"), "--out", str(out)]) == EXIT_OK
    html = out.read_text(encoding="utf-8")
    assert html.count("Plotly.newPlot") >= 2
    assert "Parall" in html


def test_generate_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        args = ["generate", "--out", str(tmp_path / name), "--graphs", "2", "--videos", "2",
                "--seed", "5", "--nested", "0.5", "--perturb"]
        assert run_command(args) == EXIT_OK
    for relative in ("trajectories.jsonl", "graphs/synthetique-1.json", "graphs/synthetique-2.json"):
        assert (tmp_path / "a" / relative).read_text(encoding="utf-8") == \
            (tmp_path / "b" / relative).read_text(encoding="utf-8")

    capsys.readouterr()
    assert run_command(["validate", str(tmp_path / "a" / "graphs")]) == EXIT_OK
    lines = (tmp_path / "a" / "trajectories.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert all("dropped" in json.loads(line) for line in lines)
