import json
from pathlib import Path

import pytest

from ptmatch.cli import run
from ptmatch.io import load_corpus

from _pipeline import DETERMINISTIC, run_pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run"))


def test_generate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run(["generate", "--seed", "5", "--out", str(tmp_path / name), "--n-patients", "12", "--n-trials", "3",
                    "--n-criteria", "12", "--target-pairs", "50"]) == 0
    for f in ("patients.jsonl", "trials.jsonl", "pairs.jsonl", "difficulty.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    corpus = load_corpus(tmp_path / "a")
    assert len(corpus.patients) == 12


def test_generate_config_file(tmp_path):
    cfg = tmp_path / "g.toml"
    cfg.write_text("[synthetic]\nn_patients = 9\nn_trials = 3\nn_criteria_total = 12\ntarget_pairs = 20\n")
    assert run(["generate", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    corpus = load_corpus(tmp_path / "c")
    assert (len(corpus.patients), len(corpus.trials)) == (9, 3)
    cfg.write_text("[synthetic]\nn_patient = 9\n")
    assert run(["generate", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1


def test_missing_input_file(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    code = run(["train", "--pairs", str(missing), "--trials", str(missing), "--patients", str(missing), "--out", str(tmp_path)])
    assert code == 1
    assert str(missing) in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert run(["frobnicate"]) == 1


def test_fetch_trial_from_fixtures(tmp_path):
    assert run(["fetch-trial", "--nct", "NCT03496883", "--out", str(tmp_path / "doc.json"), "--trials", str(tmp_path / "t.jsonl")]) == 0
    doc = json.loads((tmp_path / "doc.json").read_text())
    assert doc["trial_id"] == "NCT03496883" and "Exclusion Criteria" in doc["eligibility_text"]
    assert run(["fetch-trial", "--nct", "BADID", "--out", str(tmp_path / "x.json")]) == 1


def test_pipeline_outputs(pipeline):
    for rel in DETERMINISTIC:
        assert (pipeline / rel).exists(), rel
    manifest = json.loads((pipeline / "vanilla" / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["model"]["embedding_dim"] == 32
    assert manifest["config"]["loss"]["alpha"] == 0.5
    assert manifest["config"]["train"]["optimizer"] == "adam_style"
    history = [json.loads(line) for line in (pipeline / "vanilla" / "history.jsonl").read_text().splitlines()]
    assert [h["epoch"] for h in history] == [1, 2] and "wall_time" not in history[0]
    report = json.loads((pipeline / "eval" / "vanilla.json").read_text())
    assert {"criteria", "criteria_macro", "per_trial", "trial"} <= set(report)
    assert {"level", "averaging", "precision", "recall", "f1", "n", "confusion"} <= set(report["criteria"])
    exp = json.loads((pipeline / "exp" / "report.json").read_text())
    assert {r["variant"] for r in exp["rows"]} == {"vanilla", "augmented"}
    audit = [json.loads(line) for line in (pipeline / "aug" / "audit.jsonl").read_text().splitlines()]
    assert audit and all(e["decision"] in ("pass", "blocked") for e in audit)


def test_evaluate_single_level(pipeline, tmp_path):
    corpus = pipeline / "corpus"
    args = ["evaluate", "--ckpt", str(pipeline / "vanilla"), "--patients", str(corpus / "patients.jsonl"),
            "--trials", str(corpus / "trials.jsonl"), "--pairs", str(corpus / "pairs.jsonl")]
    assert run(args + ["--level", "trial", "--semantics", "strict", "--out", str(tmp_path / "t.json")]) == 0
    t = json.loads((tmp_path / "t.json").read_text())
    assert t["level"] == "trial" and t["semantics"] == "strict" and t["labels"] == ["match", "mismatch"]


def test_case_report_contents(pipeline):
    cases = json.loads((pipeline / "cases.json").read_text())
    rows = cases if isinstance(cases, list) else cases["cases"]
    assert rows and {"criterion", "variants", "vanilla", "augmented", "gold", "flag"} <= set(rows[0])


def test_bad_checkpoint_path(pipeline, tmp_path):
    corpus = pipeline / "corpus"
    code = run(["evaluate", "--ckpt", str(tmp_path / "none"), "--patients", str(corpus / "patients.jsonl"),
                "--trials", str(corpus / "trials.jsonl"), "--pairs", str(corpus / "pairs.jsonl"), "--out", str(tmp_path / "r.json")])
    assert code == 1
