import json
from pathlib import Path

import pytest

from avdkit.cli import main
from avdkit.evaluation import generate_synthetic_corpus
from avdkit.labels import read_sentences, write_sentences
from tests.test_ingest import sample_csv


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_manifest(tmp_path) -> Path:
    src = tmp_path / "source.csv"
    src.write_bytes(sample_csv())
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps([
        {"url": src.as_uri(), "year": 2020, "format_hint": "ConsolidatedTable"},
    ]))
    return manifest


def test_ingest_then_filter(workdir):
    manifest = write_manifest(workdir)
    assert run(["ingest", "--manifest", manifest, "--cache", workdir / "cache"]) == 0
    assert (workdir / "corpus_raw.csv").exists()
    assert run(["filter"]) == 0
    log = json.loads((workdir / "filter_log.json").read_text())
    assert log["kept"] == 2
    assert log["removed_excluded"] == 2  # Apple + Uber
    assert log["removed_short"] == 2
    corpus = (workdir / "corpus.csv").read_text()
    assert "EasyMile" in corpus and "Apple" not in corpus


def test_filter_rerun_is_byte_identical(workdir):
    manifest = write_manifest(workdir)
    run(["ingest", "--manifest", manifest, "--cache", workdir / "cache"])
    run(["filter"])
    first = (workdir / "corpus.csv").read_bytes(), (workdir / "filter_log.json").read_bytes()
    run(["filter"])
    second = (workdir / "corpus.csv").read_bytes(), (workdir / "filter_log.json").read_bytes()
    assert first == second


def test_annotate_export(workdir):
    manifest = write_manifest(workdir)
    run(["ingest", "--manifest", manifest, "--cache", workdir / "cache"])
    run(["filter"])
    assert run(["annotate-export"]) == 0
    tasks = list(read_sentences(workdir / "tasks.jsonl"))
    assert len(tasks) == 2
    assert all("tokens" in t and "report_id" in t for t in tasks)


def test_aggregate_command(workdir):
    manifest = write_manifest(workdir)
    run(["ingest", "--manifest", manifest, "--cache", workdir / "cache"])
    run(["filter"])
    run(["annotate-export"])
    tasks = list(read_sentences(workdir / "tasks.jsonl"))
    rows = []
    for task in tasks:
        for worker in ("w0", "w1", "w2"):
            rows.append({
                "report_id": task["report_id"],
                "worker_id": worker,
                "tokens": task["tokens"],
                "tags": ["O"] * len(task["tokens"]),
            })
    write_sentences(workdir / "annotations.jsonl", rows)
    assert run(["aggregate"]) == 0
    truth = list(read_sentences(workdir / "truth.jsonl"))
    assert len(truth) == 2
    assert all(set(t["tags"]) == {"O"} for t in truth)
    quality = json.loads((workdir / "quality.json").read_text())
    assert quality["converged"] is True
    assert all(v == 1.0 for v in quality["wqs"].values())


def gold_file(workdir, n=60, seed=5) -> Path:
    corpus = generate_synthetic_corpus(n, seed=seed)
    path = workdir / "gold.jsonl"
    write_sentences(
        path,
        [{"report_id": f"g{i}", "tokens": t, "tags": g} for i, (t, g) in enumerate(corpus)],
    )
    return path


def test_train_predict_evaluate_round_trip(workdir):
    gold = gold_file(workdir)
    assert run(["train", "--gold", gold, "--approach", "EndToEnd",
                "--epochs", 5, "--seed", 1, "--out", "model.json"]) == 0
    model = json.loads((workdir / "model.json").read_text())
    assert model["tag_mode"] == "Combined55"
    assert model["seed"] == 1
    assert run(["predict", "--in", gold, "--model", "model.json",
                "--out", "pred.jsonl", "--records", "extraction.jsonl"]) == 0
    assert run(["evaluate", "--gold", gold, "--pred", "pred.jsonl",
                "--out", "eval.json"]) == 0
    eval_report = json.loads((workdir / "eval.json").read_text())
    assert eval_report["weighted_f1"] > 0.9  # training data, memorized
    assert (workdir / "extraction.jsonl").exists()


def test_train_chained_writes_both_models(workdir):
    gold = gold_file(workdir, n=40)
    assert run(["train", "--gold", gold, "--approach", "Chained",
                "--epochs", 3, "--seed", 0]) == 0
    assert json.loads((workdir / "model.json").read_text())["tag_mode"] == "Base7"
    assert (workdir / "span_classifier.json").exists()


def test_cross_validate_command(workdir):
    gold = gold_file(workdir, n=50)
    assert run(["cross-validate", "--gold", gold, "--k", 5, "--seed", 2,
                "--epochs", 3, "--tag-mode", "Base7"]) == 0
    cv = json.loads((workdir / "cv.json").read_text())
    assert len(cv["per_fold"]) == 5
    assert cv["meta"]["seed"] == 2
    table = (workdir / "cv_summary.tsv").read_text().splitlines()
    assert table[0] == "model\tweighted_f1\ttraining_time"
    assert "Base7" in table[1]


def test_predict_determinism(workdir):
    gold = gold_file(workdir, n=30)
    run(["train", "--gold", gold, "--epochs", 3, "--seed", 4, "--out", "model.json"])
    run(["predict", "--in", gold, "--model", "model.json", "--out", "p1.jsonl"])
    run(["predict", "--in", gold, "--model", "model.json", "--out", "p2.jsonl"])
    assert (workdir / "p1.jsonl").read_bytes() == (workdir / "p2.jsonl").read_bytes()


def test_exit_codes_and_json_errors(workdir, capsys):
    # missing file: I/O failure → 2
    assert run(["filter", "--in", "absent.csv"]) == 2
    # bad data: validation failure → 1
    (workdir / "bad.csv").write_text("not,a,corpus\n1,2,3\n")
    assert run(["filter", "--in", "bad.csv"]) == 1
    assert run(["--json", "filter", "--in", "bad.csv"]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert payload["error"] == "UnknownFormat"


def test_analyze_command(workdir):
    # corpus of two reports with known initiators, extraction with two causes
    (workdir / "corpus.csv").write_text(
        "id,manufacturer,date,initiator,location,description\n"
        "r1,Acme,2020-01-05,AVSystem,Street,planner faulted on ramp today\n"
        "r2,Acme,2020-02-05,TestDriver,Street,driver uncomfortable near truck merge\n"
    )
    records = [
        {"report_id": "r1", "approach": "EndToEnd", "effects": [],
         "causes": [{"start": 0, "end": 2, "text": "planner faulted", "category": 2}],
         "embedded_causes": []},
        {"report_id": "r2", "approach": "EndToEnd", "effects": [],
         "causes": [{"start": 0, "end": 2, "text": "driver uncomfortable", "category": 4}],
         "embedded_causes": []},
    ]
    with open(workdir / "extraction.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    assert run(["analyze", "--records", "extraction.jsonl", "--corpus", "corpus.csv",
                "--out-dir", "analytics"]) == 0
    for name in ("contingency_main.csv", "contingency_sub.csv", "chi_square.json",
                 "timeseries.json", "sankey.json", "wordcloud_2.json"):
        assert (workdir / "analytics" / name).exists(), name
    wc = json.loads((workdir / "analytics" / "wordcloud_2.json").read_text())
    assert {"word": "planner", "count": 1} in wc


def test_config_file_defaults_and_override(workdir):
    (workdir / "config.json").write_text(json.dumps({"min_description_words": 2}))
    manifest = write_manifest(workdir)
    run(["ingest", "--manifest", manifest, "--cache", workdir / "cache"])
    assert run(["--config", "config.json", "filter"]) == 0
    log = json.loads((workdir / "filter_log.json").read_text())
    # with the 2-word minimum nothing is short
    assert log["removed_short"] == 0
    assert run(["--config", "config.json", "filter", "--min-words", "5"]) == 0
    log = json.loads((workdir / "filter_log.json").read_text())
    assert log["removed_short"] == 2
