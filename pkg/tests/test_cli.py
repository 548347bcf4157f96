"""CLI: exit codes, file outputs, determinism, and the crat/direct contrast
over the scripted demo workspace."""

from __future__ import annotations

import json

import pytest

from crat import fixtures
from crat.cli import main

EN_ZH_ARGS = ["--source-lang", "en", "--target-lang", "zh"]


@pytest.fixture
def demo(tmp_path):
    root = tmp_path / "demo"
    fixtures.write_demo_workspace(root)
    return root


def run_cli(*args) -> int:
    return main([str(a) for a in args])


def translate(demo, out, *extra) -> int:
    return run_cli("translate", "--config", demo / "config.yaml",
                   "--input", demo / "inputs.jsonl",
                   "--output", out, *EN_ZH_ARGS, *extra)


# --- translate -----------------------------------------------------------------


def test_translate_single_text(demo, tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--text", fixtures.GEOGRAPHIC_SOURCE, "--doc-id", "geo-1",
                   "--output", out, *EN_ZH_ARGS)
    assert code == 0
    assert (out / "geo-1" / "result.json").is_file()
    assert (out / "geo-1" / "graph.json").is_file()
    assert (out / "geo-1" / "transcript.json").is_file()
    assert (out / "manifest.jsonl").is_file()
    assert "translated 1/1" in capsys.readouterr().out


def test_crat_vs_direct_differ(demo, tmp_path):
    crat_out = tmp_path / "crat"
    direct_out = tmp_path / "direct"
    assert translate(demo, crat_out, "--mode", "crat") == 0
    assert translate(demo, direct_out, "--mode", "direct") == 0
    crat_result = json.loads((crat_out / "geo-1" / "result.json").read_text("utf-8"))
    direct_result = json.loads((direct_out / "geo-1" / "result.json").read_text("utf-8"))
    assert fixtures.RIVERBANK in crat_result["target_text"]
    assert fixtures.RIVERBANK not in direct_result["target_text"]
    assert fixtures.FINANCIAL_BANK in direct_result["target_text"]


def test_translate_missing_input(demo, tmp_path, capsys):
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--input", tmp_path / "nope.jsonl",
                   "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_translate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("backends:\n  registrations: []\n  mystery_key: 1\n")
    code = run_cli("translate", "--config", bad, "--text", "x",
                   "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 1
    assert "mystery_key" in capsys.readouterr().err


def test_translate_missing_index_file(demo, tmp_path, capsys):
    (demo / "index.json").unlink()
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--text", "x", "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 1
    assert "index file not found" in capsys.readouterr().err


def test_translate_partial_batch_failure(demo, tmp_path, capsys):
    corpus = tmp_path / "mixed.jsonl"
    corpus.write_text(
        json.dumps({"id": "ok-1", "text": fixtures.FINANCIAL_SOURCE}) + "\n"
        + json.dumps({"id": "bad-1", "text": "   "}) + "\n")
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--input", corpus, "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 2
    err = capsys.readouterr().err
    assert "bad-1" in err


def test_translate_total_failure_is_fatal(demo, tmp_path):
    corpus = tmp_path / "allbad.jsonl"
    corpus.write_text(json.dumps({"id": "bad-1", "text": " "}) + "\n")
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--input", corpus, "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 1


def test_translate_malformed_corpus_line(demo, tmp_path, capsys):
    corpus = tmp_path / "broken.jsonl"
    corpus.write_text('{"id": "a", "text": "fine"}\n{oops\n')
    code = run_cli("translate", "--config", demo / "config.yaml",
                   "--input", corpus, "--output", tmp_path / "out", *EN_ZH_ARGS)
    assert code == 1
    assert ":2" in capsys.readouterr().err


def test_cli_determinism(demo, tmp_path):
    out1, out2 = tmp_path / "one", tmp_path / "two"
    assert translate(demo, out1, "--no-cache") == 0
    assert translate(demo, out2, "--no-cache") == 0
    for doc_id in ("geo-1", "fin-1"):
        for name in ("result.json", "graph.json", "transcript.json"):
            assert ((out1 / doc_id / name).read_bytes()
                    == (out2 / doc_id / name).read_bytes())


# --- build-index ---------------------------------------------------------------


def test_build_index_counts(demo, tmp_path, capsys):
    out = tmp_path / "index.json"
    code = run_cli("build-index", "--corpus", demo / "corpus.jsonl", "--output", out)
    assert code == 0
    assert out.is_file()
    assert "indexed 3 document(s)" in capsys.readouterr().out


def test_build_index_empty_corpus_warns(tmp_path, capsys):
    corpus = tmp_path / "empty.jsonl"
    corpus.write_text("")
    code = run_cli("build-index", "--corpus", corpus, "--output", tmp_path / "i.json")
    assert code == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    assert "indexed 0 document(s)" in captured.out


def test_build_index_malformed_line(tmp_path, capsys):
    corpus = tmp_path / "bad.jsonl"
    corpus.write_text('{"id": "a", "text": "x"}\nnot json\n')
    code = run_cli("build-index", "--corpus", corpus, "--output", tmp_path / "i.json")
    assert code == 1
    assert ":2" in capsys.readouterr().err


# --- evaluate -----------------------------------------------------------------


def test_evaluate_single_results_dir(demo, tmp_path, capsys):
    out = tmp_path / "out"
    assert translate(demo, out) == 0
    report_path = tmp_path / "report.json"
    code = run_cli("evaluate", "--results", out, "--corpus", demo / "parallel.jsonl",
                   "--config", demo / "config.yaml", "--report", report_path)
    assert code == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["candidate"]["bleu"] == 100.0
    assert report["candidate"]["consis"] == 85.0
    assert report["candidate"]["term_consistency"] == 1.0
    assert "bleu: 100.000" in capsys.readouterr().out


def test_evaluate_comparison(demo, tmp_path, capsys):
    crat_out, direct_out = tmp_path / "crat", tmp_path / "direct"
    assert translate(demo, crat_out, "--mode", "crat") == 0
    assert translate(demo, direct_out, "--mode", "direct") == 0
    report_path = tmp_path / "report.json"
    code = run_cli("evaluate", "--results", crat_out, "--baseline", direct_out,
                   "--corpus", demo / "parallel.jsonl",
                   "--config", demo / "config.yaml", "--report", report_path)
    assert code == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["candidate"]["bleu"] == 100.0
    assert report["baseline"]["bleu"] < 100.0
    rows = {r["metric"]: r for r in report["comparison"]["rows"]}
    assert rows["bleu"]["delta"] > 0
    out = capsys.readouterr().out
    assert "metric" in out and "delta" in out


def test_evaluate_empty_results_dir(demo, tmp_path, capsys):
    empty = tmp_path / "results"
    empty.mkdir()
    code = run_cli("evaluate", "--results", empty, "--corpus", demo / "parallel.jsonl",
                   "--config", demo / "config.yaml", "--report", tmp_path / "r.json")
    assert code == 1
    assert "no results" in capsys.readouterr().err


def test_evaluate_id_mismatch_lists_ids(demo, tmp_path, capsys):
    out = tmp_path / "out"
    assert translate(demo, out) == 0
    corpus = tmp_path / "other.jsonl"
    corpus.write_text(json.dumps({
        "id": "stranger", "source_text": "x", "reference_text": "y",
        "source_lang": "en", "target_lang": "zh"}) + "\n")
    code = run_cli("evaluate", "--results", out, "--corpus", corpus,
                   "--config", demo / "config.yaml", "--report", tmp_path / "r.json")
    assert code == 1
    assert "stranger" in capsys.readouterr().err


def test_evaluate_external_scores(demo, tmp_path):
    out = tmp_path / "out"
    assert translate(demo, out) == 0
    scores = tmp_path / "scores.jsonl"
    scores.write_text(json.dumps({"id": "geo-1", "score": 0.9}) + "\n"
                      + json.dumps({"id": "fin-1", "score": 0.7}) + "\n")
    report_path = tmp_path / "report.json"
    code = run_cli("evaluate", "--results", out, "--corpus", demo / "parallel.jsonl",
                   "--config", demo / "config.yaml", "--report", report_path,
                   "--external-scores", scores)
    assert code == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["candidate"]["external_score"] == pytest.approx(0.8)


# --- inspect-kg ---------------------------------------------------------------


def test_inspect_kg_filtered(demo, tmp_path, capsys):
    out = tmp_path / "out"
    assert translate(demo, out) == 0
    capsys.readouterr()  # discard translate output
    code = run_cli("inspect-kg", "--transcript", out / "fin-1", "--term", "Scotia")
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["term"] == "Scotia"
    assert all("Scotia" in t["term_keys"] for t in printed["triples"])
    spo = [(t["subject"], t["relation"], t["object"]) for t in printed["triples"]]
    assert ("Scotia", "is a", "bank") in spo


def test_inspect_kg_whole_graph(demo, tmp_path, capsys):
    out = tmp_path / "out"
    assert translate(demo, out) == 0
    capsys.readouterr()  # discard translate output
    code = run_cli("inspect-kg", "--transcript", out / "geo-1")
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert set(printed["nodes"]) == {"bank", "Scotia"}
    assert printed["accepted_docs"] == ["d-scotiasea"]


def test_inspect_kg_unknown_dir(tmp_path, capsys):
    code = run_cli("inspect-kg", "--transcript", tmp_path / "missing")
    assert code == 1
    assert "no graph file" in capsys.readouterr().err
