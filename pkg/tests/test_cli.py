"""End-to-end subcommand tests driven through cli.main."""
import json

import pytest

from eae_harness.cli import main
from eae_harness.corpus import load_corpus, save_corpus
from eae_harness.resources import save_ontology
from eae_harness.synth import make_fixture


@pytest.fixture
def paths(tmp_path):
    corpus, ontology = make_fixture(n_docs=10, seed=2, max_args_per_role=1)
    cpath = tmp_path / "corpus.jsonl"
    opath = tmp_path / "ontology.json"
    save_corpus(corpus, cpath)
    save_ontology(ontology, opath)
    return tmp_path, str(cpath), str(opath)


def test_ingest_synthetic_and_validate(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    onto_out = tmp_path / "o.json"
    rc = main(
        [
            "ingest", "--adapter", "synthetic", "--docs", "8", "--seed", "4",
            "--out", str(out), "--ontology-out", str(onto_out),
        ]
    )
    assert rc == 0
    assert "wrote 8 documents" in capsys.readouterr().out
    assert load_corpus(out).documents
    rc = main(["validate", str(out), "--ontology", str(onto_out)])
    assert rc == 0
    assert "OK" in capsys.readouterr().out


def test_ingest_canonical_round_trip(paths, capsys):
    tmp_path, cpath, _ = paths
    out = tmp_path / "copy.jsonl"
    rc = main(["ingest", "--adapter", "canonical", "--input", cpath, "--out", str(out)])
    assert rc == 0
    assert load_corpus(out).documents == load_corpus(cpath).documents


def test_stats(paths, capsys):
    tmp_path, cpath, opath = paths
    out = tmp_path / "stats.json"
    rc = main(["stats", cpath, "--ontology", opath, "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["events"] == 10
    assert report["event_types"] == 3


def test_lint_resources(paths, capsys):
    _, _, opath = paths
    rc = main(["lint-resources", opath])
    assert rc == 0
    assert "no errors" in capsys.readouterr().out


def test_build_examples_both_methods(paths, capsys):
    tmp_path, cpath, opath = paths
    for method in ("qa", "ti"):
        out = tmp_path / f"{method}.jsonl"
        rc = main(
            ["build-examples", "--method", method, "--mode", "train",
             "--corpus", cpath, "--ontology", opath, "--out", str(out)]
        )
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert rows
        if method == "ti":
            assert all("target_text" in r for r in rows)
        else:
            assert all("question" in r for r in rows)


def test_predict_and_evaluate_with_figure(paths, capsys):
    tmp_path, cpath, opath = paths
    run_dir = tmp_path / "run"
    rc = main(
        ["predict", "--method", "ti", "--backend", "gold-oracle",
         "--corpus", cpath, "--ontology", opath, "--out", str(run_dir)]
    )
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["f1"] == 1.0
    png = tmp_path / "per_type.png"
    csv = tmp_path / "per_type.csv"
    rc = main(
        ["evaluate", "--predictions", str(run_dir / "predictions.jsonl"),
         "--corpus", cpath, "--csv", str(csv), "--plot", str(png)]
    )
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["f1"] == 1.0
    assert csv.read_text().startswith("event_type,f1")
    assert png.stat().st_size > 0


def test_matrix_renders_table_and_heatmap(paths, capsys):
    tmp_path, cpath, opath = paths
    grid = {
        "targets": {"synth": {"corpus": cpath, "ontology": opath}},
        "cells": [
            {"method": "TI", "source": "synth", "target": "synth"},
            {"method": "QA", "source": "synth", "target": "synth"},
            {"method": "TI", "source": "other", "target": "synth",
             "backend": {"kind": "noisy-oracle", "drop_prob": 0.5, "seed": 1}},
        ],
    }
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(grid))
    out_dir = tmp_path / "matrix"
    rc = main(["matrix", "--config", str(grid_path), "--out", str(out_dir)])
    assert rc == 0
    table = (out_dir / "table.txt").read_text()
    assert "*1.00*" in table  # in-domain max bolded
    assert "_0." in table  # zero-shot max underlined
    assert (out_dir / "matrix.csv").read_text().startswith("method,source,target,f1")
    assert (out_dir / "matrix.png").stat().st_size > 0
    assert (out_dir / "table.tex").read_text().count("\\\\") >= 3
    assert json.loads((out_dir / "matrix.json").read_text())["columns"] == ["synth"]


def test_matrix_missing_cell_exit_code(paths, capsys):
    tmp_path, cpath, opath = paths
    grid = {
        "targets": {"synth": {"corpus": cpath, "ontology": opath}},
        "cells": [
            {"method": "TI", "source": "s", "target": "synth",
             "backend": {"kind": "remote", "endpoint": "127.0.0.1:1"}},
        ],
    }
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(grid))
    rc = main(["matrix", "--config", str(grid_path), "--out", str(tmp_path / "m2")])
    assert rc == 2
    assert "missing" in capsys.readouterr().err


def test_correlate_with_scatter(paths, capsys):
    tmp_path, cpath, opath = paths
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"per_event_type": {"T1": 0.9, "T2": 0.5, "T3": 0.7}}))
    b.write_text(json.dumps({"per_event_type": {"T1": 0.8, "T2": 0.4, "T3": 0.6}}))
    png = tmp_path / "scatter.png"
    rc = main(["correlate", "--in-domain", str(a), "--zero-shot", str(b), "--plot", str(png)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n_types"] == 3
    assert abs(out["rho"] - 1.0) < 1e-12
    assert png.stat().st_size > 0


def test_augment_then_build_augmented_examples(paths, capsys):
    tmp_path, cpath, opath = paths
    from eae_harness.resources import load_ontology

    ontology = load_ontology(opath)
    paras = {
        "questions": {
            et.name: {
                r.name: [f"{r.question} (alt {i})" for i in range(5)] for r in et.roles
            }
            for et in ontology.event_types
        },
        "templates": {
            et.name: [et.template.replace("took part", f"joined (v{i})") for i in range(5)]
            for et in ontology.event_types
        },
    }
    ppath = tmp_path / "paraphrases.json"
    ppath.write_text(json.dumps(paras))
    aug_out = tmp_path / "augmented.json"
    rc = main(["augment", "--ontology", opath, "--paraphrases", str(ppath), "--out", str(aug_out)])
    assert rc == 0

    plain = tmp_path / "plain.jsonl"
    augd = tmp_path / "augd.jsonl"
    for out, extra in ((plain, []), (augd, ["--augmented", str(aug_out)])):
        rc = main(
            ["build-examples", "--method", "ti", "--mode", "train",
             "--corpus", cpath, "--ontology", opath, "--out", str(out)] + extra
        )
        assert rc == 0
    assert len(augd.read_text().splitlines()) == 6 * len(plain.read_text().splitlines())


def test_emit_prompts_and_parse_replies_llm(paths, capsys):
    tmp_path, cpath, opath = paths
    prompts = tmp_path / "prompts.jsonl"
    rc = main(["emit-prompts", "--corpus", cpath, "--ontology", opath,
               "--variant", "2", "--out", str(prompts)])
    assert rc == 0
    rows = [json.loads(l) for l in prompts.read_text().splitlines()]
    assert len(rows) == 10
    assert rows[0]["payload"]["messages"][0]["role"] == "system"

    # Fabricate perfect replies from gold and score them.
    corpus = load_corpus(cpath)
    replies = []
    for row in rows:
        doc = corpus.document(row["doc_id"])
        ev = doc.events[0]
        sheet = {}
        for i, role in enumerate(row["question_order"], start=1):
            sheet[f"q{i}"] = [a.text for a in ev.arguments if a.role == role]
        replies.append({"doc_id": row["doc_id"], "event_id": row["event_id"],
                        "reply": json.dumps(sheet)})
    rpath = tmp_path / "replies.jsonl"
    rpath.write_text("\n".join(json.dumps(r) for r in replies) + "\n")
    pred_out = tmp_path / "pred.jsonl"
    rc = main(["parse-replies", "--method", "llm", "--replies", str(rpath),
               "--corpus", cpath, "--ontology", opath, "--out", str(pred_out)])
    assert rc == 0
    capsys.readouterr()
    rc = main(["evaluate", "--predictions", str(pred_out), "--corpus", cpath])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["f1"] == 1.0


def test_calibrate_from_candidates_with_plot(paths, capsys):
    tmp_path, cpath, opath = paths
    corpus = load_corpus(cpath)
    rows = []
    for doc in corpus.documents:
        ev = doc.events[0]
        for a in ev.arguments:
            rows.append(
                {
                    "doc_id": doc.doc_id,
                    "event_id": ev.event_id,
                    "role": a.role,
                    "candidates": [
                        {"start": a.span.start, "end": a.span.end, "text": a.text,
                         "confidence": 0.9},
                        {"start": 0, "end": 4, "text": doc.text[:4], "confidence": 0.2},
                    ],
                    "null_confidence": 0.05,
                }
            )
    spath = tmp_path / "cands.jsonl"
    spath.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    png = tmp_path / "sweep.png"
    out = tmp_path / "calib.json"
    rc = main(["calibrate", "--candidates", str(spath), "--corpus", cpath,
               "--out", str(out), "--plot", str(png)])
    assert rc == 0
    result = json.loads(out.read_text())
    assert len(result["sweep_table"]) == 19
    assert png.stat().st_size > 0


def test_error_reporting_is_machine_readable(tmp_path, capsys):
    rc = main(["validate", str(tmp_path / "nope.jsonl")])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert "message" in err
