"""Shared fixtures: a small synthetic corpus plus trained checkpoints.

Corpus and example files are produced by the harness CLI (the only interface
this package consumes); training runs once per session.
"""
import subprocess

import pytest

from model_service.train import TrainJobSpec, train

HARNESS = "eae-harness"


def run_harness(*args: str) -> str:
    proc = subprocess.run([HARNESS, *args], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Corpus, ontology, and example files for a 50-document training set."""
    root = tmp_path_factory.mktemp("fixture")
    corpus = root / "corpus.jsonl"
    onto = root / "onto.json"
    run_harness(
        "ingest", "--adapter", "synthetic", "--docs", "50", "--seed", "1",
        "--split", "train", "--max-args-per-role", "1",
        "--out", str(corpus), "--ontology-out", str(onto),
    )
    ti_train = root / "ti_train.jsonl"
    qa_train = root / "qa_train.jsonl"
    qa_dev = root / "qa_dev.jsonl"
    run_harness("build-examples", "--method", "ti", "--mode", "train",
                "--corpus", str(corpus), "--ontology", str(onto), "--out", str(ti_train))
    run_harness("build-examples", "--method", "qa", "--mode", "train",
                "--corpus", str(corpus), "--ontology", str(onto), "--out", str(qa_train))
    run_harness("build-examples", "--method", "qa", "--mode", "infer",
                "--corpus", str(corpus), "--ontology", str(onto), "--out", str(qa_dev))
    return {
        "root": root,
        "corpus": str(corpus),
        "ontology": str(onto),
        "ti_train": str(ti_train),
        "qa_train": str(qa_train),
        "qa_dev": str(qa_dev),
    }


@pytest.fixture(scope="session")
def ti_result(workspace):
    spec = TrainJobSpec(
        method="TI",
        train_path=workspace["ti_train"],
        dev_path=workspace["ti_train"],
        dev_corpus=workspace["corpus"],
        ontology=workspace["ontology"],
        checkpoint_out=str(workspace["root"] / "ti.ckpt"),
        lr=1e-3,
        target_f1=0.9,
        seed=0,
    )
    return spec, train(spec)


@pytest.fixture(scope="session")
def qa_result(workspace):
    spec = TrainJobSpec(
        method="QA",
        train_path=workspace["qa_train"],
        dev_path=workspace["qa_dev"],
        dev_corpus=workspace["corpus"],
        ontology=workspace["ontology"],
        checkpoint_out=str(workspace["root"] / "qa.ckpt"),
        target_f1=0.9,
        seed=0,
    )
    return spec, train(spec)
