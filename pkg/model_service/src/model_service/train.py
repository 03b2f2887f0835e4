"""Training loops for the two methods, with early stopping on dev argument F1.

Dev F1 is never computed here: each epoch the model's dev outputs are written
to disk and the harness CLI is invoked to decode and score them (and, for QA,
to calibrate the acceptance threshold). This keeps a single source of truth
for template parsing, span selection, and the metric.
"""
from __future__ import annotations

import json
import logging
import random
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .data import encode_qa, encode_seq2seq, read_jsonl
from .models import ModelConfig, Seq2SeqModel, SpanScorerModel
from .vocab import Vocab, build_vocab

logger = logging.getLogger(__name__)

METHODS = ("TI", "QA")
DEFAULT_BATCH = {"TI": 8, "QA": 32}


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainJobSpec:
    method: str  # TI | QA
    train_path: str  # harness build-examples output (train mode)
    dev_path: str  # harness build-examples output (TI train mode / QA infer mode)
    dev_corpus: str  # canonical corpus JSONL used for dev scoring
    ontology: str
    checkpoint_out: str
    max_epochs: int = 50
    patience: int = 10
    batch_size: Optional[int] = None
    seed: int = 0
    lr: float = 3e-4
    target_f1: Optional[float] = None  # optional stop-early bar
    model: ModelConfig = field(default_factory=ModelConfig)
    harness_cmd: tuple[str, ...] = ("eae-harness",)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")

    @property
    def effective_batch_size(self) -> int:
        return self.batch_size or DEFAULT_BATCH[self.method]


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: str
    log_path: str
    epochs_ran: int
    best_dev_f1: float


def _pad(seqs: Sequence[Sequence[int]], pad_id: int) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([list(s) + [pad_id] * (width - len(s)) for s in seqs], dtype=torch.long)


def _harness(spec: TrainJobSpec, *args: str) -> str:
    proc = subprocess.run(
        [*spec.harness_cmd, *args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise TrainError(f"harness call {args[0]!r} failed: {proc.stderr.strip()}")
    return proc.stdout


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def save_checkpoint(path: str, method: str, vocab: Vocab, config: ModelConfig, model: nn.Module) -> None:
    torch.save(
        {
            "method": method,
            "vocab_itos": list(vocab.itos),
            "model_config": config.to_dict(),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str) -> tuple[str, Vocab, nn.Module]:
    raw = torch.load(path, map_location="cpu", weights_only=False)
    vocab = Vocab(itos=tuple(raw["vocab_itos"]))
    config = ModelConfig(**raw["model_config"])
    model = (Seq2SeqModel if raw["method"] == "TI" else SpanScorerModel)(vocab, config)
    model.load_state_dict(raw["state_dict"])
    model.eval()
    return raw["method"], vocab, model


# ---------------------------------------------------------------------------
# Dev evaluation through the harness CLI
# ---------------------------------------------------------------------------

@torch.no_grad()
def ti_dev_replies(model: Seq2SeqModel, vocab: Vocab, dev_rows: list[dict]) -> list[dict]:
    out = []
    for row in dev_rows:
        src, _ = encode_seq2seq(vocab, row["input_text"], "")
        ids = model.greedy_decode(src, max_new_tokens=96)
        out.append(
            {
                "doc_id": row["doc_id"],
                "event_id": row["event_id"],
                "output_text": " ".join(vocab.decode(ids)),
            }
        )
    return out


@torch.no_grad()
def qa_dev_scores(model: SpanScorerModel, vocab: Vocab, dev_rows: list[dict]) -> list[dict]:
    out = []
    for row in dev_rows:
        enc = encode_qa(vocab, row["input_text"], region=row["doc_region_start"])
        ids = torch.tensor([enc.ids], dtype=torch.long)
        keep = torch.zeros_like(ids, dtype=torch.bool)
        keep[0, 0] = True
        keep[0, enc.doc_positions] = True
        start_logits, end_logits = model(ids, keep)
        positions = [0] + enc.doc_positions
        start = torch.softmax(start_logits[0, positions], dim=-1).tolist()
        end = torch.softmax(end_logits[0, positions], dim=-1).tolist()
        out.append(
            {
                "doc_id": row["doc_id"],
                "event_id": row["event_id"],
                "role": row["role"],
                "start_probs": start,
                "end_probs": end,
                "token_offsets": [[0, 0]] + [list(t) for t in enc.token_offsets],
            }
        )
    return out


def _evaluate_dev(spec: TrainJobSpec, model, vocab: Vocab, dev_rows: list[dict], workdir: Path) -> tuple[float, Optional[float]]:
    """(dev F1, t_dev or None) for the current model, scored by the harness."""
    pred_path = workdir / "dev_pred.jsonl"
    t_dev = None
    if spec.method == "TI":
        replies = workdir / "dev_replies.jsonl"
        _write_jsonl(replies, ti_dev_replies(model, vocab, dev_rows))
        _harness(
            spec, "parse-replies", "--method", "ti", "--replies", str(replies),
            "--corpus", spec.dev_corpus, "--ontology", spec.ontology, "--out", str(pred_path),
        )
    else:
        scores = workdir / "dev_scores.jsonl"
        _write_jsonl(scores, qa_dev_scores(model, vocab, dev_rows))
        calib = json.loads(
            _harness(spec, "calibrate", "--scores", str(scores), "--corpus", spec.dev_corpus)
        )
        t_dev = calib["t_dev"]
        _harness(
            spec, "parse-replies", "--method", "qa", "--replies", str(scores),
            "--corpus", spec.dev_corpus, "--ontology", spec.ontology,
            "--t-dev", str(t_dev), "--out", str(pred_path),
        )
    report = json.loads(
        _harness(spec, "evaluate", "--predictions", str(pred_path), "--corpus", spec.dev_corpus)
    )
    return report["f1"], t_dev


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _train_epoch_ti(model, vocab, pairs, optimizer, rng, batch_size) -> float:
    model.train()
    loss_fn = nn.CrossEntropyLoss(ignore_index=vocab.pad_id)
    order = list(range(len(pairs)))
    rng.shuffle(order)
    total = 0.0
    steps = 0
    for i in range(0, len(order), batch_size):
        batch = [pairs[j] for j in order[i : i + batch_size]]
        src = _pad([b[0] for b in batch], vocab.pad_id)
        tgt = _pad([b[1] for b in batch], vocab.pad_id)
        logits = model(src, tgt[:, :-1])
        loss = loss_fn(logits.reshape(-1, logits.size(-1)), tgt[:, 1:].reshape(-1))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        total += float(loss)
        steps += 1
    return total / max(steps, 1)


def _train_epoch_qa(model, vocab, encodings, optimizer, rng, batch_size) -> float:
    model.train()
    loss_fn = nn.CrossEntropyLoss()
    order = list(range(len(encodings)))
    rng.shuffle(order)
    total = 0.0
    steps = 0
    for i in range(0, len(order), batch_size):
        batch = [encodings[j] for j in order[i : i + batch_size]]
        ids = _pad([b.ids for b in batch], vocab.pad_id)
        keep = torch.zeros_like(ids, dtype=torch.bool)
        starts = torch.tensor([b.start_label for b in batch], dtype=torch.long)
        ends = torch.tensor([b.end_label for b in batch], dtype=torch.long)
        for r, b in enumerate(batch):
            keep[r, 0] = True
            keep[r, b.doc_positions] = True
        start_logits, end_logits = model(ids, keep)
        # Average of the start and end cross-entropy losses.
        loss = 0.5 * (loss_fn(start_logits, starts) + loss_fn(end_logits, ends))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        total += float(loss)
        steps += 1
    return total / max(steps, 1)


def train(spec: TrainJobSpec) -> TrainResult:
    torch.manual_seed(spec.seed)
    rng = random.Random(spec.seed)
    train_rows = read_jsonl(spec.train_path)
    dev_rows = read_jsonl(spec.dev_path)
    if not train_rows:
        raise TrainError(f"no training examples in {spec.train_path}")

    log_path = Path(spec.checkpoint_out).with_suffix(".log")
    log_lines: list[str] = []

    def log(msg: str) -> None:
        logger.info(msg)
        log_lines.append(msg)

    if spec.method == "TI":
        vocab = build_vocab(
            [r["input_text"] for r in train_rows] + [r["target_text"] for r in train_rows]
        )
        model = Seq2SeqModel(vocab, spec.model)
        pairs = [encode_seq2seq(vocab, r["input_text"], r["target_text"]) for r in train_rows]
        data = pairs
        epoch_fn = _train_epoch_ti
    else:
        vocab = build_vocab(r["input_text"] for r in train_rows)
        model = SpanScorerModel(vocab, spec.model)
        enc = []
        skipped = 0
        for r in train_rows:
            target = None
            if r.get("target_start") is not None:
                target = (r["target_start"], r["target_end"])
            e = encode_qa(
                vocab, r["input_text"], region=r["doc_region_start"],
                target=target, is_null=r.get("is_null", False),
            )
            if e is None:
                skipped += 1
                continue
            enc.append(e)
        if skipped:
            log(f"skipped {skipped} example(s) with unaligned span targets")
        if not enc:
            raise TrainError("no usable QA training examples after alignment")
        data = enc
        epoch_fn = _train_epoch_qa

    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.lr)
    batch_size = spec.effective_batch_size
    log(
        f"training method={spec.method} examples={len(data)} dev={len(dev_rows)} "
        f"batch_size={batch_size} max_epochs={spec.max_epochs} patience={spec.patience} "
        f"seed={spec.seed}"
    )

    best_f1 = -1.0
    stale = 0
    epochs_ran = 0
    with tempfile.TemporaryDirectory(prefix="model-service-dev-") as tmp:
        workdir = Path(tmp)
        for epoch in range(1, spec.max_epochs + 1):
            epochs_ran = epoch
            loss = epoch_fn(model, vocab, data, optimizer, rng, batch_size)
            dev_f1, t_dev = _evaluate_dev(spec, model, vocab, dev_rows, workdir)
            line = f"epoch={epoch} train_loss={loss:.4f} dev_f1={dev_f1:.4f}"
            if t_dev is not None:
                line += f" t_dev={t_dev:.4f}"
            log(line)
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                stale = 0
                save_checkpoint(spec.checkpoint_out, spec.method, vocab, spec.model, model)
                log(f"epoch={epoch} new best dev_f1={best_f1:.4f}, checkpoint saved")
            else:
                stale += 1
            if spec.target_f1 is not None and best_f1 >= spec.target_f1:
                log(f"epoch={epoch} target dev_f1 {spec.target_f1} reached, stopping")
                break
            if stale >= spec.patience:
                log(f"epoch={epoch} early stopping: no dev_f1 improvement in {spec.patience} epochs")
                break
    log(f"done: best dev_f1={best_f1:.4f} after {epochs_ran} epoch(s)")
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return TrainResult(
        checkpoint_path=spec.checkpoint_out,
        log_path=str(log_path),
        epochs_ran=epochs_ran,
        best_dev_f1=best_f1,
    )
