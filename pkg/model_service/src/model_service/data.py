"""Loading and encoding of harness-produced example files.

The service treats example content as opaque: TI rows pair an input string
with a target string; QA rows pair an input string with character-offset span
targets into the document region. The only structural assumption is the
harness's declared input assembly (question + "\\n" + marked document), used
to locate the document region when a request carries no explicit offset.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .vocab import Vocab, tokenize

SEPARATOR = "\n"


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out


def doc_region_start(input_text: str) -> int:
    """Where the marked document begins: right after the first separator."""
    idx = input_text.find(SEPARATOR)
    return idx + len(SEPARATOR) if idx >= 0 else 0


@dataclass(frozen=True)
class QAEncoding:
    """One QA instance mapped to model positions.

    ids has BOS at position 0; doc_positions[k] is the model position of the
    k-th document-region token, so wire index k+1 corresponds to it (wire
    index 0 is BOS/null). token_offsets are (start, end) character offsets of
    those tokens relative to the document region.
    """
    ids: list[int]
    doc_positions: list[int]
    token_offsets: list[tuple[int, int]]
    start_label: Optional[int] = None  # model position
    end_label: Optional[int] = None


def encode_qa(
    vocab: Vocab,
    input_text: str,
    region: Optional[int] = None,
    target: Optional[tuple[int, int]] = None,
    is_null: bool = False,
) -> Optional[QAEncoding]:
    """Encode one QA input; with a target, attach start/end position labels.

    Returns None when a span target does not align to token boundaries (the
    example is unusable for training).
    """
    if region is None:
        region = doc_region_start(input_text)
    tokens = tokenize(input_text)
    ids = [vocab.bos_id] + vocab.encode(t for t, _, _ in tokens)
    doc_positions = []
    token_offsets = []
    start_label = end_label = None
    if is_null:
        start_label = end_label = 0
    for i, (_, s, e) in enumerate(tokens):
        if s < region:
            continue
        doc_positions.append(i + 1)
        token_offsets.append((s - region, e - region))
        if target is not None:
            ts, te = target
            if s - region == ts:
                start_label = i + 1
            if e - region == te:
                end_label = i + 1
    if target is not None and (start_label is None or end_label is None):
        return None
    return QAEncoding(
        ids=ids,
        doc_positions=doc_positions,
        token_offsets=token_offsets,
        start_label=start_label,
        end_label=end_label,
    )


def encode_seq2seq(vocab: Vocab, input_text: str, target_text: str) -> tuple[list[int], list[int]]:
    """(source ids, target ids with BOS...EOS) for one TI training pair."""
    src = [vocab.bos_id] + vocab.encode(t for t, _, _ in tokenize(input_text)) + [vocab.eos_id]
    tgt = [vocab.bos_id] + vocab.encode(t for t, _, _ in tokenize(target_text)) + [vocab.eos_id]
    return src, tgt
