"""Extractive-QA reformulation: example construction, span decoding from
start/end probability vectors, argument selection, and threshold calibration.

Position 0 of the score vectors is reserved for the null answer; a role with
no arguments targets (0, 0). Candidate confidence is the product of the start
and end probabilities, which keeps it in [0, 1] and comparable with the null
confidence. The effective acceptance threshold at inference is
max(t_dev, null_confidence), strict.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .corpus import ArgumentMention, Corpus, Span, mark_trigger
from .metrics import PredictionSet, argument_f1
from .resources import Ontology

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-6
PERCENTILE_POINTS = tuple(range(5, 100, 5))  # 5, 10, ..., 95


class DecodeError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class QAConfig:
    k: int = 5
    max_span_tokens: int = 30
    open_marker: str = "<trigger>"
    close_marker: str = "</trigger>"
    separator: str = "\n"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_span_tokens < 1:
            raise ValueError("max_span_tokens must be >= 1")


@dataclass(frozen=True)
class QAExample:
    """One QA instance. input_text is question + separator + trigger-marked
    document; doc_region_start is where the marked document begins within it.
    Targets are character offsets into the marked document."""
    example_id: str
    doc_id: str
    event_id: str
    role: str
    question: str
    input_text: str
    doc_region_start: int
    target: Optional[tuple[int, int]] = None
    is_null: bool = False

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "doc_id": self.doc_id,
            "event_id": self.event_id,
            "role": self.role,
            "question": self.question,
            "input_text": self.input_text,
            "doc_region_start": self.doc_region_start,
            "target_start": self.target[0] if self.target else None,
            "target_end": self.target[1] if self.target else None,
            "is_null": self.is_null,
        }


@dataclass(frozen=True)
class SpanCandidate:
    char_span: Span
    text: str
    confidence: float


@dataclass(frozen=True)
class ExampleCandidates:
    """Decoded candidates for one (doc, event, role), plus null confidence."""
    doc_id: str
    event_id: str
    role: str
    candidates: tuple[SpanCandidate, ...]
    null_confidence: float


@dataclass(frozen=True)
class CalibrationResult:
    t_dev: float
    best_f1: float
    sweep_table: tuple[tuple[float, float], ...]  # (threshold, dev F1), 19 rows

    def to_dict(self) -> dict:
        return {
            "t_dev": self.t_dev,
            "best_f1": self.best_f1,
            "sweep_table": [{"threshold": t, "f1": f} for t, f in self.sweep_table],
        }


def _assemble_input(question: str, marked_doc: str, config: QAConfig) -> tuple[str, int]:
    prefix = question + config.separator
    return prefix + marked_doc, len(prefix)


def build_training_examples(
    corpus: Corpus, ontology: Ontology, config: QAConfig = QAConfig()
) -> list[QAExample]:
    """One example per gold argument mention (positive) plus exactly one
    null-target example per role with zero gold arguments.

    Arguments lacking character offsets are excluded with a warning.
    """
    out: list[QAExample] = []
    for doc in corpus.documents:
        for ev in doc.events:
            etype = ontology.get(ev.event_type)
            if etype is None:
                raise ValueError(f"event type {ev.event_type!r} not in ontology {ontology.ontology_id!r}")
            marked, omap = mark_trigger(doc, ev, config.open_marker, config.close_marker)
            by_role: dict[str, list[ArgumentMention]] = {}
            for a in ev.arguments:
                by_role.setdefault(a.role, []).append(a)
            for role_def in etype.roles:
                args = by_role.get(role_def.name, [])
                input_text, region = _assemble_input(role_def.question, marked, config)
                base = f"{doc.doc_id}::{ev.event_id}::{role_def.name}"
                positives = 0
                for i, a in enumerate(args):
                    if a.span is None:
                        logger.warning(
                            "skipping offset-less argument: doc=%s event=%s role=%s text=%r",
                            doc.doc_id, ev.event_id, a.role, a.text,
                        )
                        continue
                    tgt = omap.span_to_marked(a.span.start, a.span.end)
                    out.append(
                        QAExample(
                            example_id=f"{base}::a{i}",
                            doc_id=doc.doc_id,
                            event_id=ev.event_id,
                            role=role_def.name,
                            question=role_def.question,
                            input_text=input_text,
                            doc_region_start=region,
                            target=tgt,
                        )
                    )
                    positives += 1
                if not args:
                    out.append(
                        QAExample(
                            example_id=f"{base}::null",
                            doc_id=doc.doc_id,
                            event_id=ev.event_id,
                            role=role_def.name,
                            question=role_def.question,
                            input_text=input_text,
                            doc_region_start=region,
                            target=None,
                            is_null=True,
                        )
                    )
    return out


def build_inference_examples(
    corpus: Corpus, ontology: Ontology, config: QAConfig = QAConfig()
) -> list[QAExample]:
    """Exactly one target-less example per (document, event, role), roles in
    ontology order."""
    out: list[QAExample] = []
    for doc in corpus.documents:
        for ev in doc.events:
            etype = ontology.get(ev.event_type)
            if etype is None:
                raise ValueError(f"event type {ev.event_type!r} not in ontology {ontology.ontology_id!r}")
            marked, _ = mark_trigger(doc, ev, config.open_marker, config.close_marker)
            for role_def in etype.roles:
                input_text, region = _assemble_input(role_def.question, marked, config)
                out.append(
                    QAExample(
                        example_id=f"{doc.doc_id}::{ev.event_id}::{role_def.name}",
                        doc_id=doc.doc_id,
                        event_id=ev.event_id,
                        role=role_def.name,
                        question=role_def.question,
                        input_text=input_text,
                        doc_region_start=region,
                    )
                )
    return out


def _check_probs(name: str, probs: Sequence[float]) -> None:
    total = sum(probs)
    if not math.isclose(total, 1.0, abs_tol=PROB_TOLERANCE):
        raise DecodeError(f"{name} sums to {total}, not 1 within {PROB_TOLERANCE}")


def decode_spans(
    start_probs: Sequence[float],
    end_probs: Sequence[float],
    token_offsets: Sequence[tuple[int, int]],
    doc_text: str,
    config: QAConfig = QAConfig(),
) -> tuple[list[SpanCandidate], float]:
    """Top-k span candidates plus the null confidence.

    Scores every (i, j) with 1 <= i <= j < L and span length at most
    max_span_tokens as start_probs[i] * end_probs[j]; candidates are
    deduplicated by extracted string, keeping the highest score, and returned
    in descending confidence. Position 0 is the null answer:
    null_confidence = start_probs[0] * end_probs[0].
    """
    L = len(start_probs)
    if L < 1:
        raise DecodeError("empty probability vectors")
    if len(end_probs) != L or len(token_offsets) != L:
        raise DecodeError(
            f"length mismatch: start={L} end={len(end_probs)} offsets={len(token_offsets)}"
        )
    _check_probs("start_probs", start_probs)
    _check_probs("end_probs", end_probs)
    for prev, cur in zip(token_offsets, token_offsets[1:]):
        if cur[0] < prev[0]:
            raise DecodeError("token_offsets not monotone nondecreasing")

    best: dict[str, tuple[float, int, int]] = {}
    for i in range(1, L):
        for j in range(i, min(i + config.max_span_tokens, L)):
            score = start_probs[i] * end_probs[j]
            cs, ce = token_offsets[i][0], token_offsets[j][1]
            text = doc_text[cs:ce]
            prev = best.get(text)
            if prev is None or score > prev[0]:
                best[text] = (score, cs, ce)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[1][2]))
    candidates = [
        SpanCandidate(char_span=Span(cs, ce, text), text=text, confidence=score)
        for text, (score, cs, ce) in ranked[: config.k]
    ]
    null_confidence = start_probs[0] * end_probs[0]
    return candidates, null_confidence


def select_arguments(
    candidates: Sequence[SpanCandidate],
    null_confidence: float,
    t_dev: float,
    role: str,
    k: int = 5,
) -> list[ArgumentMention]:
    """Keep candidates whose confidence strictly exceeds
    max(t_dev, null_confidence), at most k."""
    cutoff = max(t_dev, null_confidence)
    kept = [c for c in candidates if c.confidence > cutoff][:k]
    return [ArgumentMention(role=role, text=c.text, span=c.char_span) for c in kept]


def predictions_from_candidates(
    per_example: Sequence[ExampleCandidates],
    t_dev: float,
    config: QAConfig = QAConfig(),
    method: str = "QA",
    backend_id: str = "",
) -> PredictionSet:
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    for ex in per_example:
        mentions = select_arguments(ex.candidates, ex.null_confidence, t_dev, ex.role, k=config.k)
        entries.setdefault((ex.doc_id, ex.event_id), {})[ex.role] = tuple(m.text for m in mentions)
    return PredictionSet(entries=entries, method=method, backend_id=backend_id)


def nearest_rank_percentile(sorted_values: Sequence[float], pct: int) -> float:
    """Nearest-rank percentile over an ascending-sorted nonempty sequence."""
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100 * n))
    return sorted_values[rank - 1]


def calibrate_threshold(
    dev_candidates: Sequence[ExampleCandidates],
    gold: Corpus,
    config: QAConfig = QAConfig(),
) -> CalibrationResult:
    """Sweep thresholds at the 5th..95th percentiles (steps of 5) of the
    pooled candidate confidences; pick the threshold with the highest dev
    argument F1, breaking ties toward the larger threshold."""
    if not dev_candidates:
        raise CalibrationError("no dev candidates")
    pool = sorted(c.confidence for ex in dev_candidates for c in ex.candidates)
    if not pool:
        raise CalibrationError("empty candidate pool")
    sweep: list[tuple[float, float]] = []
    best_t = None
    best_f1 = -1.0
    for pct in PERCENTILE_POINTS:
        t = nearest_rank_percentile(pool, pct)
        preds = predictions_from_candidates(dev_candidates, t, config)
        f1 = argument_f1(preds, gold).f1
        sweep.append((t, f1))
        if f1 >= best_f1:  # ties resolve toward the larger (later) threshold
            best_f1 = f1
            best_t = t
    return CalibrationResult(t_dev=best_t, best_f1=best_f1, sweep_table=tuple(sweep))
