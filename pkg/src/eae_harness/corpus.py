"""Canonical annotated-corpus data model, JSONL I/O, validation, and trigger marking.

The canonical interchange format is JSONL with one document per line and
character offsets counted in Unicode scalar values. Upstream dataset formats
are handled through the adapter interface in :mod:`eae_harness.adapters`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

VALID_SPLITS = ("train", "dev", "test")


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


@dataclass(frozen=True)
class Span:
    """A character extent [start, end) plus its surface string."""
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class ArgumentMention:
    role: str
    text: str
    span: Optional[Span] = None


@dataclass(frozen=True)
class EventInstance:
    event_id: str
    event_type: str
    trigger: Span
    arguments: tuple[ArgumentMention, ...] = ()


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    events: tuple[EventInstance, ...] = ()
    split: str = "train"


@dataclass(frozen=True)
class Corpus:
    dataset_id: str
    ontology_id: str
    documents: tuple[Document, ...] = ()

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)

    def restrict_split(self, split: str) -> "Corpus":
        return Corpus(
            dataset_id=self.dataset_id,
            ontology_id=self.ontology_id,
            documents=tuple(d for d in self.documents if d.split == split),
        )


@dataclass(frozen=True)
class Violation:
    """A machine-readable validation finding. Violations are data, not failures."""
    code: str
    message: str
    doc_id: str = ""
    event_id: str = ""
    role: str = ""


@dataclass(frozen=True)
class StatsReport:
    event_type_count: int
    role_type_count: int
    event_count: int
    argument_count: int
    doc_level: bool


# ---------------------------------------------------------------------------
# JSONL (de)serialization
# ---------------------------------------------------------------------------

def _span_to_dict(s: Span) -> dict:
    return {"start": s.start, "end": s.end, "text": s.text}


def _arg_to_dict(a: ArgumentMention) -> dict:
    d: dict = {"role": a.role, "text": a.text}
    if a.span is not None:
        d["start"] = a.span.start
        d["end"] = a.span.end
    return d


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "split": doc.split,
        "events": [
            {
                "event_id": e.event_id,
                "event_type": e.event_type,
                "trigger": _span_to_dict(e.trigger),
                "arguments": [_arg_to_dict(a) for a in e.arguments],
            }
            for e in doc.events
        ],
    }


def document_from_dict(raw: dict) -> Document:
    events = []
    for ev in raw.get("events", []):
        trig = ev["trigger"]
        args = []
        for a in ev.get("arguments", []):
            span = None
            if a.get("start") is not None and a.get("end") is not None:
                span = Span(a["start"], a["end"], a["text"])
            args.append(ArgumentMention(role=a["role"], text=a["text"], span=span))
        events.append(
            EventInstance(
                event_id=ev["event_id"],
                event_type=ev["event_type"],
                trigger=Span(trig["start"], trig["end"], trig["text"]),
                arguments=tuple(args),
            )
        )
    return Document(
        doc_id=raw["doc_id"],
        text=raw["text"],
        events=tuple(events),
        split=raw.get("split", "train"),
    )


def load_corpus(
    path: str | Path,
    dataset_id: Optional[str] = None,
    ontology_id: str = "",
) -> Corpus:
    """Load a canonical JSONL corpus, enforcing structural invariants.

    Raises CorpusError naming the offending line / document on any
    malformed line, out-of-bounds span, span/text mismatch, or bad split.
    """
    path = Path(path)
    docs = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                doc = document_from_dict(raw)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed document line: {exc}") from exc
            if doc.split not in VALID_SPLITS:
                raise CorpusError(f"{path}:{lineno}: unknown split tag {doc.split!r} in doc {doc.doc_id!r}")
            if doc.doc_id in seen_ids:
                raise CorpusError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
            seen_ids.add(doc.doc_id)
            problems = _structural_violations(doc)
            if problems:
                v = problems[0]
                raise CorpusError(f"{path}:{lineno}: doc {doc.doc_id!r}: {v.code}: {v.message}")
            docs.append(doc)
    return Corpus(
        dataset_id=dataset_id or path.stem,
        ontology_id=ontology_id,
        documents=tuple(docs),
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form, keys in schema order, one doc per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for doc in corpus.documents:
            f.write(json.dumps(document_to_dict(doc), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_span(span: Span, text: str, where: str, doc_id: str, event_id: str = "") -> list[Violation]:
    out = []
    if not (0 <= span.start < span.end <= len(text)):
        out.append(
            Violation(
                code="span-out-of-bounds",
                message=f"{where} span ({span.start},{span.end}) outside text of length {len(text)}",
                doc_id=doc_id,
                event_id=event_id,
            )
        )
        return out
    if text[span.start:span.end] != span.text:
        out.append(
            Violation(
                code="span-text-mismatch",
                message=(
                    f"{where} span ({span.start},{span.end}) reads "
                    f"{text[span.start:span.end]!r}, annotation says {span.text!r}"
                ),
                doc_id=doc_id,
                event_id=event_id,
            )
        )
    return out


def _structural_violations(doc: Document) -> list[Violation]:
    out: list[Violation] = []
    seen_events: set[str] = set()
    for ev in doc.events:
        if ev.event_id in seen_events:
            out.append(Violation("duplicate-event-id", f"event_id {ev.event_id!r} repeats", doc.doc_id, ev.event_id))
        seen_events.add(ev.event_id)
        out.extend(_check_span(ev.trigger, doc.text, "trigger", doc.doc_id, ev.event_id))
        for a in ev.arguments:
            if not a.role:
                out.append(Violation("empty-role", "argument with empty role", doc.doc_id, ev.event_id))
            if not a.text:
                out.append(Violation("empty-argument-text", f"role {a.role!r} has empty text", doc.doc_id, ev.event_id, a.role))
            if a.span is not None:
                out.extend(_check_span(a.span, doc.text, f"argument {a.role!r}", doc.doc_id, ev.event_id))
                if a.span.text != a.text:
                    out.append(
                        Violation(
                            "argument-span-text-mismatch",
                            f"role {a.role!r}: span text {a.span.text!r} != argument text {a.text!r}",
                            doc.doc_id,
                            ev.event_id,
                            a.role,
                        )
                    )
    return out


def validate_document(doc: Document, ontology) -> list[Violation]:
    """Full validation of one document against an ontology.

    Returns an empty list iff all structural invariants and
    ontology-membership checks pass.
    """
    out = _structural_violations(doc)
    for ev in doc.events:
        etype = ontology.get(ev.event_type) if ontology is not None else None
        if ontology is not None and etype is None:
            out.append(
                Violation("unknown-event-type", f"event type {ev.event_type!r} not in ontology", doc.doc_id, ev.event_id)
            )
            continue
        if etype is not None:
            role_names = {r.name for r in etype.roles}
            for a in ev.arguments:
                if a.role not in role_names:
                    out.append(
                        Violation(
                            "role-not-in-type",
                            f"role {a.role!r} not defined for event type {ev.event_type!r}",
                            doc.doc_id,
                            ev.event_id,
                            a.role,
                        )
                    )
    return out


def validate_corpus(corpus: Corpus, ontology) -> list[Violation]:
    out: list[Violation] = []
    for doc in corpus.documents:
        out.extend(validate_document(doc, ontology))
    return out


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def _naive_sentences(text: str) -> list[tuple[int, int]]:
    # Rough segmentation used only for the doc-level stats flag; the harness
    # itself never splits sentences.
    bounds = []
    start = 0
    for i, ch in enumerate(text):
        if ch in ".!?\n":
            bounds.append((start, i + 1))
            start = i + 1
    if start < len(text):
        bounds.append((start, len(text)))
    return bounds or [(0, len(text))]


def corpus_stats(corpus: Corpus, ontology=None) -> StatsReport:
    """Dataset summary counts, totalled over all splits.

    Identically named roles on different event types are counted once.
    When an ontology is given, type/role inventories come from it;
    otherwise they are the distinct names observed in the corpus.
    """
    if ontology is not None:
        event_types = {et.name for et in ontology.event_types}
        role_types = {r.name for et in ontology.event_types for r in et.roles}
    else:
        event_types = {e.event_type for d in corpus.documents for e in d.events}
        role_types = {a.role for d in corpus.documents for e in d.events for a in e.arguments}
    event_count = sum(len(d.events) for d in corpus.documents)
    arg_count = sum(len(e.arguments) for d in corpus.documents for e in d.events)
    doc_level = False
    for d in corpus.documents:
        sents = _naive_sentences(d.text)
        for e in d.events:
            trig_sent = next((s for s in sents if s[0] <= e.trigger.start < s[1]), None)
            for a in e.arguments:
                if a.span is None or trig_sent is None:
                    continue
                if not (trig_sent[0] <= a.span.start and a.span.end <= trig_sent[1]):
                    doc_level = True
    return StatsReport(
        event_type_count=len(event_types),
        role_type_count=len(role_types),
        event_count=event_count,
        argument_count=arg_count,
        doc_level=doc_level,
    )


# ---------------------------------------------------------------------------
# Trigger marking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OffsetMap:
    """Monotone remapping between original and trigger-marked offsets.

    Positions map bijectively outside the two inserted marker regions.
    """
    trigger_start: int
    trigger_end: int
    open_len: int
    close_len: int

    def to_marked(self, pos: int) -> int:
        if pos < self.trigger_start:
            return pos
        if pos < self.trigger_end:
            return pos + self.open_len
        return pos + self.open_len + self.close_len

    def to_original(self, pos: int) -> int:
        """Inverse of to_marked. Raises ValueError for positions inside a marker."""
        if pos < self.trigger_start:
            return pos
        if pos < self.trigger_start + self.open_len:
            raise ValueError(f"marked position {pos} lies inside the open marker")
        if pos < self.trigger_end + self.open_len:
            return pos - self.open_len
        if pos < self.trigger_end + self.open_len + self.close_len:
            raise ValueError(f"marked position {pos} lies inside the close marker")
        return pos - self.open_len - self.close_len

    def span_to_marked(self, start: int, end: int) -> tuple[int, int]:
        """Map a half-open span; the exclusive end hugs the span content."""
        mstart = self.to_marked(start)
        if end <= self.trigger_start:
            mend = end
        elif end <= self.trigger_end:
            mend = end + self.open_len
        else:
            mend = end + self.open_len + self.close_len
        return mstart, mend

    def span_to_original(self, start: int, end: int) -> tuple[int, int]:
        ostart = self.to_original(start)
        if end <= self.trigger_start:
            oend = end
        elif end <= self.trigger_start + self.open_len:
            raise ValueError(f"marked end {end} lies inside the open marker")
        elif end <= self.trigger_end + self.open_len:
            oend = end - self.open_len
        elif end <= self.trigger_end + self.open_len + self.close_len:
            raise ValueError(f"marked end {end} lies inside the close marker")
        else:
            oend = end - self.open_len - self.close_len
        return ostart, oend


def mark_trigger(
    doc: Document,
    event: EventInstance,
    open_marker: str = "<trigger>",
    close_marker: str = "</trigger>",
) -> tuple[str, OffsetMap]:
    """Insert markers around the event trigger, returning the marked text
    and the offset remapping.

    A marker string already occurring in the document text is flagged with a
    warning, not an error: real web text may contain angle brackets.
    """
    trig = event.trigger
    if not (0 <= trig.start < trig.end <= len(doc.text)):
        raise CorpusError(f"doc {doc.doc_id!r}: trigger span ({trig.start},{trig.end}) invalid")
    for marker in (open_marker, close_marker):
        if marker and marker in doc.text:
            logger.warning(
                "doc %r: marker %r occurs in document text; marked offsets remain well-defined",
                doc.doc_id,
                marker,
            )
    marked = (
        doc.text[: trig.start]
        + open_marker
        + doc.text[trig.start : trig.end]
        + close_marker
        + doc.text[trig.end :]
    )
    omap = OffsetMap(
        trigger_start=trig.start,
        trigger_end=trig.end,
        open_len=len(open_marker),
        close_len=len(close_marker),
    )
    return marked, omap
