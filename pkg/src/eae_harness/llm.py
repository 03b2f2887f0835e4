"""Zero-shot chat prompt construction and reply parsing.

Three fixed prompt variants exist; variant i pairs system prompt i with
instruction set i. Question numbering q1..qN follows ontology role order.
Reply parsing is deliberately lenient: chat-model output wraps JSON
unpredictably, so recovery failures degrade to an empty answer sheet with a
parse-fallback flag rather than raising.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .corpus import Document, EventInstance, mark_trigger
from .resources import Ontology
from .templates import parse_template, to_bracket_form, from_bracket_form

SYSTEM_PROMPTS = {
    1: "You are the world champion of extractive question answering.",
    2: "You are an expert at question answering from text.",
    3: "You are the best in the world at reading comprehension.",
}

INSTRUCTIONS = {
    1: (
        "I will give you an input passage containing an event trigger demarcated with "
        "“<trigger></trigger>” HTML tags. I will also give you a set of questions "
        "about the event denoted by that trigger. Your task is to answer each question with "
        "a list of contiguous spans extracted from the input passage. Answers may contain "
        "zero, one, or multiple spans. The list should be empty if no answer can be found."
    ),
    2: (
        "I will show you a document that contains an event trigger that is highlighted with "
        "“<trigger></trigger>” HTML tags. After the document, I will list out a set "
        "of questions about the event referred to by the highlighted trigger. Please answer "
        "each question with a list of zero or more contiguous spans extracted from the input "
        "passage. Spans MUST appear in the document. Some questions may not have answers, in "
        "which case the answer should be an empty list."
    ),
    3: (
        "I will give you a passage of text featuring a phrase that refers to some event and "
        "that is highlighted with '<trigger></trigger>' HTML tags. I will additionally "
        "provide you with a list of questions about the event referred to by the highlighted "
        "phrase. You must answer each question with a list of zero, one, or multiple "
        "contiguous spans that appear in the input passage. Some questions do not have any "
        "answer in the input passage. For these cases, your answer should be an empty list."
    ),
}

ANSWER_FORMAT_BLOCK = (
    "You must give your answers as JSON in the following format:\n"
    "{\n"
    '  "q1": [ ... ],\n'
    "  ...,\n"
    '  "qN": [ ... ]\n'
    "}"
)

TEMPLATE_PARAPHRASE_INSTRUCTIONS = (
    "Please generate five paraphrases of the following template, but you ABSOLUTELY "
    "CANNOT change any words that are in between brackets ([]). Your paraphrases MUST "
    "be formatted as a JSON list of strings."
)

QUESTION_PARAPHRASE_INSTRUCTIONS = (
    "Please generate five paraphrases of the following question. Your answer MUST be "
    "formatted as a JSON list of strings."
)

GENERATION_PARAMS = {"top_p": 1.0, "temperature": 0.7, "max_new_tokens": 512}

PARAPHRASE_COUNT = 5

# Per-role / sheet-level diagnostic flags.
FLAG_NOT_IN_DOCUMENT = "not-in-document"
FLAG_MISSING_KEY = "missing-key"
FLAG_PARSE_FALLBACK = "parse-fallback"
FLAG_EXTRA_KEYS = "extra-keys"


class PromptError(ValueError):
    pass


class ParaphraseError(ValueError):
    pass


class SlotMismatch(ParaphraseError):
    pass


@dataclass(frozen=True)
class PromptVariant:
    index: int

    def __post_init__(self):
        if self.index not in SYSTEM_PROMPTS:
            raise PromptError(f"prompt variant index must be 1, 2, or 3, got {self.index}")

    @property
    def system_text(self) -> str:
        return SYSTEM_PROMPTS[self.index]

    @property
    def instruction_text(self) -> str:
        return INSTRUCTIONS[self.index]


@dataclass(frozen=True)
class ExtractionPrompt:
    system: str
    user: str
    question_order: tuple[str, ...]


@dataclass(frozen=True)
class AnswerSheet:
    answers: Mapping[str, tuple[str, ...]]
    flags: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    sheet_flags: tuple[str, ...] = ()


def build_extraction_prompt(
    doc: Document,
    event: EventInstance,
    ontology: Ontology,
    variant: PromptVariant | int,
) -> ExtractionPrompt:
    """Compose one chat prompt for one event, questions in ontology role
    order, trigger marked with <trigger></trigger>."""
    if isinstance(variant, int):
        variant = PromptVariant(variant)
    etype = ontology.get(event.event_type)
    if etype is None:
        raise PromptError(f"event type {event.event_type!r} not in ontology {ontology.ontology_id!r}")
    marked, _ = mark_trigger(doc, event, "<trigger>", "</trigger>")
    questions = "\n".join(f"{i}. {r.question}" for i, r in enumerate(etype.roles, start=1))
    user = (
        f"Instructions: {variant.instruction_text}\n"
        f"{ANSWER_FORMAT_BLOCK}\n"
        f"{questions}\n"
        f"Input Passage: {marked}\n\n"
        "Answers:"
    )
    return ExtractionPrompt(
        system=variant.system_text,
        user=user,
        question_order=etype.role_names(),
    )


def chat_payload(prompt: ExtractionPrompt) -> dict:
    """Vendor-neutral chat request body."""
    return {
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        **GENERATION_PARAMS,
    }


def _recover_json(raw: str, want: type) -> Optional[object]:
    """First well-formed JSON value of the wanted type: direct parse, then
    fenced block, then brace/bracket scan."""
    raw = raw.strip()
    try:
        value = json.loads(raw)
        if isinstance(value, want):
            return value
    except json.JSONDecodeError:
        pass
    fence = re.search(r"```(?:json)?\s*\n?(.*?)```", raw, flags=re.DOTALL)
    if fence:
        try:
            value = json.loads(fence.group(1).strip())
            if isinstance(value, want):
                return value
        except json.JSONDecodeError:
            pass
    opener = "{" if want is dict else "["
    decoder = json.JSONDecoder()
    for m in re.finditer(re.escape(opener), raw):
        try:
            value, _ = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(value, want):
            return value
    return None


def _as_strings(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, (str, int, float)):
        return (str(value),)
    if isinstance(value, list):
        return tuple(str(v) for v in value if v is not None)
    return (str(value),)


def parse_answer_sheet(raw: str, roles: Sequence[str], doc: Document) -> AnswerSheet:
    """Map a model reply onto the prompted roles.

    Key "qi" maps to roles[i-1]. Missing keys yield empty lists with a
    missing-key flag; extra keys are ignored with a sheet-level flag; answers
    absent from the document are retained but flagged. Never raises on bad
    replies -- an unrecoverable reply produces an all-empty sheet with a
    parse-fallback flag.
    """
    obj = _recover_json(raw, dict)
    answers: dict[str, tuple[str, ...]] = {}
    flags: dict[str, list[str]] = {r: [] for r in roles}
    sheet_flags: list[str] = []
    if obj is None:
        for r in roles:
            answers[r] = ()
        return AnswerSheet(
            answers=answers,
            flags={r: tuple(f) for r, f in flags.items()},
            sheet_flags=(FLAG_PARSE_FALLBACK,),
        )
    expected = {f"q{i}" for i in range(1, len(roles) + 1)}
    extra = sorted(set(obj) - expected)
    if extra:
        sheet_flags.append(f"{FLAG_EXTRA_KEYS}:{','.join(extra)}")
    for i, role in enumerate(roles, start=1):
        key = f"q{i}"
        if key not in obj:
            answers[role] = ()
            flags[role].append(FLAG_MISSING_KEY)
            continue
        vals = _as_strings(obj[key])
        answers[role] = vals
        for v in vals:
            if v not in doc.text:
                flags[role].append(FLAG_NOT_IN_DOCUMENT)
                break
    return AnswerSheet(
        answers=answers,
        flags={r: tuple(f) for r, f in flags.items()},
        sheet_flags=tuple(sheet_flags),
    )


def serialize_answer_sheet(sheet: AnswerSheet, roles: Sequence[str]) -> str:
    return json.dumps({f"q{i}": list(sheet.answers.get(r, ())) for i, r in enumerate(roles, start=1)})


def build_paraphrase_prompt(kind: str, source: str) -> str:
    """Paraphrase-generation user prompt for a question or a template. For
    templates, DSL slots are converted to the bracketed form first."""
    if kind == "question":
        return (
            f"Instructions: {QUESTION_PARAPHRASE_INSTRUCTIONS}\n\n"
            f"Question: {source}\n\n"
            "Paraphrases:"
        )
    if kind == "template":
        bracketed = to_bracket_form(source)  # raises on invalid DSL
        return (
            f"Instructions: {TEMPLATE_PARAPHRASE_INSTRUCTIONS}\n\n"
            f"Template: {bracketed}\n\n"
            "Paraphrases:"
        )
    raise PromptError(f"kind must be 'question' or 'template', got {kind!r}")


def parse_paraphrases(raw: str, original: str, kind: str) -> list[str]:
    """Exactly five paraphrase strings from a model reply.

    Template paraphrases must preserve the original's bracketed slot multiset;
    they are converted back to the template DSL.
    """
    if kind not in ("question", "template"):
        raise PromptError(f"kind must be 'question' or 'template', got {kind!r}")
    items = _recover_json(raw, list)
    if items is None:
        raise ParaphraseError("no JSON list recoverable from reply")
    items = [str(v) for v in items]
    if len(items) != PARAPHRASE_COUNT:
        raise ParaphraseError(f"expected {PARAPHRASE_COUNT} paraphrases, got {len(items)}")
    if kind == "question":
        return items
    original_slots = Counter(parse_template(original).slot_roles)
    out = []
    for p in items:
        got = Counter(re.findall(r"\[([^\[\]]+)\]", p))
        if got != original_slots:
            missing = sorted((original_slots - got).keys())
            extra = sorted((got - original_slots).keys())
            raise SlotMismatch(
                f"paraphrase {p!r}: slot mismatch"
                + (f", missing {missing}" if missing else "")
                + (f", unexpected {extra}" if extra else "")
            )
        out.append(from_bracket_form(p))
    return out
