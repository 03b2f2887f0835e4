"""Experiment orchestration: per-cell runs, transfer matrices, table
formatting, paraphrase-augmented resources, and run persistence.

A "cell" is one (method, source, target) evaluation. Transfer means: the
backend was trained on the source's resources and is evaluated against the
target corpus with the target's own questions/templates; roles are never
mapped across ontologies.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .backends import (
    Backend,
    BackendDescriptor,
    BackendError,
    GenerationRequest,
    SpanScoringRequest,
    make_backend,
)
from .corpus import Corpus, Document, EventInstance, load_corpus, mark_trigger
from .llm import PromptVariant, build_extraction_prompt, chat_payload, parse_answer_sheet
from .metrics import AggregateReport, EvalReport, PredictionSet, aggregate_runs, argument_f1
from .qa import (
    ExampleCandidates,
    QAConfig,
    build_inference_examples,
    decode_spans,
    select_arguments,
)
from .resources import EventTypeDef, Ontology, RoleDef, load_ontology, validate_ontology
from .templates import (
    SkeletonMismatch,
    parse_filled,
    parse_template,
    render_unfilled,
    serialize_template,
)

logger = logging.getLogger(__name__)

METHODS = ("TI", "QA", "LLM")


class RunnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    method: str  # TI | QA | LLM
    backend: BackendDescriptor
    source_id: str
    target_id: str
    corpus_path: str
    ontology_path: str
    split: Optional[str] = None
    t_dev: float = 0.0
    qa: QAConfig = field(default_factory=QAConfig)
    prompt_variants: tuple[int, ...] = (1, 2, 3)
    seeds: tuple[int, ...] = (0,)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "LLM" and self.backend.kind == "noisy-oracle":
            raise ValueError("LLM method requires a generation backend (gold-oracle, canned, or remote)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


@dataclass(frozen=True)
class TIExample:
    """One template-infilling instance: unfilled prompt + marked document.
    target_text is the gold filled template (training only)."""
    doc_id: str
    event_id: str
    event_type: str
    input_text: str
    target_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "event_id": self.event_id,
            "event_type": self.event_type,
            "input_text": self.input_text,
            "target_text": self.target_text,
        }


def build_ti_examples(
    corpus: Corpus,
    ontology: Ontology,
    config: QAConfig = QAConfig(),
    with_targets: bool = False,
    template_variants: Optional[Mapping[str, Sequence[str]]] = None,
) -> list[TIExample]:
    """One instance per (document, event): unfilled template ++ separator ++
    trigger-marked document. With targets, the gold filled template is
    attached; template_variants (event type -> DSL strings) multiplies
    training instances per variant."""
    from .templates import render_filled

    out = []
    for doc in corpus.documents:
        for ev in doc.events:
            etype = ontology.get(ev.event_type)
            if etype is None:
                raise RunnerError(f"event type {ev.event_type!r} not in ontology {ontology.ontology_id!r}")
            marked, _ = mark_trigger(doc, ev, config.open_marker, config.close_marker)
            templates = (
                list(template_variants[etype.name])
                if template_variants is not None
                else [etype.template]
            )
            for tmpl in templates:
                ast = parse_template(tmpl)
                input_text = render_unfilled(ast) + config.separator + marked
                target = None
                if with_targets:
                    fills: dict[str, list[str]] = {r.name: [] for r in etype.roles}
                    for a in ev.arguments:
                        fills.setdefault(a.role, []).append(a.text)
                    target = render_filled(ast, {k: tuple(v) for k, v in fills.items()})
                out.append(
                    TIExample(
                        doc_id=doc.doc_id,
                        event_id=ev.event_id,
                        event_type=ev.event_type,
                        input_text=input_text,
                        target_text=target,
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Per-method prediction
# ---------------------------------------------------------------------------

def _batched(seq: Sequence, size: int):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def predict_ti(
    corpus: Corpus, ontology: Ontology, backend: Backend, config: QAConfig = QAConfig()
) -> PredictionSet:
    examples = build_ti_examples(corpus, ontology, config)
    requests = [
        GenerationRequest(
            input_text=ex.input_text,
            metadata={"doc_id": ex.doc_id, "event_id": ex.event_id},
        )
        for ex in examples
    ]
    responses = backend.generate(requests)
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    mismatches = 0
    for ex, resp in zip(examples, responses):
        etype = ontology.get(ex.event_type)
        ast = parse_template(etype.template)
        try:
            fills = parse_filled(ast, resp.output_text)
            roles = {r: tuple(v) for r, v in fills.fills.items()}
        except SkeletonMismatch:
            # Generation deviated from the skeleton: empty prediction, flagged.
            mismatches += 1
            roles = {r.name: () for r in etype.roles}
        entries.setdefault((ex.doc_id, ex.event_id), {}).update(roles)
    return PredictionSet(
        entries=entries,
        method="TI",
        backend_id=backend.descriptor.kind,
        diagnostics={"skeleton_mismatches": mismatches},
    )


def score_qa_examples(
    corpus: Corpus, ontology: Ontology, backend: Backend, config: QAConfig = QAConfig()
) -> list[ExampleCandidates]:
    """Run span scoring over all inference examples and decode candidates."""
    examples = build_inference_examples(corpus, ontology, config)
    requests = [
        SpanScoringRequest(
            input_text=ex.input_text,
            metadata={"doc_id": ex.doc_id, "event_id": ex.event_id, "role": ex.role},
        )
        for ex in examples
    ]
    responses = backend.score_spans(requests)
    out = []
    for ex, resp in zip(examples, responses):
        marked_doc = ex.input_text[ex.doc_region_start :]
        candidates, null_conf = decode_spans(
            resp.start_probs, resp.end_probs, resp.token_offsets, marked_doc, config
        )
        out.append(
            ExampleCandidates(
                doc_id=ex.doc_id,
                event_id=ex.event_id,
                role=ex.role,
                candidates=tuple(candidates),
                null_confidence=null_conf,
            )
        )
    return out


def predict_qa(
    corpus: Corpus,
    ontology: Ontology,
    backend: Backend,
    t_dev: float = 0.0,
    config: QAConfig = QAConfig(),
) -> PredictionSet:
    per_example = score_qa_examples(corpus, ontology, backend, config)
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    for ex in per_example:
        mentions = select_arguments(ex.candidates, ex.null_confidence, t_dev, ex.role, k=config.k)
        entries.setdefault((ex.doc_id, ex.event_id), {})[ex.role] = tuple(m.text for m in mentions)
    return PredictionSet(entries=entries, method="QA", backend_id=backend.descriptor.kind)


def predict_llm(
    corpus: Corpus,
    ontology: Ontology,
    backend: Backend,
    variant: int,
) -> PredictionSet:
    prompts: list[tuple[Document, EventInstance, object]] = []
    requests = []
    for doc in corpus.documents:
        for ev in doc.events:
            prompt = build_extraction_prompt(doc, ev, ontology, variant)
            prompts.append((doc, ev, prompt))
            requests.append(
                GenerationRequest(
                    input_text=json.dumps(chat_payload(prompt)),
                    metadata={
                        "doc_id": doc.doc_id,
                        "event_id": ev.event_id,
                        "request_id": f"{doc.doc_id}::{ev.event_id}",
                        "variant": str(variant),
                    },
                )
            )
    responses = backend.generate(requests)
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    fallbacks = 0
    for (doc, ev, prompt), resp in zip(prompts, responses):
        sheet = parse_answer_sheet(resp.output_text, prompt.question_order, doc)
        if "parse-fallback" in sheet.sheet_flags:
            fallbacks += 1
        entries[(doc.doc_id, ev.event_id)] = {r: tuple(v) for r, v in sheet.answers.items()}
    return PredictionSet(
        entries=entries,
        method="LLM",
        backend_id=backend.descriptor.kind,
        diagnostics={"parse_fallbacks": fallbacks, "variant": variant},
    )


# ---------------------------------------------------------------------------
# Cells and matrices
# ---------------------------------------------------------------------------

def predictions_to_jsonl(pred: PredictionSet, path: Path) -> None:
    with path.open("w", encoding="utf-8") as f:
        for (doc_id, event_id) in sorted(pred.entries):
            roles = pred.entries[(doc_id, event_id)]
            f.write(
                json.dumps(
                    {
                        "doc_id": doc_id,
                        "event_id": event_id,
                        "roles": {r: list(v) for r, v in roles.items()},
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def predictions_from_jsonl(path: Path, method: str = "", backend_id: str = "") -> PredictionSet:
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            entries[(raw["doc_id"], raw["event_id"])] = {
                r: tuple(v) for r, v in raw.get("roles", {}).items()
            }
    return PredictionSet(entries=entries, method=method, backend_id=backend_id)


def run_cell(config: ExperimentConfig, backend: Optional[Backend] = None) -> AggregateReport:
    """Execute one experiment cell and persist its artifacts.

    TI/QA run once per seed; LLM runs once per prompt variant. Results are
    aggregated as arithmetic means; per-run values are retained.
    """
    corpus = load_corpus(config.corpus_path)
    if config.split:
        corpus = corpus.restrict_split(config.split)
    ontology = load_ontology(config.ontology_path)
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, default=str))

    reports: list[EvalReport] = []
    try:
        if config.method == "LLM":
            for variant in config.prompt_variants:
                be = backend or make_backend(config.backend, corpus, ontology, config.qa)
                pred = predict_llm(corpus, ontology, be, variant)
                report = argument_f1(pred, corpus)
                reports.append(report)
                if out_dir:
                    predictions_to_jsonl(pred, out_dir / f"predictions.variant{variant}.jsonl")
        else:
            for seed in config.seeds:
                desc = dataclasses.replace(config.backend, seed=seed) \
                    if config.backend.kind == "noisy-oracle" else config.backend
                be = backend or make_backend(desc, corpus, ontology, config.qa)
                if config.method == "TI":
                    pred = predict_ti(corpus, ontology, be, config.qa)
                else:
                    pred = predict_qa(corpus, ontology, be, config.t_dev, config.qa)
                report = argument_f1(pred, corpus)
                reports.append(report)
                if out_dir:
                    suffix = f".seed{seed}" if len(config.seeds) > 1 else ""
                    predictions_to_jsonl(pred, out_dir / f"predictions{suffix}.jsonl")
    except BackendError as exc:
        if out_dir:
            (out_dir / "failure.json").write_text(
                json.dumps({"error": str(exc), "completed_runs": len(reports)}, indent=2)
            )
        raise

    agg = aggregate_runs(reports)
    if out_dir:
        (out_dir / "report.json").write_text(json.dumps(agg.to_dict(), indent=2))
    return agg


@dataclass(frozen=True)
class MatrixCell:
    mean_f1: Optional[float]
    run_f1s: tuple[float, ...] = ()
    error: str = ""

    @property
    def missing(self) -> bool:
        return self.mean_f1 is None


@dataclass(frozen=True)
class RowKey:
    method: str
    source_id: str  # "" for source-free rows (zero-shot LLMs)

    def label(self) -> str:
        return f"{self.method}/{self.source_id or '-'}"


@dataclass(frozen=True)
class ResultMatrix:
    rows: tuple[RowKey, ...]
    columns: tuple[str, ...]
    cells: Mapping[tuple[RowKey, str], MatrixCell]

    def to_dict(self) -> dict:
        return {
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "columns": list(self.columns),
            "cells": [
                {
                    "method": rk.method,
                    "source": rk.source_id,
                    "target": col,
                    "mean_f1": cell.mean_f1,
                    "run_f1s": list(cell.run_f1s),
                    "error": cell.error,
                }
                for (rk, col), cell in self.cells.items()
            ],
        }

    def to_csv(self) -> str:
        lines = ["method,source,target," + "f1"]
        for (rk, col), cell in sorted(
            self.cells.items(), key=lambda kv: (kv[0][0].method, kv[0][0].source_id, kv[0][1])
        ):
            val = "" if cell.mean_f1 is None else f"{cell.mean_f1:.6f}"
            lines.append(f"{rk.method},{rk.source_id},{col},{val}")
        return "\n".join(lines) + "\n"


def run_matrix(configs: Sequence[ExperimentConfig], max_workers: int = 4) -> ResultMatrix:
    """Execute all configured cells (in parallel) and assemble the
    source x target matrix. Failed cells become marked missing entries."""
    rows: list[RowKey] = []
    columns: list[str] = []
    for cfg in configs:
        rk = RowKey(cfg.method, cfg.source_id)
        if rk not in rows:
            rows.append(rk)
        if cfg.target_id not in columns:
            columns.append(cfg.target_id)

    cells: dict[tuple[RowKey, str], MatrixCell] = {}

    def _one(cfg: ExperimentConfig) -> tuple[tuple[RowKey, str], MatrixCell]:
        key = (RowKey(cfg.method, cfg.source_id), cfg.target_id)
        try:
            agg = run_cell(cfg)
            return key, MatrixCell(mean_f1=agg.f1, run_f1s=tuple(r.f1 for r in agg.runs))
        except Exception as exc:
            logger.warning("cell %s -> %s failed: %s", key[0].label(), cfg.target_id, exc)
            return key, MatrixCell(mean_f1=None, error=str(exc))

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for key, cell in pool.map(_one, configs):
            cells[key] = cell

    return ResultMatrix(rows=tuple(rows), columns=tuple(columns), cells=cells)


def matrix_from_values(
    values: Mapping[tuple[str, str, str], float], row_order: Sequence[tuple[str, str]]
) -> ResultMatrix:
    """Assemble a matrix from plain (method, source, target) -> F1 values,
    e.g. published results, preserving the given row order."""
    rows = tuple(RowKey(m, s) for m, s in row_order)
    columns: list[str] = []
    cells = {}
    for (method, source, target), f1 in values.items():
        if target not in columns:
            columns.append(target)
        cells[(RowKey(method, source), target)] = MatrixCell(mean_f1=f1, run_f1s=(f1,))
    return ResultMatrix(rows=rows, columns=tuple(columns), cells=cells)


def _emphasis(matrix: ResultMatrix) -> tuple[set, set]:
    """Bold/underline assignment, a pure function of the numeric matrix.

    Per column: bold the in-domain (source == target) maximum; underline the
    maximum among the remaining (zero-shot) cells. Ties break toward the
    first row.
    """
    bold: set[tuple[RowKey, str]] = set()
    underline: set[tuple[RowKey, str]] = set()
    for col in matrix.columns:
        in_domain = []
        zero_shot = []
        for rk in matrix.rows:
            cell = matrix.cells.get((rk, col))
            if cell is None or cell.missing:
                continue
            (in_domain if rk.source_id == col else zero_shot).append((rk, cell.mean_f1))
        if in_domain:
            best = max(in_domain, key=lambda x: x[1])
            bold.add((next(rk for rk, v in in_domain if v == best[1]), col))
        if zero_shot:
            best = max(zero_shot, key=lambda x: x[1])
            underline.add((next(rk for rk, v in zero_shot if v == best[1]), col))
    return bold, underline


def format_matrix(matrix: ResultMatrix, style: str = "plain") -> str:
    """Render the matrix with two-decimal cells. In-domain column maxima are
    bolded, zero-shot column maxima underlined.

    plain: *bold* and _underline_ markers, aligned columns.
    latex: \\textbf / \\underline markup with & separators.
    """
    if style not in ("plain", "latex"):
        raise ValueError(f"style must be 'plain' or 'latex', got {style!r}")
    bold, underline = _emphasis(matrix)

    def fmt(rk: RowKey, col: str) -> str:
        cell = matrix.cells.get((rk, col))
        if cell is None or cell.missing:
            return "--"
        text = f"{cell.mean_f1:.2f}"
        if (rk, col) in bold:
            return f"\\textbf{{{text}}}" if style == "latex" else f"*{text}*"
        if (rk, col) in underline:
            return f"\\underline{{{text}}}" if style == "latex" else f"_{text}_"
        return text

    header = ["method/source"] + list(matrix.columns)
    body = [[rk.label()] + [fmt(rk, col) for col in matrix.columns] for rk in matrix.rows]
    if style == "latex":
        lines = [" & ".join(header) + " \\\\"]
        lines += [" & ".join(row) + " \\\\" for row in body]
        return "\n".join(lines) + "\n"
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header] + body]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Paraphrase augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParaphraseSets:
    """Validated paraphrases: 5 per question, keyed (event type, role), and 5
    per template, keyed by event type. Paraphrase strings are in the same
    form as the originals (questions plain, templates in the DSL)."""
    questions: Mapping[tuple[str, str], tuple[str, ...]]
    templates: Mapping[str, tuple[str, ...]]


@dataclass(frozen=True)
class AugmentedRole:
    name: str
    questions: tuple[str, ...]  # original first, then paraphrases


@dataclass(frozen=True)
class AugmentedEventType:
    name: str
    templates: tuple[str, ...]  # original first, then paraphrases
    roles: tuple[AugmentedRole, ...]


@dataclass(frozen=True)
class AugmentedResources:
    ontology_id: str
    event_types: tuple[AugmentedEventType, ...]

    def question_variant_count(self) -> int:
        return sum(len(r.questions) for et in self.event_types for r in et.roles)

    def template_variant_count(self) -> int:
        return sum(len(et.templates) for et in self.event_types)

    def template_variants(self) -> dict[str, tuple[str, ...]]:
        return {et.name: et.templates for et in self.event_types}


def build_paraphrase_augmented_resources(
    ontology: Ontology, paraphrases: ParaphraseSets
) -> AugmentedResources:
    """Original + 5 paraphrases for every question and template (6 variants
    each), for training-resource construction. Inference keeps the originals
    only."""
    from collections import Counter

    event_types = []
    for et in ontology.event_types:
        tmpl_paras = paraphrases.templates.get(et.name)
        if not tmpl_paras:
            raise RunnerError(f"missing template paraphrases for event type {et.name!r}")
        if len(tmpl_paras) != 5:
            raise RunnerError(f"event type {et.name!r}: expected 5 template paraphrases, got {len(tmpl_paras)}")
        original_slots = Counter(parse_template(et.template).slot_roles)
        for p in tmpl_paras:
            if Counter(parse_template(p).slot_roles) != original_slots:
                raise RunnerError(f"event type {et.name!r}: paraphrase {p!r} changes the slot set")
        roles = []
        for r in et.roles:
            q_paras = paraphrases.questions.get((et.name, r.name))
            if not q_paras:
                raise RunnerError(f"missing question paraphrases for {et.name!r} role {r.name!r}")
            if len(q_paras) != 5:
                raise RunnerError(
                    f"{et.name!r} role {r.name!r}: expected 5 question paraphrases, got {len(q_paras)}"
                )
            roles.append(AugmentedRole(name=r.name, questions=(r.question, *q_paras)))
        event_types.append(
            AugmentedEventType(name=et.name, templates=(et.template, *tmpl_paras), roles=tuple(roles))
        )
    return AugmentedResources(ontology_id=ontology.ontology_id, event_types=tuple(event_types))


def build_augmented_qa_examples(
    corpus: Corpus, ontology: Ontology, aug: AugmentedResources, config: QAConfig = QAConfig()
):
    """QA training examples duplicated once per question variant (6x)."""
    from .qa import build_training_examples

    out = []
    by_type = {et.name: et for et in aug.event_types}
    # Build per-variant ontologies: variant v swaps in the v-th question of
    # every role (variant 0 is the original).
    max_variants = max(
        (len(r.questions) for et in aug.event_types for r in et.roles), default=1
    )
    for v in range(max_variants):
        variant_types = []
        for et in ontology.event_types:
            aug_et = by_type[et.name]
            roles = tuple(
                RoleDef(name=ar.name, question=ar.questions[min(v, len(ar.questions) - 1)])
                for ar in aug_et.roles
            )
            variant_types.append(EventTypeDef(name=et.name, template=et.template, roles=roles))
        variant_onto = Ontology(ontology_id=ontology.ontology_id, event_types=tuple(variant_types))
        out.extend(build_training_examples(corpus, variant_onto, config))
    return out


def build_augmented_ti_examples(
    corpus: Corpus, ontology: Ontology, aug: AugmentedResources, config: QAConfig = QAConfig()
) -> list[TIExample]:
    """TI training pairs duplicated once per template variant (6x)."""
    return build_ti_examples(
        corpus, ontology, config, with_targets=True, template_variants=aug.template_variants()
    )
