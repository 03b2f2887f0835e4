"""Command-line interface.

Subcommands: ingest, validate, stats, lint-resources, build-examples,
calibrate, predict, evaluate, matrix, correlate, augment, emit-prompts,
parse-replies. All read/write the harness's canonical file formats; report
paths also render figures next to the delimited output. Exit status is 0 on
success and nonzero with a machine-readable error line otherwise.

The remote backend address may come from --endpoint or the
EAE_REMOTE_ENDPOINT environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import backends as be
from . import qa as qa_mod
from . import runner as run_mod
from .corpus import corpus_stats, load_corpus, save_corpus, validate_corpus
from .llm import build_extraction_prompt, chat_payload, parse_answer_sheet
from .metrics import MetricError, argument_f1, correlate_transfer
from .qa import CalibrationError, ExampleCandidates, QAConfig, SpanCandidate, decode_spans
from .resources import OntologyError, lint_ontology, load_ontology
from .corpus import Span, mark_trigger
from .synth import make_fixture
from .templates import SkeletonMismatch, parse_filled, parse_template


def _fail(message: str, code: str = "error") -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return 1


def _read_jsonl(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out


def _write_jsonl(path: str, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def _qa_config(args) -> QAConfig:
    return QAConfig(
        k=getattr(args, "k", 5),
        max_span_tokens=getattr(args, "max_span_tokens", 30),
    )


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.adapter == "synthetic":
        corpus, onto = make_fixture(
            n_docs=args.docs,
            n_event_types=args.event_types,
            roles_per_type=args.roles_per_type,
            max_args_per_role=args.max_args_per_role,
            p_empty_role=args.p_empty_role,
            seed=args.seed,
            dataset_id=args.dataset_id,
            ontology_id=args.dataset_id,
            split=args.split,
        )
        save_corpus(corpus, args.out)
        if args.ontology_out:
            from .resources import save_ontology

            save_ontology(onto, args.ontology_out)
        print(f"wrote {len(corpus.documents)} documents to {args.out}")
        return 0
    if args.adapter == "canonical":
        if not args.input:
            return _fail("canonical adapter requires --input", "usage")
        corpus = load_corpus(args.input, dataset_id=args.dataset_id)
        save_corpus(corpus, args.out)
        print(f"wrote {len(corpus.documents)} documents to {args.out}")
        return 0
    return _fail(f"unknown adapter {args.adapter!r}", "usage")


def cmd_validate(args) -> int:
    corpus = load_corpus(args.corpus)
    ontology = load_ontology(args.ontology) if args.ontology else None
    violations = validate_corpus(corpus, ontology)
    for v in violations:
        print(json.dumps({"code": v.code, "doc_id": v.doc_id, "event_id": v.event_id,
                          "role": v.role, "message": v.message}))
    if violations:
        return 1
    print(f"OK: {len(corpus.documents)} documents valid")
    return 0


def cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    ontology = load_ontology(args.ontology) if args.ontology else None
    stats = corpus_stats(corpus, ontology)
    report = {
        "dataset": corpus.dataset_id,
        "event_types": stats.event_type_count,
        "role_types": stats.role_type_count,
        "events": stats.event_count,
        "arguments": stats.argument_count,
        "doc_level": stats.doc_level,
    }
    print(json.dumps(report, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    return 0


def cmd_lint_resources(args) -> int:
    ontology = load_ontology(args.ontology)
    findings = lint_ontology(ontology)
    for f in findings:
        print(json.dumps({"level": f.level, "code": f.code, "event_type": f.event_type,
                          "role": f.role, "message": f.message}))
    if any(f.level == "error" for f in findings):
        return 1
    print(f"OK: {len(findings)} finding(s), no errors")
    return 0


def cmd_build_examples(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = corpus.restrict_split(args.split)
    ontology = load_ontology(args.ontology)
    config = _qa_config(args)
    aug = None
    if args.augmented:
        aug = _load_augmented(args.augmented)
    if args.method == "qa":
        if args.mode == "train":
            if aug is not None:
                examples = run_mod.build_augmented_qa_examples(corpus, ontology, aug, config)
            else:
                examples = qa_mod.build_training_examples(corpus, ontology, config)
        else:
            examples = qa_mod.build_inference_examples(corpus, ontology, config)
        _write_jsonl(args.out, [ex.to_dict() for ex in examples])
    else:  # ti
        with_targets = args.mode == "train"
        if aug is not None and with_targets:
            examples = run_mod.build_augmented_ti_examples(corpus, ontology, aug, config)
        else:
            examples = run_mod.build_ti_examples(corpus, ontology, config, with_targets=with_targets)
        _write_jsonl(args.out, [ex.to_dict() for ex in examples])
    print(f"wrote {len(examples)} examples to {args.out}")
    return 0


def _candidates_from_scores(rows: list[dict], corpus, config: QAConfig) -> list[ExampleCandidates]:
    """Decode raw start/end score rows; the marked document is rebuilt from
    the corpus so token offsets resolve to text."""
    marked_cache: dict[tuple[str, str], str] = {}
    out = []
    for row in rows:
        key = (row["doc_id"], row["event_id"])
        if key not in marked_cache:
            doc = corpus.document(row["doc_id"])
            ev = next(e for e in doc.events if e.event_id == row["event_id"])
            marked, _ = mark_trigger(doc, ev, config.open_marker, config.close_marker)
            marked_cache[key] = marked
        candidates, null_conf = decode_spans(
            row["start_probs"],
            row["end_probs"],
            [tuple(t) for t in row["token_offsets"]],
            marked_cache[key],
            config,
        )
        out.append(
            ExampleCandidates(
                doc_id=row["doc_id"],
                event_id=row["event_id"],
                role=row["role"],
                candidates=tuple(candidates),
                null_confidence=null_conf,
            )
        )
    return out


def _candidates_from_file(rows: list[dict]) -> list[ExampleCandidates]:
    out = []
    for row in rows:
        cands = tuple(
            SpanCandidate(
                char_span=Span(c["start"], c["end"], c["text"]),
                text=c["text"],
                confidence=c["confidence"],
            )
            for c in row["candidates"]
        )
        out.append(
            ExampleCandidates(
                doc_id=row["doc_id"],
                event_id=row["event_id"],
                role=row["role"],
                candidates=cands,
                null_confidence=row["null_confidence"],
            )
        )
    return out


def cmd_calibrate(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = corpus.restrict_split(args.split)
    config = _qa_config(args)
    if args.scores:
        per_example = _candidates_from_scores(_read_jsonl(args.scores), corpus, config)
    elif args.candidates:
        per_example = _candidates_from_file(_read_jsonl(args.candidates))
    else:
        return _fail("calibrate requires --scores or --candidates", "usage")
    try:
        result = qa_mod.calibrate_threshold(per_example, corpus, config)
    except CalibrationError as exc:
        return _fail(str(exc), "calibration")
    print(json.dumps(result.to_dict(), indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2))
    if args.plot:
        from .plots import save_sweep_curve

        save_sweep_curve(result.sweep_table, result.t_dev, args.plot)
    return 0


def _backend_descriptor(args) -> be.BackendDescriptor:
    endpoint = getattr(args, "endpoint", "") or os.environ.get("EAE_REMOTE_ENDPOINT", "")
    return be.BackendDescriptor(
        kind=args.backend,
        max_concurrency=getattr(args, "max_concurrency", 8),
        seed=getattr(args, "seed", None),
        endpoint=endpoint,
        drop_prob=getattr(args, "drop_prob", 0.0),
    )


def cmd_predict(args) -> int:
    config = run_mod.ExperimentConfig(
        method=args.method.upper(),
        backend=_backend_descriptor(args),
        source_id=args.source_id,
        target_id=Path(args.corpus).stem,
        corpus_path=args.corpus,
        ontology_path=args.ontology,
        split=args.split,
        t_dev=args.t_dev,
        qa=_qa_config(args),
        prompt_variants=tuple(args.variants),
        seeds=tuple(args.seeds),
        output_dir=args.out,
    )
    agg = run_mod.run_cell(config)
    print(json.dumps({"f1": agg.f1, "precision": agg.precision, "recall": agg.recall,
                      "runs": len(agg.runs)}, indent=2))
    return 0


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = corpus.restrict_split(args.split)
    pred = run_mod.predictions_from_jsonl(Path(args.predictions))
    report = argument_f1(pred, corpus)
    print(json.dumps({"precision": report.precision, "recall": report.recall, "f1": report.f1,
                      "tp": report.tp, "fp": report.fp, "fn": report.fn}, indent=2))
    if args.out:
        Path(args.out).write_text(report.to_json())
    if args.csv:
        lines = ["event_type,f1"] + [f"{t},{v:.6f}" for t, v in sorted(report.per_event_type.items())]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    if args.plot:
        from .plots import save_per_type_bars

        save_per_type_bars(report.per_event_type, args.plot)
    return 0


def cmd_matrix(args) -> int:
    grid = json.loads(Path(args.config).read_text())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    targets = grid["targets"]
    configs = []
    for cell in grid["cells"]:
        target = targets[cell["target"]]
        backend_raw = cell.get("backend", {"kind": "gold-oracle"})
        descriptor = be.BackendDescriptor(
            kind=backend_raw.get("kind", "gold-oracle"),
            max_concurrency=backend_raw.get("max_concurrency", 8),
            seed=backend_raw.get("seed"),
            endpoint=backend_raw.get("endpoint", os.environ.get("EAE_REMOTE_ENDPOINT", "")),
            drop_prob=backend_raw.get("drop_prob", 0.0),
        )
        method = cell["method"].upper()
        cell_dir = out_dir / f"{method}_{cell['source']}__{cell['target']}"
        configs.append(
            run_mod.ExperimentConfig(
                method=method,
                backend=descriptor,
                source_id=cell["source"],
                target_id=cell["target"],
                corpus_path=target["corpus"],
                ontology_path=target["ontology"],
                split=cell.get("split"),
                t_dev=cell.get("t_dev", 0.0),
                prompt_variants=tuple(cell.get("variants", (1, 2, 3))),
                seeds=tuple(cell.get("seeds", (0,))),
                output_dir=str(cell_dir),
            )
        )
    matrix = run_mod.run_matrix(configs, max_workers=grid.get("max_workers", 4))
    (out_dir / "matrix.json").write_text(json.dumps(matrix.to_dict(), indent=2))
    (out_dir / "matrix.csv").write_text(matrix.to_csv())
    table = run_mod.format_matrix(matrix, style="plain")
    (out_dir / "table.txt").write_text(table)
    (out_dir / "table.tex").write_text(run_mod.format_matrix(matrix, style="latex"))
    from .plots import save_matrix_heatmap

    save_matrix_heatmap(matrix, out_dir / "matrix.png")
    print(table, end="")
    missing = [k for k, c in matrix.cells.items() if c.missing]
    if missing:
        print(f"{len(missing)} cell(s) missing", file=sys.stderr)
        return 2
    return 0


def cmd_correlate(args) -> int:
    in_domain = json.loads(Path(args.in_domain).read_text()).get("per_event_type", {})
    zero_shot = json.loads(Path(args.zero_shot).read_text()).get("per_event_type", {})
    try:
        rho, n = correlate_transfer(in_domain, zero_shot)
    except MetricError as exc:
        return _fail(str(exc), "correlate")
    print(json.dumps({"rho": rho, "n_types": n}, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps({"rho": rho, "n_types": n}, indent=2))
    if args.plot:
        from .plots import save_transfer_scatter

        save_transfer_scatter(in_domain, zero_shot, rho, args.plot)
    return 0


def _load_augmented(path: str) -> run_mod.AugmentedResources:
    raw = json.loads(Path(path).read_text())
    return run_mod.AugmentedResources(
        ontology_id=raw["ontology_id"],
        event_types=tuple(
            run_mod.AugmentedEventType(
                name=et["name"],
                templates=tuple(et["templates"]),
                roles=tuple(
                    run_mod.AugmentedRole(name=r["name"], questions=tuple(r["questions"]))
                    for r in et["roles"]
                ),
            )
            for et in raw["event_types"]
        ),
    )


def cmd_augment(args) -> int:
    ontology = load_ontology(args.ontology)
    raw = json.loads(Path(args.paraphrases).read_text())
    questions = {
        (etype, role): tuple(paras)
        for etype, roles in raw.get("questions", {}).items()
        for role, paras in roles.items()
    }
    templates = {etype: tuple(paras) for etype, paras in raw.get("templates", {}).items()}
    sets = run_mod.ParaphraseSets(questions=questions, templates=templates)
    try:
        aug = run_mod.build_paraphrase_augmented_resources(ontology, sets)
    except (run_mod.RunnerError, ValueError) as exc:
        return _fail(str(exc), "augment")
    out = {
        "ontology_id": aug.ontology_id,
        "event_types": [
            {
                "name": et.name,
                "templates": list(et.templates),
                "roles": [{"name": r.name, "questions": list(r.questions)} for r in et.roles],
            }
            for et in aug.event_types
        ],
    }
    Path(args.out).write_text(json.dumps(out, indent=2))
    print(
        f"wrote {aug.question_variant_count()} question variants and "
        f"{aug.template_variant_count()} template variants to {args.out}"
    )
    return 0


def cmd_emit_prompts(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = corpus.restrict_split(args.split)
    ontology = load_ontology(args.ontology)
    variants = (1, 2, 3) if args.variant == "all" else (int(args.variant),)
    records = []
    for doc in corpus.documents:
        for ev in doc.events:
            for v in variants:
                prompt = build_extraction_prompt(doc, ev, ontology, v)
                records.append(
                    {
                        "request_id": f"{doc.doc_id}::{ev.event_id}::v{v}",
                        "doc_id": doc.doc_id,
                        "event_id": ev.event_id,
                        "variant": v,
                        "question_order": list(prompt.question_order),
                        "payload": chat_payload(prompt),
                    }
                )
    _write_jsonl(args.out, records)
    print(f"wrote {len(records)} prompts to {args.out}")
    return 0


def cmd_parse_replies(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = corpus.restrict_split(args.split)
    ontology = load_ontology(args.ontology)
    config = _qa_config(args)
    entries: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    diagnostics = {"skeleton_mismatches": 0, "parse_fallbacks": 0}

    if args.method == "llm":
        for row in _read_jsonl(args.replies):
            doc = corpus.document(row["doc_id"])
            etype = ontology.get(
                next(e for e in doc.events if e.event_id == row["event_id"]).event_type
            )
            sheet = parse_answer_sheet(row["reply"], etype.role_names(), doc)
            if "parse-fallback" in sheet.sheet_flags:
                diagnostics["parse_fallbacks"] += 1
            entries[(row["doc_id"], row["event_id"])] = {
                r: tuple(v) for r, v in sheet.answers.items()
            }
    elif args.method == "ti":
        for row in _read_jsonl(args.replies):
            doc = corpus.document(row["doc_id"])
            ev = next(e for e in doc.events if e.event_id == row["event_id"])
            etype = ontology.get(ev.event_type)
            ast = parse_template(etype.template)
            try:
                fills = parse_filled(ast, row["output_text"])
                roles = {r: tuple(v) for r, v in fills.fills.items()}
            except SkeletonMismatch:
                diagnostics["skeleton_mismatches"] += 1
                roles = {r.name: () for r in etype.roles}
            entries.setdefault((row["doc_id"], row["event_id"]), {}).update(roles)
    elif args.method == "qa":
        per_example = _candidates_from_scores(_read_jsonl(args.replies), corpus, config)
        for ex in per_example:
            mentions = qa_mod.select_arguments(
                ex.candidates, ex.null_confidence, args.t_dev, ex.role, k=config.k
            )
            entries.setdefault((ex.doc_id, ex.event_id), {})[ex.role] = tuple(
                m.text for m in mentions
            )
    else:
        return _fail(f"unknown method {args.method!r}", "usage")

    records = [
        {"doc_id": d, "event_id": e, "roles": {r: list(v) for r, v in roles.items()}}
        for (d, e), roles in sorted(entries.items())
    ]
    _write_jsonl(args.out, records)
    print(json.dumps({"events": len(records), **diagnostics}))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eae-harness", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert/generate a canonical corpus")
    p.add_argument("--adapter", choices=["canonical", "synthetic"], default="canonical")
    p.add_argument("--input", help="input file for the canonical adapter")
    p.add_argument("--out", required=True)
    p.add_argument("--ontology-out")
    p.add_argument("--dataset-id", default="dataset")
    p.add_argument("--docs", type=int, default=20)
    p.add_argument("--event-types", type=int, default=3)
    p.add_argument("--roles-per-type", type=int, default=3)
    p.add_argument("--max-args-per-role", type=int, default=2)
    p.add_argument("--p-empty-role", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="validate a corpus against an ontology")
    p.add_argument("corpus")
    p.add_argument("--ontology")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="dataset summary statistics")
    p.add_argument("corpus")
    p.add_argument("--ontology")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("lint-resources", help="lint questions and templates")
    p.add_argument("ontology")
    p.set_defaults(func=cmd_lint_resources)

    p = sub.add_parser("build-examples", help="construct QA/TI examples")
    p.add_argument("--method", choices=["qa", "ti"], required=True)
    p.add_argument("--mode", choices=["train", "infer"], default="train")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--split")
    p.add_argument("--augmented", help="augmented resource file from the augment subcommand")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_examples)

    p = sub.add_parser("calibrate", help="threshold sweep over dev candidates")
    p.add_argument("--scores", help="raw start/end score JSONL")
    p.add_argument("--candidates", help="pre-decoded candidate JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split")
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="run one method end to end")
    p.add_argument("--method", choices=["ti", "qa", "llm"], required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--split")
    p.add_argument("--backend", choices=["gold-oracle", "noisy-oracle", "remote"], default="gold-oracle")
    p.add_argument("--endpoint", default="")
    p.add_argument("--drop-prob", type=float, default=0.0)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--variants", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--t-dev", type=float, default=0.0)
    p.add_argument("--source-id", default="source")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_predict, seed=None)

    p = sub.add_parser("evaluate", help="score a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", help="run a source x target grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("correlate", help="in-domain vs zero-shot per-type correlation")
    p.add_argument("--in-domain", required=True)
    p.add_argument("--zero-shot", required=True)
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("augment", help="build paraphrase-augmented resources")
    p.add_argument("--ontology", required=True)
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("emit-prompts", help="emit chat payloads for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--split")
    p.add_argument("--variant", default="all", help="1, 2, 3, or all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_prompts)

    p = sub.add_parser("parse-replies", help="decode model replies into predictions")
    p.add_argument("--method", choices=["llm", "ti", "qa"], required=True)
    p.add_argument("--replies", required=True, help="reply/generation/score JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--split")
    p.add_argument("--t-dev", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse_replies)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        OntologyError,
        CalibrationError,
        MetricError,
        be.BackendError,
        run_mod.RunnerError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        return _fail(str(exc), type(exc).__name__)


if __name__ == "__main__":
    sys.exit(main())
