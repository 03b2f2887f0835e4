"""Typed exact-match argument F1, per-event-type breakdowns, and Pearson
correlation between in-domain and zero-shot per-type scores.

An argument is correct iff its string equals a gold argument of the same role
for the same event. Matching is case-sensitive exact equality after trimming
leading/trailing whitespace.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .corpus import Corpus


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionSet:
    """Predicted argument strings per (doc_id, event_id) and role."""
    entries: Mapping[tuple[str, str], Mapping[str, tuple[str, ...]]]
    method: str = ""
    backend_id: str = ""
    diagnostics: Mapping[str, int] = field(default_factory=dict)

    def roles_for(self, doc_id: str, event_id: str) -> Mapping[str, tuple[str, ...]]:
        return self.entries.get((doc_id, event_id), {})


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_event_type: Mapping[str, float] = field(default_factory=dict)
    diagnostics: Mapping[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_event_type": dict(self.per_event_type),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp == fp == fn == 0:
        # Nothing predicted, nothing gold: vacuously perfect.
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _counts(pred: PredictionSet, gold: Corpus, event_type: Optional[str] = None) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for doc in gold.documents:
        for ev in doc.events:
            if event_type is not None and ev.event_type != event_type:
                continue
            pred_roles = pred.roles_for(doc.doc_id, ev.event_id)
            gold_by_role: dict[str, Counter] = {}
            for a in ev.arguments:
                gold_by_role.setdefault(a.role, Counter())[a.text.strip()] += 1
            roles = set(gold_by_role) | set(pred_roles)
            for role in roles:
                g = gold_by_role.get(role, Counter())
                p = Counter(s.strip() for s in pred_roles.get(role, ()))
                matched = sum(min(p[s], g[s]) for s in p)
                tp += matched
                fp += sum(p.values()) - matched
                fn += sum(g.values()) - matched
    return tp, fp, fn


def argument_f1(pred: PredictionSet, gold: Corpus) -> EvalReport:
    """Micro-averaged typed exact-match argument F1 over the whole corpus."""
    gold_keys = {(d.doc_id, e.event_id) for d in gold.documents for e in d.events}
    unknown = set(pred.entries) - gold_keys
    if unknown:
        raise MetricError(f"predictions reference unknown (doc, event) pairs: {sorted(unknown)[:3]}")
    tp, fp, fn = _counts(pred, gold)
    p, r, f1 = _prf(tp, fp, fn)
    return EvalReport(
        precision=p,
        recall=r,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        per_event_type=per_event_type_f1(pred, gold),
        diagnostics=dict(pred.diagnostics),
    )


def per_event_type_f1(pred: PredictionSet, gold: Corpus) -> dict[str, float]:
    """Micro F1 within each event type. Types with neither gold nor predicted
    arguments are omitted."""
    types = {e.event_type for d in gold.documents for e in d.events}
    out: dict[str, float] = {}
    for etype in sorted(types):
        tp, fp, fn = _counts(pred, gold, event_type=etype)
        if tp == fp == fn == 0:
            continue
        out[etype] = _prf(tp, fp, fn)[2]
    return out


def pearson_rho(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson product-moment correlation coefficient."""
    n = len(xs)
    if n != len(ys):
        raise MetricError(f"series lengths differ: {n} vs {len(ys)}")
    if n < 2:
        raise MetricError("need at least 2 points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        raise MetricError("zero variance in at least one series")
    return sxy / math.sqrt(sxx * syy)


def correlate_transfer(
    in_domain: Mapping[str, float], zero_shot: Mapping[str, float]
) -> tuple[float, int]:
    """Pearson rho over the event types present in both per-type F1 maps."""
    common = sorted(set(in_domain) & set(zero_shot))
    if len(common) < 2:
        raise MetricError(f"need at least 2 shared event types, found {len(common)}")
    rho = pearson_rho([in_domain[t] for t in common], [zero_shot[t] for t in common])
    return rho, len(common)


@dataclass(frozen=True)
class AggregateReport:
    precision: float
    recall: float
    f1: float
    runs: tuple[EvalReport, ...]

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "runs": [r.to_dict() for r in self.runs],
        }


def aggregate_runs(reports: Sequence[EvalReport]) -> AggregateReport:
    """Arithmetic mean of P/R/F1 across runs; individual runs retained."""
    if not reports:
        raise MetricError("need at least one report")
    n = len(reports)
    return AggregateReport(
        precision=sum(r.precision for r in reports) / n,
        recall=sum(r.recall for r in reports) / n,
        f1=sum(r.f1 for r in reports) / n,
        runs=tuple(reports),
    )
