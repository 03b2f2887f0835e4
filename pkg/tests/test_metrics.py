"""Tests for argument F1, per-type breakdowns, and Pearson correlation.

The micro counts use a per-string min(pred, gold) rule; the independent
oracle below computes the same quantity as a maximum bipartite matching
between individual predicted and gold mentions, which is the definition the
counting shortcut must agree with.
"""
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eae_harness.corpus import ArgumentMention, Corpus, Document, EventInstance, Span
from eae_harness.metrics import (
    AggregateReport,
    EvalReport,
    MetricError,
    PredictionSet,
    aggregate_runs,
    argument_f1,
    correlate_transfer,
    pearson_rho,
    per_event_type_f1,
)

ROLES = ("A", "B")
WORDS = ("alpha", "beta", "gamma", " delta ", "alpha ")


def _max_matching(preds, golds):
    """Maximum bipartite matching size between mention lists; edge iff
    trimmed strings are equal. Kuhn's augmenting-path algorithm."""
    adj = [
        [j for j, g in enumerate(golds) if p.strip() == g.strip()]
        for p in preds
    ]
    match_g = [-1] * len(golds)

    def try_augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if match_g[j] == -1 or try_augment(match_g[j], seen):
                match_g[j] = i
                return True
        return False

    return sum(1 for i in range(len(preds)) if try_augment(i, set()))


def brute_force_counts(pred_entries, gold_entries):
    """(tp, fp, fn) over parallel {key: {role: [strings]}} maps."""
    tp = fp = fn = 0
    keys = set(pred_entries) | set(gold_entries)
    for key in keys:
        proles = pred_entries.get(key, {})
        groles = gold_entries.get(key, {})
        for role in set(proles) | set(groles):
            p = list(proles.get(role, ()))
            g = list(groles.get(role, ()))
            m = _max_matching(p, g)
            tp += m
            fp += len(p) - m
            fn += len(g) - m
    return tp, fp, fn


def _corpus_from_gold(gold_entries):
    """Build a corpus whose argument strings are exactly gold_entries. Spans
    are omitted: the metric is string-typed and ignores offsets."""
    docs = {}
    for (doc_id, event_id), roles in gold_entries.items():
        args = tuple(
            ArgumentMention(role, text, None)
            for role, texts in sorted(roles.items())
            for text in texts
        )
        docs.setdefault(doc_id, []).append(
            EventInstance(event_id, "T", Span(0, 1, "x"), args)
        )
    documents = tuple(
        Document(doc_id, "x " + "filler " * 5, tuple(events), "test")
        for doc_id, events in sorted(docs.items())
    )
    return Corpus("m", "o", documents)


def _random_entries(rng, keys):
    out = {}
    for key in keys:
        roles = {}
        for role in ROLES:
            n = rng.randint(0, 3)
            if n:
                roles[role] = tuple(rng.choice(WORDS) for _ in range(n))
        if roles:
            out[key] = roles
    return out


class TestArgumentF1:
    def test_matches_brute_force_on_random_cases(self):
        rng = random.Random(20240817)
        for _ in range(300):
            keys = [(f"d{i}", "e0") for i in range(rng.randint(1, 4))]
            gold_entries = _random_entries(rng, keys)
            pred_keys = [k for k in keys if k in gold_entries]
            pred_entries = _random_entries(rng, pred_keys)
            gold = _corpus_from_gold({k: gold_entries.get(k, {}) for k in keys})
            report = argument_f1(PredictionSet(entries=pred_entries), gold)
            tp, fp, fn = brute_force_counts(pred_entries, gold_entries)
            assert (report.tp, report.fp, report.fn) == (tp, fp, fn)

    def test_worked_example_two_thirds(self):
        # One of two predictions is right and one of two gold args is found:
        # P = 1/2, R = 1/2 within the role... here arranged so F1 = 2/3.
        gold = _corpus_from_gold({("d1", "e1"): {"A": ("alpha", "beta")}})
        pred = PredictionSet(entries={("d1", "e1"): {"A": ("alpha",)}})
        report = argument_f1(pred, gold)
        assert report.tp == 1 and report.fp == 0 and report.fn == 1
        assert abs(report.f1 - 2 / 3) < 1e-12

    def test_whitespace_trimmed_case_sensitive(self):
        gold = _corpus_from_gold({("d1", "e1"): {"A": (" alpha ",)}})
        assert argument_f1(PredictionSet(entries={("d1", "e1"): {"A": ("alpha",)}}), gold).f1 == 1.0
        report = argument_f1(PredictionSet(entries={("d1", "e1"): {"A": ("Alpha",)}}), gold)
        assert report.tp == 0

    def test_role_typing_enforced(self):
        gold = _corpus_from_gold({("d1", "e1"): {"A": ("alpha",)}})
        report = argument_f1(PredictionSet(entries={("d1", "e1"): {"B": ("alpha",)}}), gold)
        assert report.tp == 0 and report.fp == 1 and report.fn == 1

    def test_duplicate_strings_count_with_multiplicity(self):
        gold = _corpus_from_gold({("d1", "e1"): {"A": ("alpha", "alpha")}})
        report = argument_f1(
            PredictionSet(entries={("d1", "e1"): {"A": ("alpha", "alpha", "alpha")}}), gold
        )
        assert (report.tp, report.fp, report.fn) == (2, 1, 0)

    def test_both_empty_is_perfect(self):
        gold = _corpus_from_gold({("d1", "e1"): {}})
        report = argument_f1(PredictionSet(entries={}), gold)
        assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)

    def test_unknown_key_rejected(self):
        gold = _corpus_from_gold({("d1", "e1"): {"A": ("alpha",)}})
        with pytest.raises(MetricError):
            argument_f1(PredictionSet(entries={("dX", "e1"): {"A": ("alpha",)}}), gold)

    @settings(max_examples=60, deadline=None)
    @given(
        data=st.dictionaries(
            st.sampled_from([("d1", "e1"), ("d2", "e0")]),
            st.dictionaries(
                st.sampled_from(ROLES),
                st.lists(st.sampled_from(WORDS), min_size=1, max_size=3).map(tuple),
                max_size=2,
            ),
            max_size=2,
        )
    )
    def test_self_comparison_is_perfect(self, data):
        # Predicting exactly the gold strings always scores 1.0.
        keys = set(data) | {("d1", "e1")}
        gold = _corpus_from_gold({k: data.get(k, {}) for k in keys})
        pred = PredictionSet(entries=data)
        assert argument_f1(pred, gold).f1 == 1.0


class TestPerEventType:
    def test_breakdown(self):
        t = "x " + "filler " * 5
        doc = Document(
            "d1",
            t,
            (
                EventInstance("e1", "T1", Span(0, 1, "x"), (ArgumentMention("A", "alpha", None),)),
                EventInstance("e2", "T2", Span(0, 1, "x"), (ArgumentMention("A", "beta", None),)),
            ),
            "test",
        )
        gold = Corpus("m", "o", (doc,))
        pred = PredictionSet(
            entries={("d1", "e1"): {"A": ("alpha",)}, ("d1", "e2"): {"A": ("wrong",)}}
        )
        per_type = per_event_type_f1(pred, gold)
        assert per_type == {"T1": 1.0, "T2": 0.0}

    def test_silent_types_omitted(self):
        t = "x " + "filler " * 5
        doc = Document(
            "d1",
            t,
            (EventInstance("e1", "T1", Span(0, 1, "x"), ()),),
            "test",
        )
        gold = Corpus("m", "o", (doc,))
        assert per_event_type_f1(PredictionSet(entries={}), gold) == {}


class TestPearson:
    def test_perfect_positive_and_negative(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        assert abs(pearson_rho(xs, [2 * x + 1 for x in xs]) - 1.0) < 1e-12
        assert abs(pearson_rho(xs, [-3 * x + 7 for x in xs]) + 1.0) < 1e-12

    def test_three_point_fixture(self):
        # xs=(1,2,4), ys=(1,3,3): rho = 2/sqrt(7), worked by hand.
        assert abs(pearson_rho([1, 2, 4], [1, 3, 3]) - 2 / math.sqrt(7)) < 1e-9

    def test_symmetry(self):
        xs, ys = [0.1, 0.5, 0.9, 0.3], [0.2, 0.4, 0.8, 0.9]
        assert pearson_rho(xs, ys) == pytest.approx(pearson_rho(ys, xs), abs=1e-15)

    def test_errors(self):
        with pytest.raises(MetricError):
            pearson_rho([1.0], [2.0])
        with pytest.raises(MetricError):
            pearson_rho([1.0, 2.0], [3.0, 3.0])
        with pytest.raises(MetricError):
            pearson_rho([1.0, 2.0, 3.0], [1.0, 2.0])

    def test_correlate_transfer_intersects_types(self):
        in_domain = {"T1": 0.9, "T2": 0.5, "T3": 0.7, "Tx": 0.2}
        zero_shot = {"T1": 0.8, "T2": 0.4, "T3": 0.6, "Ty": 0.1}
        rho, n = correlate_transfer(in_domain, zero_shot)
        assert n == 3
        assert abs(rho - 1.0) < 1e-12

    def test_correlate_transfer_needs_overlap(self):
        with pytest.raises(MetricError):
            correlate_transfer({"T1": 0.5}, {"T2": 0.5})


class TestAggregate:
    def test_mean_of_runs(self):
        r1 = EvalReport(1.0, 0.5, 2 / 3, 1, 0, 1)
        r2 = EvalReport(0.5, 1.0, 2 / 3, 1, 1, 0)
        agg = aggregate_runs([r1, r2])
        assert isinstance(agg, AggregateReport)
        assert agg.precision == pytest.approx(0.75)
        assert agg.recall == pytest.approx(0.75)
        assert agg.f1 == pytest.approx(2 / 3)
        assert agg.runs == (r1, r2)

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            aggregate_runs([])
