"""Synthetic fixture generation.

Licensed upstream corpora cannot ship with the harness, so tests and the
acceptance suite run on generated corpora whose argument strings satisfy the
template round-trip preconditions: single tokens, never equal to a role name,
never containing " and " or any template literal.
"""
from __future__ import annotations

import random
from typing import Optional

from .corpus import ArgumentMention, Corpus, Document, EventInstance, Span
from .resources import EventTypeDef, Ontology, RoleDef

ROLE_POOL = (
    "Agent", "Patient", "Place", "Instrument", "Origin",
    "Destination", "Beneficiary", "Topic", "Medium", "Outcome",
)

EVENT_NAME_POOL = (
    "proc.alpha", "proc.beta", "proc.gamma", "proc.delta",
    "proc.epsilon", "proc.zeta", "proc.eta", "proc.theta",
)


def make_ontology(
    ontology_id: str = "synth",
    n_event_types: int = 3,
    roles_per_type: int = 3,
    rng: Optional[random.Random] = None,
) -> Ontology:
    rng = rng or random.Random(0)
    event_types = []
    for t in range(n_event_types):
        name = EVENT_NAME_POOL[t % len(EVENT_NAME_POOL)] + (f".{t}" if t >= len(EVENT_NAME_POOL) else "")
        roles = [ROLE_POOL[i % len(ROLE_POOL)] for i in range(roles_per_type)]
        template = (
            f"Record {t}: the " + ", then the ".join("{" + r + "}" for r in roles) + " took part."
        )
        role_defs = tuple(
            RoleDef(name=r, question=f"Which participant filled position {i + 1}?")
            for i, r in enumerate(roles)
        )
        event_types.append(EventTypeDef(name=name, template=template, roles=role_defs))
    return Ontology(ontology_id=ontology_id, event_types=tuple(event_types))


def make_corpus(
    ontology: Ontology,
    n_docs: int = 20,
    max_args_per_role: int = 2,
    p_empty_role: float = 0.25,
    seed: int = 0,
    dataset_id: str = "synth",
    split: str = "test",
) -> Corpus:
    """Documents with one triggered event each; every argument is a distinct
    single token appearing exactly once in the text."""
    rng = random.Random(seed)
    docs = []
    token_counter = 0
    for d in range(n_docs):
        etype = ontology.event_types[rng.randrange(len(ontology.event_types))]
        tokens: list[str] = [f"report{d}", "notes", "that"]
        trigger_token = f"evt{d}"
        trigger_index = len(tokens)
        tokens.append(trigger_token)
        tokens.append("involved")
        args: list[tuple[str, int]] = []  # (role, token index)
        for role in etype.role_names():
            if rng.random() < p_empty_role:
                continue
            n_args = rng.randint(1, max_args_per_role)
            for _ in range(n_args):
                token_counter += 1
                tokens.append(f"w{token_counter:05d}")
                args.append((role, len(tokens) - 1))
                tokens.append("plus")
        tokens.append("overall.")
        text = " ".join(tokens)
        offsets = []
        pos = 0
        for tok in tokens:
            offsets.append((pos, pos + len(tok)))
            pos += len(tok) + 1
        trig_s, trig_e = offsets[trigger_index]
        mentions = tuple(
            ArgumentMention(
                role=role,
                text=tokens[idx],
                span=Span(offsets[idx][0], offsets[idx][1], tokens[idx]),
            )
            for role, idx in args
        )
        docs.append(
            Document(
                doc_id=f"doc{d:04d}",
                text=text,
                split=split,
                events=(
                    EventInstance(
                        event_id="e0",
                        event_type=etype.name,
                        trigger=Span(trig_s, trig_e, trigger_token),
                        arguments=mentions,
                    ),
                ),
            )
        )
    return Corpus(dataset_id=dataset_id, ontology_id=ontology.ontology_id, documents=tuple(docs))


def make_fixture(
    n_docs: int = 20,
    n_event_types: int = 3,
    roles_per_type: int = 3,
    max_args_per_role: int = 2,
    p_empty_role: float = 0.25,
    seed: int = 0,
    dataset_id: str = "synth",
    ontology_id: str = "synth",
    split: str = "test",
) -> tuple[Corpus, Ontology]:
    onto = make_ontology(ontology_id, n_event_types, roles_per_type, random.Random(seed))
    corpus = make_corpus(
        onto,
        n_docs=n_docs,
        max_args_per_role=max_args_per_role,
        p_empty_role=p_empty_role,
        seed=seed,
        dataset_id=dataset_id,
        split=split,
    )
    return corpus, onto
