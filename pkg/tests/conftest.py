import pytest

from eae_harness.corpus import ArgumentMention, Corpus, Document, EventInstance, Span
from eae_harness.resources import EventTypeDef, Ontology, RoleDef


def span_in(text: str, needle: str, occurrence: int = 0) -> Span:
    """Span for the nth occurrence of needle in text."""
    start = -1
    for _ in range(occurrence + 1):
        start = text.index(needle, start + 1)
    return Span(start, start + len(needle), needle)


@pytest.fixture
def attack_ontology() -> Ontology:
    return Ontology(
        ontology_id="fixture",
        event_types=(
            EventTypeDef(
                name="Conflict.Attack",
                template="{Attacker} attacked {Target} using {Instrument}",
                roles=(
                    RoleDef("Attacker", "Who attacked someone or something?"),
                    RoleDef("Target", "Who or what was attacked?"),
                    RoleDef("Instrument", "What device or weapon was used?"),
                ),
            ),
            EventTypeDef(
                name="Movement.Transport",
                template="{Agent} moved {Artifact} to {Destination}",
                roles=(
                    RoleDef("Agent", "Who did the moving?"),
                    RoleDef("Artifact", "What was moved?"),
                    RoleDef("Destination", "Where did it end up?"),
                ),
            ),
        ),
    )


@pytest.fixture
def attack_doc() -> Document:
    text = "Troops attacked the base with mortars on Friday."
    return Document(
        doc_id="d1",
        text=text,
        split="test",
        events=(
            EventInstance(
                event_id="e1",
                event_type="Conflict.Attack",
                trigger=span_in(text, "attacked"),
                arguments=(
                    ArgumentMention("Attacker", "Troops", span_in(text, "Troops")),
                    ArgumentMention("Target", "the base", span_in(text, "the base")),
                ),
            ),
        ),
    )


@pytest.fixture
def attack_corpus(attack_doc) -> Corpus:
    return Corpus(dataset_id="fixture", ontology_id="fixture", documents=(attack_doc,))
