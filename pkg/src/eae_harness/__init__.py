"""Ontology-portable event argument extraction transfer harness.

Two task reformulations -- extractive QA and template infilling -- as a
model-agnostic pipeline: resource authoring/linting, example construction,
span/template decoding, threshold calibration, chat prompt protocol, typed
argument F1 scoring, and a cross-ontology transfer experiment runner.
"""

__version__ = "0.1.0"
