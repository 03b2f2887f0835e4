"""Ontology resource bundles: event types, role questions, event templates.

Resource files are JSON or YAML. Role order in the file is authoritative: it
fixes question numbering q1..qN in LLM prompts and example ordering, so it is
preserved everywhere.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .templates import TemplateParseError, parse_template


class OntologyError(ValueError):
    """Raised when a resource file violates the ontology invariants."""


@dataclass(frozen=True)
class RoleDef:
    name: str
    question: str


@dataclass(frozen=True)
class EventTypeDef:
    name: str
    template: str
    roles: tuple[RoleDef, ...]

    def role_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.roles)


@dataclass(frozen=True)
class Ontology:
    ontology_id: str
    event_types: tuple[EventTypeDef, ...]

    def get(self, name: str) -> Optional[EventTypeDef]:
        for et in self.event_types:
            if et.name == name:
                return et
        return None


@dataclass(frozen=True)
class LintFinding:
    level: str  # "error" | "warning"
    code: str
    event_type: str
    role: str
    message: str


def validate_ontology(ontology: Ontology) -> None:
    """Invariant check; raises OntologyError on the first violation."""
    seen_types: set[str] = set()
    for et in ontology.event_types:
        if et.name in seen_types:
            raise OntologyError(f"duplicate event type {et.name!r}")
        seen_types.add(et.name)
        role_names = [r.name for r in et.roles]
        dupes = [n for n, c in Counter(role_names).items() if c > 1]
        if dupes:
            raise OntologyError(f"event type {et.name!r}: duplicate role name(s) {dupes}")
        for r in et.roles:
            if not r.question or not r.question.endswith("?"):
                raise OntologyError(
                    f"event type {et.name!r}, role {r.name!r}: question must be nonempty and end with '?'"
                )
        try:
            ast = parse_template(et.template)
        except TemplateParseError as exc:
            raise OntologyError(f"event type {et.name!r}: template does not parse: {exc}") from exc
        slots = Counter(ast.slot_roles)
        roles = Counter(role_names)
        if slots != roles:
            missing = sorted((roles - slots).keys())
            extra = sorted((slots - roles).keys())
            detail = []
            if missing:
                detail.append(f"missing slot(s) for role(s) {missing}")
            if extra:
                detail.append(f"slot(s) {extra} have no matching role")
            raise OntologyError(f"event type {et.name!r}: template/role mismatch: " + "; ".join(detail))


def _ontology_from_dict(raw: dict) -> Ontology:
    try:
        event_types = tuple(
            EventTypeDef(
                name=et["name"],
                template=et["template"],
                roles=tuple(RoleDef(r["name"], r["question"]) for r in et.get("roles", [])),
            )
            for et in raw["event_types"]
        )
        onto = Ontology(ontology_id=raw["ontology_id"], event_types=event_types)
    except (KeyError, TypeError) as exc:
        raise OntologyError(f"malformed resource file: {exc}") from exc
    return onto


def ontology_to_dict(ontology: Ontology) -> dict:
    return {
        "ontology_id": ontology.ontology_id,
        "event_types": [
            {
                "name": et.name,
                "template": et.template,
                "roles": [{"name": r.name, "question": r.question} for r in et.roles],
            }
            for et in ontology.event_types
        ],
    }


def load_ontology(path: str | Path) -> Ontology:
    """Load and invariant-check a JSON or YAML resource file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        raw = yaml.safe_load(text)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise OntologyError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise OntologyError(f"{path}: resource file must hold a mapping")
    onto = _ontology_from_dict(raw)
    validate_ontology(onto)
    return onto


def save_ontology(ontology: Ontology, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".yaml", ".yml"):
        path.write_text(yaml.safe_dump(ontology_to_dict(ontology), sort_keys=False), encoding="utf-8")
    else:
        path.write_text(json.dumps(ontology_to_dict(ontology), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def lint_ontology(ontology: Ontology) -> list[LintFinding]:
    """Authoring-convention lint.

    Errors: template parse failures, slot/role bijection violations, adjacent
    slots. Warnings: a question mentioning its role name verbatim
    (case-insensitive whole-word) -- advisory, a style choice rather than a
    hard constraint.
    """
    findings: list[LintFinding] = []
    for et in ontology.event_types:
        role_names = [r.name for r in et.roles]
        try:
            ast = parse_template(et.template)
        except TemplateParseError as exc:
            findings.append(LintFinding("error", exc.code, et.name, "", str(exc)))
            ast = None
        if ast is not None:
            slots = Counter(ast.slot_roles)
            roles = Counter(role_names)
            for role in sorted((roles - slots).keys()):
                findings.append(
                    LintFinding("error", "missing-slot", et.name, role, f"template has no slot for role {role!r}")
                )
            for role in sorted((slots - roles).keys()):
                findings.append(
                    LintFinding("error", "unknown-slot", et.name, role, f"slot {role!r} matches no role")
                )
        for r in et.roles:
            if r.name and re.search(r"\b" + re.escape(r.name) + r"\b", r.question, flags=re.IGNORECASE):
                findings.append(
                    LintFinding(
                        "warning",
                        "role-name-in-question",
                        et.name,
                        r.name,
                        f"question contains its role name {r.name!r} verbatim",
                    )
                )
    return findings
