"""Template infilling grammar: parse, render, and invert filled templates.

Slots are written "{Role Name}"; literal braces are escaped "{{" / "}}".
Multiple arguments for one role are coordinated with " and "; a slot with no
arguments renders as the bare role name, so an all-empty rendering equals the
unfilled prompt form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence


class TemplateError(ValueError):
    """Base class for template grammar failures."""


class TemplateParseError(TemplateError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class SkeletonMismatch(TemplateError):
    """A generated string does not contain the template's literal skeleton."""


MULTI_ARG_JOINER = " and "


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class Slot:
    role: str


@dataclass(frozen=True)
class TemplateAst:
    parts: tuple

    @property
    def slot_roles(self) -> tuple[str, ...]:
        return tuple(p.role for p in self.parts if isinstance(p, Slot))


@dataclass(frozen=True)
class RoleFills:
    """role -> ordered argument strings. split_roles records slots whose text
    was split on the joiner (possible false splits)."""
    fills: Mapping[str, tuple[str, ...]]
    split_roles: tuple[str, ...] = ()


def parse_template(src: str) -> TemplateAst:
    """Parse the template DSL into an alternation of Literals and Slots."""
    parts: list = []
    buf: list[str] = []
    seen_roles: set[str] = set()
    i = 0
    n = len(src)

    def flush_literal() -> None:
        if buf:
            parts.append(Literal("".join(buf)))
            buf.clear()

    while i < n:
        ch = src[i]
        if ch == "{":
            if i + 1 < n and src[i + 1] == "{":
                buf.append("{")
                i += 2
                continue
            close = src.find("}", i + 1)
            if close == -1:
                raise TemplateParseError("unbalanced-brace", f"unclosed '{{' at position {i}")
            name = src[i + 1 : close]
            if "{" in name:
                raise TemplateParseError("unbalanced-brace", f"nested '{{' at position {i}")
            if not name.strip():
                raise TemplateParseError("empty-slot-name", f"empty slot name at position {i}")
            if name in seen_roles:
                raise TemplateParseError("duplicate-slot", f"role {name!r} appears in more than one slot")
            flush_literal()
            if parts and isinstance(parts[-1], Slot):
                raise TemplateParseError(
                    "adjacent-slots",
                    f"slots {parts[-1].role!r} and {name!r} are adjacent with no literal separator",
                )
            seen_roles.add(name)
            parts.append(Slot(name))
            i = close + 1
        elif ch == "}":
            if i + 1 < n and src[i + 1] == "}":
                buf.append("}")
                i += 2
                continue
            raise TemplateParseError("unbalanced-brace", f"unmatched '}}' at position {i}")
        else:
            buf.append(ch)
            i += 1
    flush_literal()
    return TemplateAst(tuple(parts))


def serialize_template(ast: TemplateAst) -> str:
    """Back to the DSL; re-parses to an equivalent AST."""
    out = []
    for p in ast.parts:
        if isinstance(p, Slot):
            out.append("{" + p.role + "}")
        else:
            out.append(p.text.replace("{", "{{").replace("}", "}}"))
    return "".join(out)


def render_unfilled(ast: TemplateAst) -> str:
    """Each slot replaced by its role name, literals verbatim."""
    return "".join(p.role if isinstance(p, Slot) else p.text for p in ast.parts)


def render_filled(ast: TemplateAst, fills: RoleFills | Mapping[str, Sequence[str]]) -> str:
    """Fill slots with arguments; n >= 1 args join with " and ", 0 args render
    the role name itself."""
    mapping = fills.fills if isinstance(fills, RoleFills) else fills
    for role in mapping:
        if role not in ast.slot_roles:
            raise TemplateError(f"fill role {role!r} has no slot in the template")
    out = []
    for p in ast.parts:
        if isinstance(p, Literal):
            out.append(p.text)
        else:
            args = list(mapping.get(p.role, ()))
            out.append(MULTI_ARG_JOINER.join(args) if args else p.role)
    return "".join(out)


def parse_filled(ast: TemplateAst, generated: str) -> RoleFills:
    """Invert render_filled on a generated string.

    Literal segments are located left-to-right (first occurrence at or after
    the previous match end); text between them is assigned to the intervening
    slot and split on " and ". Slot text equal to the role name means no
    arguments. Raises SkeletonMismatch when the literal skeleton cannot be
    matched in order or trailing text remains after a final literal.
    """
    fills: dict[str, tuple[str, ...]] = {}
    split_roles: list[str] = []
    pos = 0
    pending_slot: Slot | None = None

    def assign(slot: Slot, text: str) -> None:
        if text == slot.role:
            fills[slot.role] = ()
            return
        args = tuple(text.split(MULTI_ARG_JOINER))
        if len(args) > 1:
            split_roles.append(slot.role)
        fills[slot.role] = args

    for idx, part in enumerate(ast.parts):
        if isinstance(part, Slot):
            pending_slot = part
            continue
        found = generated.find(part.text, pos)
        if found == -1:
            raise SkeletonMismatch(
                f"literal segment {part.text!r} not found at or after position {pos}"
            )
        if pending_slot is not None:
            assign(pending_slot, generated[pos:found])
            pending_slot = None
        elif generated[pos:found]:
            raise SkeletonMismatch(
                f"unexpected text {generated[pos:found]!r} before literal {part.text!r}"
            )
        pos = found + len(part.text)
        if idx == len(ast.parts) - 1 and pos != len(generated):
            raise SkeletonMismatch(
                f"trailing text {generated[pos:]!r} after final literal {part.text!r}"
            )
    if pending_slot is not None:
        assign(pending_slot, generated[pos:])
    return RoleFills(fills=fills, split_roles=tuple(split_roles))


def to_bracket_form(src: str) -> str:
    """Convert DSL slots "{Role}" to the bracketed form "[Role]" used by the
    paraphrase prompt."""
    ast = parse_template(src)
    out = []
    for p in ast.parts:
        if isinstance(p, Slot):
            out.append("[" + p.role + "]")
        else:
            out.append(p.text)
    return "".join(out)


def from_bracket_form(src: str) -> str:
    """Convert "[Role]" back to the DSL, escaping any literal braces."""
    out = []
    i = 0
    while i < len(src):
        ch = src[i]
        if ch == "[":
            close = src.find("]", i + 1)
            if close == -1:
                out.append("[")
                i += 1
                continue
            out.append("{" + src[i + 1 : close] + "}")
            i = close + 1
        else:
            if ch in "{}":
                out.append(ch * 2)
            else:
                out.append(ch)
            i += 1
    return "".join(out)
