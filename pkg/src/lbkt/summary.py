"""Canonical knowledge-summary grammar.

A summary is up to three labeled sections

    Mastered: addition, multiplication.
    Not mastered: subtraction.
    Misconceptions: forgets to carry in addition; fails any operation involving the number 7.

plus optional free-standing override sentences of the form "The student has
(not) mastered X ...". Rendering a profile always emits all three sections;
the parser accepts any subset (at least one) in any order, with constructs
named by full word or add/sub/mul/div shorthand. Constructs mentioned in
neither section are treated as not mastered.
"""

from __future__ import annotations

import re
from functools import lru_cache

from .students import (
    Misconception,
    MisconceptionKind,
    OP_ORDER,
    Operator,
    StudentProfile,
)


class SummaryParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at character {position})")
        self.position = position


OP_WORDS = {
    Operator.ADD: "addition",
    Operator.SUB: "subtraction",
    Operator.MUL: "multiplication",
    Operator.DIV: "division",
}

MISCONCEPTION_PHRASES = {
    MisconceptionKind.NO_CARRY_ADD: "forgets to carry in addition",
    MisconceptionKind.FAILS_MUL_WITH: "fails multiplications involving the number {x}",
    MisconceptionKind.FAILS_ANY_WITH: "fails any operation involving the number {x}",
    MisconceptionKind.FAILS_OPERAND_OVER_10: "fails whenever an operand is over 10",
    MisconceptionKind.ROUNDS_DIV_DOWN: "always rounds division down",
    MisconceptionKind.FAILS_NEGATIVE: "fails with negative numbers",
}


def misconception_phrase(m: Misconception) -> str:
    return MISCONCEPTION_PHRASES[m.kind].format(x=m.x)


def render_summary(
    profile: StudentProfile, observed: frozenset[Operator] | set[Operator] | None = None
) -> str:
    """Profile to canonical text.

    With observed set, constructs outside it are omitted from both mastery
    sections (the evidence did not cover them); misconceptions are always
    listed in full.
    """
    ops = OP_ORDER if observed is None else tuple(op for op in OP_ORDER if op in observed)
    mastered = [OP_WORDS[op] for op in ops if op in profile.mastered]
    unmastered = [OP_WORDS[op] for op in ops if op not in profile.mastered]
    phrases = [misconception_phrase(m) for m in profile.misconceptions]
    return "\n".join(
        [
            f"Mastered: {', '.join(mastered) if mastered else 'none'}.",
            f"Not mastered: {', '.join(unmastered) if unmastered else 'none'}.",
            f"Misconceptions: {'; '.join(phrases) if phrases else 'none'}.",
        ]
    )


_SECTION_RE = re.compile(r"(not\s+mastered|mastered|misconceptions)\s*:", re.IGNORECASE)
# The whole sentence is consumed, so trailing qualifiers like "... except in
# the event of misconceptions" do not leak into item parsing.
_OVERRIDE_RE = re.compile(
    r"(?:the\s+)?student\s+has\s+(not\s+)?mastered\s+([a-zA-Z]+)[^.;\n]*",
    re.IGNORECASE,
)
_EMPTY_WORDS = {"", "none", "nothing", "n/a", "-"}

_CONSTRUCT_PREFIXES = (
    ("add", Operator.ADD),
    ("sub", Operator.SUB),
    ("mul", Operator.MUL),
    ("div", Operator.DIV),
)


def _parse_construct(token: str) -> Operator | None:
    word = token.strip().strip(".").lower()
    for prefix, op in _CONSTRUCT_PREFIXES:
        if word.startswith(prefix):
            return op
    return None


_NUMBER_RE = re.compile(r"(\d+)")


def _parse_misconception(item: str, position: int) -> Misconception:
    low = item.lower()

    def number() -> int:
        m = _NUMBER_RE.search(low)
        if not m:
            raise SummaryParseError(f"misconception {item!r} names no number", position)
        return int(m.group(1))

    if "carry" in low:
        return Misconception(MisconceptionKind.NO_CARRY_ADD)
    if "involving" in low or "with the number" in low:
        if "multiplication" in low or re.search(r"\bmul\b", low):
            return Misconception(MisconceptionKind.FAILS_MUL_WITH, x=number())
        return Misconception(MisconceptionKind.FAILS_ANY_WITH, x=number())
    if "operand" in low and ("over" in low or ">" in low or "greater" in low):
        return Misconception(MisconceptionKind.FAILS_OPERAND_OVER_10)
    if ("division" in low or "divide" in low or "div" in low) and (
        "down" in low or "floor" in low
    ):
        return Misconception(MisconceptionKind.ROUNDS_DIV_DOWN)
    if "negative" in low:
        return Misconception(MisconceptionKind.FAILS_NEGATIVE)
    raise SummaryParseError(f"unrecognized misconception {item!r}", position)


def parse_summary(text: str) -> StudentProfile:
    """Text to profile; raises SummaryParseError with a character position.

    Misconception items must follow the canonical phrase patterns; unknown
    constructs or phrases are errors rather than silently dropped, so a
    decoder never acts on a summary it only half understood.
    """
    matches = list(_SECTION_RE.finditer(text))
    if not matches:
        raise SummaryParseError("no summary sections found", 0)

    mastered: set[Operator] = set()
    unmastered: set[Operator] = set()
    misconceptions: list[Misconception] = []
    overrides: list[tuple[Operator, bool]] = []

    def lift_overrides(chunk: str, base: int) -> str:
        """Record override sentences, then blank them with spaces so item
        offsets inside the chunk stay aligned with the original text."""
        for om in _OVERRIDE_RE.finditer(chunk):
            op = _parse_construct(om.group(2))
            if op is None:
                raise SummaryParseError(
                    f"unknown construct {om.group(2)!r}", base + om.start(2)
                )
            overrides.append((op, not om.group(1)))
        return _OVERRIDE_RE.sub(lambda om: " " * (om.end() - om.start()), chunk)

    lift_overrides(text[: matches[0].start()], 0)

    for i, m in enumerate(matches):
        label = re.sub(r"\s+", " ", m.group(1).lower())
        start = m.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        body = lift_overrides(text[start:end], start)

        for item, offset in _split_items(body):
            word = item.strip()
            if word.lower() in _EMPTY_WORDS:
                continue
            position = start + offset
            if label == "misconceptions":
                try:
                    misconceptions.append(_parse_misconception(word, position))
                except ValueError as exc:
                    if isinstance(exc, SummaryParseError):
                        raise
                    raise SummaryParseError(str(exc), position)
            else:
                op = _parse_construct(word)
                if op is None:
                    raise SummaryParseError(f"unknown construct {word!r}", position)
                (unmastered if label == "not mastered" else mastered).add(op)

    # Listing ties break toward "not mastered"; overrides then beat listings
    # regardless of section order, later overrides beating earlier ones.
    mastered -= unmastered
    for op, is_mastered in overrides:
        if is_mastered:
            mastered.add(op)
        else:
            mastered.discard(op)

    unique: dict[MisconceptionKind, Misconception] = {}
    for mc in misconceptions:
        unique.setdefault(mc.kind, mc)
    return StudentProfile(
        id="summary",
        mastered=frozenset(mastered),
        misconceptions=tuple(unique.values()),
    )


def _split_items(body: str):
    """Split section text on item separators, keeping source offsets."""
    items = []
    token_start = None
    for i, ch in enumerate(body + "\x00"):
        if ch in ",;.\n\x00":
            if token_start is not None:
                items.append((body[token_start:i], token_start))
                token_start = None
        elif token_start is None and not ch.isspace():
            token_start = i
    # "a and b" style lists: strip a leading "and ".
    return [
        (re.sub(r"^\s*and\s+", "", item, flags=re.IGNORECASE), off)
        for item, off in items
    ]


@lru_cache(maxsize=4096)
def parse_summary_cached(text: str) -> StudentProfile:
    return parse_summary(text)
