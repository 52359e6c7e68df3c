"""Synthetic arithmetic students.

A student is a set of mastered constructs (the four basic operators) plus a
small list of systematic misconceptions. Answers are deterministic given the
profile; optional slip/guess noise perturbs them. Every random draw is keyed
by (seed, stream, student_index) so regeneration is exactly reproducible and
students are independent of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np


class Operator(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"


OP_ORDER: tuple[Operator, ...] = (Operator.ADD, Operator.SUB, Operator.MUL, Operator.DIV)

OP_SYMBOLS: Mapping[Operator, str] = {
    Operator.ADD: "+",
    Operator.SUB: "-",
    Operator.MUL: "*",
    Operator.DIV: "/",
}

_SYMBOL_OPS = {sym: op for op, sym in OP_SYMBOLS.items()}


class MisconceptionKind(str, Enum):
    NO_CARRY_ADD = "no_carry_add"
    FAILS_MUL_WITH = "fails_mul_with"
    FAILS_ANY_WITH = "fails_any_with"
    FAILS_OPERAND_OVER_10 = "fails_operand_over_10"
    ROUNDS_DIV_DOWN = "rounds_div_down"
    FAILS_NEGATIVE = "fails_negative"


# Fixed application order when several misconceptions could bite on one question.
POOL_ORDER: tuple[MisconceptionKind, ...] = (
    MisconceptionKind.NO_CARRY_ADD,
    MisconceptionKind.FAILS_MUL_WITH,
    MisconceptionKind.FAILS_ANY_WITH,
    MisconceptionKind.FAILS_OPERAND_OVER_10,
    MisconceptionKind.ROUNDS_DIV_DOWN,
    MisconceptionKind.FAILS_NEGATIVE,
)

PARAMETRIC_KINDS = frozenset(
    {MisconceptionKind.FAILS_MUL_WITH, MisconceptionKind.FAILS_ANY_WITH}
)

# Inclusive range for the x parameter of the parametric misconception kinds.
X_RANGE = (6, 9)


@dataclass(frozen=True)
class Misconception:
    kind: MisconceptionKind
    x: int | None = None

    def __post_init__(self):
        if self.kind in PARAMETRIC_KINDS:
            if self.x is None:
                raise ValueError(f"{self.kind.value} requires an x parameter")
            if not (X_RANGE[0] <= self.x <= X_RANGE[1]):
                raise ValueError(f"x must lie in {X_RANGE}, got {self.x}")
        elif self.x is not None:
            raise ValueError(f"{self.kind.value} takes no x parameter")


@dataclass(frozen=True)
class Question:
    id: int | str
    text: str
    op: Operator | None = None
    lhs: int | None = None
    rhs: int | None = None
    construct: str | None = None

    @property
    def is_arithmetic(self) -> bool:
        return self.op is not None and self.lhs is not None and self.rhs is not None


@dataclass(frozen=True)
class StudentProfile:
    id: str
    mastered: frozenset[Operator]
    misconceptions: tuple[Misconception, ...]
    slip_rate: float = 0.0
    guess_rate: float = 0.0

    def __post_init__(self):
        kinds = [m.kind for m in self.misconceptions]
        if len(kinds) != len(set(kinds)):
            raise ValueError("misconception kinds must be unique per student")
        for name in ("slip_rate", "guess_rate"):
            rate = getattr(self, name)
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")


@dataclass
class Interaction:
    question_id: int | str
    given_answer: int | str
    correct: bool
    timestamp: float | None = None
    response_time: float | None = None


@dataclass
class Trajectory:
    student_id: str
    interactions: list[Interaction]


@dataclass
class Dataset:
    bank: list[Question]
    profiles: list[StudentProfile]
    trajectories: list[Trajectory]

    def __post_init__(self):
        self._questions = {q.id: q for q in self.bank}
        self._profiles = {p.id: p for p in self.profiles}
        self._trajectories = {t.student_id: t for t in self.trajectories}

    def question(self, question_id) -> Question:
        return self._questions[question_id]

    def profile(self, student_id: str) -> StudentProfile | None:
        return self._profiles.get(student_id)

    def trajectory(self, student_id: str) -> Trajectory:
        return self._trajectories[student_id]

    @property
    def questions_by_id(self) -> Mapping:
        return self._questions


@dataclass
class SimConfig:
    n_students: int = 2000
    n_questions: int = 5000
    per_student: int = 210
    add_sub_range: tuple[int, int] = (0, 15)
    mul_div_range: tuple[int, int] = (1, 10)
    operators: tuple[Operator, ...] = OP_ORDER
    # P(student holds k misconceptions) for k = 0 .. len-1.
    misconception_count_probs: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    master_prob: float = 0.75
    slip_rate: float = 0.0
    guess_rate: float = 0.0
    seed: int = 0

    def validate(self):
        if self.n_students < 1 or self.n_questions < 1 or self.per_student < 1:
            raise ValueError("n_students, n_questions and per_student must be positive")
        if self.per_student > self.n_questions:
            raise ValueError(
                f"per_student={self.per_student} exceeds bank size {self.n_questions}"
            )
        if not self.operators:
            raise ValueError("at least one operator is required")
        probs = self.misconception_count_probs
        if len(probs) > len(POOL_ORDER) + 1:
            raise ValueError("count distribution longer than the misconception pool")
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ValueError("misconception_count_probs must be a distribution")
        for name in ("master_prob", "slip_rate", "guess_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        for lo, hi in (self.add_sub_range, self.mul_div_range):
            if lo > hi:
                raise ValueError("operand range is empty")
        if self.mul_div_range[0] < 1:
            raise ValueError("mul/div operands must be at least 1 (no zero division)")


# Separate stream tags keep bank, profile and trajectory draws independent.
_BANK_STREAM = 1
_PROFILE_STREAM = 2
_TRAJECTORY_STREAM = 3


def round_half_away_from_zero(x: float) -> int:
    """4.5 -> 5 and -4.5 -> -5; banker's rounding is deliberately not used."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


def true_answer(op: Operator, lhs: int, rhs: int) -> int:
    if op is Operator.ADD:
        return lhs + rhs
    if op is Operator.SUB:
        return lhs - rhs
    if op is Operator.MUL:
        return lhs * rhs
    if op is Operator.DIV:
        if rhs == 0:
            raise ZeroDivisionError("question bank must not contain division by zero")
        return round_half_away_from_zero(lhs / rhs)
    raise ValueError(f"unknown operator {op!r}")


def no_carry_sum(lhs: int, rhs: int) -> int:
    """Column-wise addition where every carry is dropped."""
    if lhs < 0 or rhs < 0:
        raise ValueError("no_carry_sum expects non-negative operands")
    result, scale = 0, 1
    while lhs > 0 or rhs > 0:
        result += ((lhs % 10 + rhs % 10) % 10) * scale
        lhs, rhs, scale = lhs // 10, rhs // 10, scale * 10
    return result


def question_text(op: Operator, lhs: int, rhs: int) -> str:
    return f"What is {lhs} {OP_SYMBOLS[op]} {rhs}?"


def parse_question_text(text: str) -> tuple[Operator, int, int] | None:
    """Inverse of question_text; None when the text is not in that shape."""
    import re

    m = re.search(r"What is\s+(-?\d+)\s*([+\-*/x×÷])\s*(-?\d+)\s*\?", text)
    if not m:
        return None
    sym = {"x": "*", "×": "*", "÷": "/"}.get(m.group(2), m.group(2))
    return _SYMBOL_OPS[sym], int(m.group(1)), int(m.group(3))


def misconception_answer(m: Misconception, question: Question) -> int | None:
    """The answer this misconception forces, or None when it does not bite.

    A misconception bites only inside its trigger scope and only when it would
    actually change the answer, so holding one never alters out-of-scope
    questions.
    """
    if not question.is_arithmetic:
        raise ValueError("misconceptions are defined over arithmetic questions")
    op, lhs, rhs = question.op, question.lhs, question.rhs
    truth = true_answer(op, lhs, rhs)
    kind = m.kind
    if kind is MisconceptionKind.NO_CARRY_ADD and op is Operator.ADD:
        wrong = no_carry_sum(lhs, rhs)
        return wrong if wrong != truth else None
    if kind is MisconceptionKind.FAILS_MUL_WITH and op is Operator.MUL:
        if m.x in (lhs, rhs):
            return truth + 1
    if kind is MisconceptionKind.FAILS_ANY_WITH and m.x in (lhs, rhs):
        return truth + 1
    if kind is MisconceptionKind.FAILS_OPERAND_OVER_10 and (lhs > 10 or rhs > 10):
        return truth + 1
    if kind is MisconceptionKind.ROUNDS_DIV_DOWN and op is Operator.DIV:
        wrong = lhs // rhs
        return wrong if wrong != truth else None
    if kind is MisconceptionKind.FAILS_NEGATIVE and truth < 0:
        return -truth
    return None


def deterministic_answer(profile: StudentProfile, question: Question) -> int:
    """Noise-free answer policy.

    Precedence: an unmastered construct always answers truth + 1; otherwise
    misconceptions are tried in POOL_ORDER and the first one that bites wins;
    otherwise the answer is correct.
    """
    if not question.is_arithmetic:
        raise ValueError(f"question {question.id!r} is not arithmetic")
    truth = true_answer(question.op, question.lhs, question.rhs)
    if question.op not in profile.mastered:
        return truth + 1
    held = {m.kind: m for m in profile.misconceptions}
    for kind in POOL_ORDER:
        if kind in held:
            forced = misconception_answer(held[kind], question)
            if forced is not None:
                return forced
    return truth


def simulate_answer(
    profile: StudentProfile, question: Question, rng: np.random.Generator
) -> Interaction:
    """Answer one question, applying slip/guess disturbances from rng.

    Slip and guess events are independent per-answer draws; either event
    pushes the answer across the correctness boundary (a disturbed correct
    answer lands on the canonical wrong value truth + 1, a disturbed wrong
    answer lands on the truth). Both uniforms are always consumed so the
    stream layout does not depend on the noise settings.
    """
    truth = true_answer(question.op, question.lhs, question.rhs)
    answer = deterministic_answer(profile, question)
    u_slip = rng.random()
    u_guess = rng.random()
    if u_slip < profile.slip_rate or u_guess < profile.guess_rate:
        answer = truth + 1 if answer == truth else truth
    return Interaction(
        question_id=question.id, given_answer=answer, correct=answer == truth
    )


def _operand_range(config: SimConfig, op: Operator) -> tuple[int, int]:
    if op in (Operator.ADD, Operator.SUB):
        return config.add_sub_range
    return config.mul_div_range


def generate_question_bank(config: SimConfig) -> list[Question]:
    config.validate()
    rng = np.random.default_rng([config.seed, _BANK_STREAM])
    bank = []
    for i in range(config.n_questions):
        op = config.operators[int(rng.integers(0, len(config.operators)))]
        lo, hi = _operand_range(config, op)
        lhs = int(rng.integers(lo, hi + 1))
        rhs = int(rng.integers(lo, hi + 1))
        bank.append(
            Question(
                id=i,
                text=question_text(op, lhs, rhs),
                op=op,
                lhs=lhs,
                rhs=rhs,
                construct=op.value,
            )
        )
    return bank


def _student_id(index: int, n_students: int) -> str:
    width = max(4, len(str(n_students - 1)))
    return f"s{index:0{width}d}"


def generate_profile(config: SimConfig, student_index: int) -> StudentProfile:
    config.validate()
    if not (0 <= student_index < config.n_students):
        raise ValueError(f"student_index {student_index} out of range")
    rng = np.random.default_rng([config.seed, _PROFILE_STREAM, student_index])
    mastered = frozenset(
        op for op in OP_ORDER if rng.random() < config.master_prob
    )
    probs = np.asarray(config.misconception_count_probs, dtype=float)
    count = int(rng.choice(len(probs), p=probs / probs.sum()))
    kind_idx = rng.choice(len(POOL_ORDER), size=count, replace=False)
    misconceptions = []
    for k in kind_idx:
        kind = POOL_ORDER[int(k)]
        x = int(rng.integers(X_RANGE[0], X_RANGE[1] + 1)) if kind in PARAMETRIC_KINDS else None
        misconceptions.append(Misconception(kind=kind, x=x))
    return StudentProfile(
        id=_student_id(student_index, config.n_students),
        mastered=mastered,
        misconceptions=tuple(misconceptions),
        slip_rate=config.slip_rate,
        guess_rate=config.guess_rate,
    )


def generate_dataset(config: SimConfig) -> Dataset:
    """Bank, profiles and one trajectory per student, all reproducible from seed."""
    config.validate()
    bank = generate_question_bank(config)
    profiles = [generate_profile(config, i) for i in range(config.n_students)]
    trajectories = []
    for i, profile in enumerate(profiles):
        rng = np.random.default_rng([config.seed, _TRAJECTORY_STREAM, i])
        picks = rng.choice(config.n_questions, size=config.per_student, replace=False)
        interactions = [
            simulate_answer(profile, bank[int(j)], rng) for j in picks
        ]
        trajectories.append(Trajectory(student_id=profile.id, interactions=interactions))
    return Dataset(bank=bank, profiles=profiles, trajectories=trajectories)
