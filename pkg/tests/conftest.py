import numpy as np
import pytest

from lbkt.students import (
    Misconception,
    MisconceptionKind,
    Operator,
    Question,
    SimConfig,
    StudentProfile,
    generate_dataset,
    question_text,
)

ALL_OPS = frozenset(Operator)


def make_question(op: Operator, lhs: int, rhs: int, qid="q") -> Question:
    return Question(
        id=qid, text=question_text(op, lhs, rhs), op=op, lhs=lhs, rhs=rhs,
        construct=op.value,
    )


def make_profile(
    mastered=ALL_OPS, misconceptions=(), slip=0.0, guess=0.0, sid="s"
) -> StudentProfile:
    return StudentProfile(
        id=sid,
        mastered=frozenset(mastered),
        misconceptions=tuple(misconceptions),
        slip_rate=slip,
        guess_rate=guess,
    )


def m(kind, x=None) -> Misconception:
    return Misconception(kind=MisconceptionKind(kind), x=x)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def small_dataset():
    """60 students x 60 interactions, noise-free; enough for split/encode tests."""
    config = SimConfig(
        n_students=60, n_questions=400, per_student=60, seed=11
    )
    return generate_dataset(config)


@pytest.fixture(scope="session")
def small_config():
    return SimConfig(n_students=60, n_questions=400, per_student=60, seed=11)
