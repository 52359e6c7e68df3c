"""Accuracy scoring and the multi-term summary reward.

The reward for a sampled summary combines reconstruction accuracy on a subset
of the encoder's evidence, prediction accuracy on held-out questions, a
length penalty that only bites past the token budget, and an optional bonus
for summaries that name at least one misconception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from .pipeline import PredictionSet
from .students import Interaction


class AccuracyResult(NamedTuple):
    value: float
    n: int
    vacuous: bool  # True when scored over an empty question set


def _truth_map(truth) -> Mapping:
    if isinstance(truth, Mapping):
        return truth
    return {i.question_id: i.correct for i in truth}


def accuracy(predictions, truth) -> AccuracyResult:
    """Fraction of questions where the yes/no prediction matches correctness.

    Abstentions (None) never match. The prediction and truth sets must cover
    exactly the same question ids. An empty set scores 1.0 and is flagged
    vacuous rather than raising, so callers can weight it away.
    """
    preds = predictions.predictions if isinstance(predictions, PredictionSet) else predictions
    truths = _truth_map(truth)
    if set(preds) != set(truths):
        raise ValueError(
            f"prediction ids {sorted(map(str, preds))} != truth ids "
            f"{sorted(map(str, truths))}"
        )
    if not preds:
        return AccuracyResult(value=1.0, n=0, vacuous=True)
    hits = 0
    for qid, p in preds.items():
        if p is not None and (p == "yes") == bool(truths[qid]):
            hits += 1
    return AccuracyResult(value=hits / len(preds), n=len(preds), vacuous=False)


_OMEGA_RE = re.compile(r"\bmisconceptions?\b", re.IGNORECASE)


def omega(summary) -> int:
    """1 when the summary mentions the word misconception(s), else 0."""
    text = getattr(summary, "text", summary)
    return 1 if _OMEGA_RE.search(text) else 0


@dataclass(frozen=True)
class RewardWeights:
    w_recon: float = 1.0
    w_pred: float = 1.0
    w_len: float = 1.0
    w_omega: float = 0.0
    budget: int = 128

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")


@dataclass(frozen=True)
class RewardBreakdown:
    acc_recon: float
    acc_pred: float
    length: int
    omega: int
    length_penalty: float
    total: float


def length_penalty(length: int, budget: int) -> float:
    """Zero up to the budget, then linear in the relative overrun."""
    return max(0, length - budget) / budget


def phi_reward(
    acc_recon: float,
    acc_pred: float,
    length: int,
    omega_value: int,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    for name, v in (("acc_recon", acc_recon), ("acc_pred", acc_pred)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if length < 0:
        raise ValueError("length must be non-negative")
    if omega_value not in (0, 1):
        raise ValueError("omega must be 0 or 1")
    penalty = length_penalty(length, weights.budget)
    total = (
        weights.w_recon * acc_recon
        + weights.w_pred * acc_pred
        - weights.w_len * penalty
        + weights.w_omega * omega_value
    )
    return RewardBreakdown(
        acc_recon=acc_recon,
        acc_pred=acc_pred,
        length=length,
        omega=omega_value,
        length_penalty=penalty,
        total=total,
    )
