"""Interaction splits and the summary-bottleneck encode/decode pipeline.

The encoder sees a slice of a student's history (x_enc) and writes a
token-budgeted knowledge summary; the decoder sees only that summary plus one
target question. Nothing from x_enc may appear in a decoder prompt, which is
what makes the summary a true information bottleneck. direct_predict is the
no-bottleneck reference that stuffs the whole history into each prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .gateway import (
    BackendSpec,
    CompletionRequest,
    UnsupportedBackendError,
    complete,
    count_tokens,
    truncate_to_tokens,
)
from .students import Interaction, Question, StudentProfile, Trajectory
from .summary import render_summary


@dataclass
class Split:
    student_id: str
    x_enc: list[Interaction]   # encoder evidence
    x_s: list[Interaction]     # reconstruction subset, drawn from x_enc
    y_s: list[Interaction]     # held-out targets, disjoint from x_enc by question id
    seed: int | Sequence[int] = 0


@dataclass
class Bottleneck:
    text: str
    token_count: int
    budget: int
    encoder_id: str
    chain_of_thought: bool = False
    raw_text: str = ""


@dataclass
class PredictionSet:
    # question_id -> "yes" | "no" | None (None = abstention, counted incorrect)
    predictions: dict
    raw_texts: dict = field(default_factory=dict)


def sample_split(
    trajectory: Trajectory,
    n_enc: int = 50,
    n_recon: int = 0,
    n_pred: int = 4,
    seed=0,
    holdout_last: bool = False,
) -> Split:
    """Deterministically split one trajectory into x_enc / x_s / y_s.

    Chronological order is preserved in every part. With holdout_last the
    targets are the final n_pred interactions (the protocol for real response
    logs); otherwise they are sampled from the interactions left out of x_enc.
    """
    interactions = trajectory.interactions
    rng = np.random.default_rng([seed] if isinstance(seed, int) else list(seed))
    if n_recon > n_enc:
        raise ValueError("n_recon cannot exceed n_enc")

    if holdout_last:
        if len(interactions) < n_pred + n_enc:
            raise ValueError(
                f"trajectory {trajectory.student_id} has {len(interactions)} "
                f"interactions; needs {n_enc + n_pred}"
            )
        head = len(interactions) - n_pred
        y_s = list(interactions[head:])
        y_qids = {i.question_id for i in y_s}
        # A question may repeat within a real log; exclusion is by question id,
        # not just position, so the targets never leak into the evidence.
        candidates = [
            i for i in range(head) if interactions[i].question_id not in y_qids
        ]
        if len(candidates) < n_enc:
            raise ValueError(
                f"trajectory {trajectory.student_id}: only {len(candidates)} "
                f"usable encoder interactions, needs {n_enc}"
            )
        pick = rng.choice(len(candidates), size=n_enc, replace=False).tolist()
        enc_idx = sorted(candidates[i] for i in pick)
    else:
        if len(interactions) < n_enc + n_pred:
            raise ValueError(
                f"trajectory {trajectory.student_id} has {len(interactions)} "
                f"interactions; needs {n_enc + n_pred}"
            )
        enc_idx = sorted(
            rng.choice(len(interactions), size=n_enc, replace=False).tolist()
        )
        enc_set = set(enc_idx)
        enc_qids = {interactions[i].question_id for i in enc_idx}
        held_out = [
            i
            for i in range(len(interactions))
            if i not in enc_set and interactions[i].question_id not in enc_qids
        ]
        if len(held_out) < n_pred:
            raise ValueError(
                f"trajectory {trajectory.student_id}: only {len(held_out)} "
                f"held-out interactions, needs {n_pred}"
            )
        pred_idx = sorted(rng.choice(len(held_out), size=n_pred, replace=False).tolist())
        y_s = [interactions[held_out[i]] for i in pred_idx]

    x_enc = [interactions[i] for i in enc_idx]
    recon_idx = sorted(rng.choice(n_enc, size=n_recon, replace=False).tolist())
    x_s = [x_enc[i] for i in recon_idx]

    assert not {i.question_id for i in x_enc} & {
        i.question_id for i in y_s
    }, "y_s overlaps x_enc"
    return Split(
        student_id=trajectory.student_id, x_enc=x_enc, x_s=x_s, y_s=y_s, seed=seed
    )


def render_interaction_line(interaction: Interaction, question: Question) -> str:
    mark = "correct" if interaction.correct else "incorrect"
    return f"- {question.text} -> {interaction.given_answer} ({mark})"


ENCODER_SYSTEM = (
    "You are an expert teacher analyzing a student's answers to arithmetic questions."
)

COT_MARKER = "Summary:"


def render_encoder_prompt(
    x_enc: Sequence[Interaction],
    bank: Mapping,
    budget: int,
    steering_text: str | None = None,
    chain_of_thought: bool = False,
) -> CompletionRequest:
    if budget < 1:
        raise ValueError("budget must be at least 1")
    lines = "\n".join(render_interaction_line(i, bank[i.question_id]) for i in x_enc)
    parts = [
        f"Here are {len(x_enc)} question-answer pairs from one student:",
        lines,
        "",
        f"Write a summary of this student's knowledge state in at most {budget} tokens.",
        'Structure it as three sections labeled "Mastered:", "Not mastered:", and '
        '"Misconceptions:".',
    ]
    if chain_of_thought:
        parts.append(
            "First think step by step about systematic error patterns, then give "
            f'the final summary after the marker "{COT_MARKER}".'
        )
    if steering_text:
        parts.append(steering_text)
    return CompletionRequest(
        system_text=ENCODER_SYSTEM,
        user_text="\n".join(parts),
        max_new_tokens=max(budget * 4, 256) if chain_of_thought else max(budget * 2, 64),
    )


def encode(
    spec: BackendSpec,
    split: Split,
    bank: Mapping,
    budget: int,
    steering_text: str | None = None,
    chain_of_thought: bool = False,
    profile: StudentProfile | None = None,
    observed_only: bool = False,
) -> Bottleneck:
    """Produce the knowledge summary for one split.

    The oracle backend cannot write text; as the reference ceiling it renders
    the canonical summary straight from the true profile (restricted to the
    constructs present in x_enc when observed_only is set). Either way the
    result is truncated to the token budget afterwards, so over-long
    summaries lose information exactly as a real encoder's would.
    """
    if spec.kind == "oracle":
        if profile is None:
            raise UnsupportedBackendError(
                "oracle encoding needs the true profile (none supplied)"
            )
        observed = (
            frozenset(bank[i.question_id].op for i in split.x_enc)
            if observed_only
            else None
        )
        raw = render_summary(profile, observed=observed)
    else:
        request = render_encoder_prompt(
            split.x_enc, bank, budget, steering_text, chain_of_thought
        )
        raw = complete(spec, request).text
        if chain_of_thought and COT_MARKER in raw:
            raw = raw.rsplit(COT_MARKER, 1)[1].strip()
    text = truncate_to_tokens(raw, budget)
    return Bottleneck(
        text=text,
        token_count=count_tokens(text),
        budget=budget,
        encoder_id=spec.id,
        chain_of_thought=chain_of_thought,
        raw_text=raw,
    )


DECODER_SYSTEM = (
    "You predict whether a student answers a question correctly, given only a "
    "summary of the student's knowledge."
)

_DECODER_TEMPLATE = (
    "Student knowledge summary:\n"
    "{summary}\n"
    "\n"
    "Question: {question}\n"
    "Will the student answer this question correctly? "
    "Reply with exactly one word: Yes or No."
)


def render_decoder_prompt(bottleneck: Bottleneck, question: Question) -> CompletionRequest:
    user = _DECODER_TEMPLATE.format(summary=bottleneck.text, question=question.text)
    return CompletionRequest(system_text=DECODER_SYSTEM, user_text=user, max_new_tokens=8)


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(text: str) -> str | None:
    """First standalone yes/no in the text, else None."""
    m = _YES_NO_RE.search(text)
    return m.group(1).lower() if m else None


def decode(
    spec: BackendSpec, bottleneck: Bottleneck, questions: Sequence[Question]
) -> PredictionSet:
    """Predict correctness for each question from the summary alone.

    An unparseable response is retried once; a second failure is recorded as
    an abstention (None), which scoring counts as incorrect.
    """
    predictions, raw_texts = {}, {}
    for question in questions:
        request = render_decoder_prompt(bottleneck, question)
        response = complete(spec, request)
        parsed = parse_yes_no(response.text)
        if parsed is None:
            response = complete(spec, request)
            parsed = parse_yes_no(response.text)
        predictions[question.id] = parsed
        raw_texts[question.id] = response.text
    return PredictionSet(predictions=predictions, raw_texts=raw_texts)


_DIRECT_TEMPLATE = (
    "Here are {n} question-answer pairs from one student:\n"
    "{lines}\n"
    "\n"
    "Question: {question}\n"
    "Will the student answer this question correctly? "
    "Reply with exactly one word: Yes or No."
)


def direct_predict(
    spec: BackendSpec,
    x_enc: Sequence[Interaction],
    questions: Sequence[Question],
    bank: Mapping,
) -> PredictionSet:
    """No-bottleneck reference: the full history rides along in every prompt."""
    if spec.kind == "oracle":
        raise UnsupportedBackendError(
            "the oracle decodes summaries, not interaction histories"
        )
    lines = "\n".join(render_interaction_line(i, bank[i.question_id]) for i in x_enc)
    predictions, raw_texts = {}, {}
    for question in questions:
        user = _DIRECT_TEMPLATE.format(n=len(x_enc), lines=lines, question=question.text)
        request = CompletionRequest(
            system_text=DECODER_SYSTEM, user_text=user, max_new_tokens=8
        )
        response = complete(spec, request)
        parsed = parse_yes_no(response.text)
        if parsed is None:
            response = complete(spec, request)
            parsed = parse_yes_no(response.text)
        predictions[question.id] = parsed
        raw_texts[question.id] = response.text
    return PredictionSet(predictions=predictions, raw_texts=raw_texts)
