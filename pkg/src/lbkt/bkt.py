"""Bayesian knowledge tracing: a two-state HMM per skill.

The latent state is mastered / not mastered; mastery is absorbing (no
forgetting). Observations are correct / incorrect with slip and guess
emission noise. Fitting uses expectation-maximization over full
forward-backward posteriors, with scaling for numerical stability and an
identifiability guard keeping guess + slip < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

_EPS = 1e-6


@dataclass(frozen=True)
class BktParams:
    p_init: float
    p_learn: float
    p_guess: float
    p_slip: float

    def __post_init__(self):
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def as_dict(self) -> dict:
        return {
            "p_init": self.p_init,
            "p_learn": self.p_learn,
            "p_guess": self.p_guess,
            "p_slip": self.p_slip,
        }


@dataclass
class SkillSequence:
    skill: str
    correct: list[bool]


def predict_correct_prob(p_mastery: float, params: BktParams) -> float:
    """P(correct) = p * (1 - slip) + (1 - p) * guess."""
    if not (0.0 <= p_mastery <= 1.0):
        raise ValueError(f"p_mastery must lie in [0, 1], got {p_mastery}")
    return p_mastery * (1.0 - params.p_slip) + (1.0 - p_mastery) * params.p_guess


def posterior_update(p_mastery: float, correct: bool, params: BktParams) -> float:
    """Bayes update on one observation, then the learning transition."""
    if not (0.0 <= p_mastery <= 1.0):
        raise ValueError(f"p_mastery must lie in [0, 1], got {p_mastery}")
    if correct:
        num = p_mastery * (1.0 - params.p_slip)
        den = num + (1.0 - p_mastery) * params.p_guess
    else:
        num = p_mastery * params.p_slip
        den = num + (1.0 - p_mastery) * (1.0 - params.p_guess)
    if den <= 0.0:
        raise ValueError(
            "observation has zero probability under the current parameters"
        )
    posterior = num / den
    return posterior + (1.0 - posterior) * params.p_learn


def sequence_log_likelihood(correct: Sequence[bool], params: BktParams) -> float:
    """Log-likelihood of one observation sequence via the forward recursion."""
    ll = 0.0
    p = params.p_init
    for obs in correct:
        pc = predict_correct_prob(p, params)
        prob = pc if obs else 1.0 - pc
        if prob <= 0.0:
            raise ValueError(
                "observation has zero probability under the current parameters"
            )
        ll += math.log(prob)
        p = posterior_update(p, obs, params)
    return ll


@dataclass
class FitResult:
    params: BktParams
    log_likelihoods: list[float] = field(default_factory=list)
    n_iterations: int = 0
    converged: bool = False


def _pad(sequences: Sequence[Sequence[bool]]) -> tuple[np.ndarray, np.ndarray]:
    t_max = max(len(s) for s in sequences)
    obs = np.zeros((len(sequences), t_max))
    mask = np.zeros((len(sequences), t_max), dtype=bool)
    for i, s in enumerate(sequences):
        obs[i, : len(s)] = np.asarray(s, dtype=float)
        mask[i, : len(s)] = True
    return obs, mask


def _clamp(v: float) -> float:
    return min(max(v, _EPS), 1.0 - _EPS)


def fit_em(
    sequences: Sequence[Sequence[bool]],
    init: BktParams = BktParams(0.5, 0.2, 0.25, 0.15),
    max_iterations: int = 200,
    tol: float = 1e-6,
) -> FitResult:
    """Baum-Welch for the constrained two-state HMM, vectorized over sequences.

    Returns the fitted parameters and the per-iteration total log-likelihood,
    which is non-decreasing up to numerical noise. Stops when the
    log-likelihood improves by less than tol.
    """
    if not sequences or any(len(s) == 0 for s in sequences):
        raise ValueError("fit_em needs non-empty sequences")
    obs, mask = _pad(sequences)
    n, t_max = obs.shape
    lengths = mask.sum(axis=1)

    # Clamping away exact 0/1 keeps every observation possible during the
    # E-step, so the scaled recursions never divide by zero.
    p_init, p_learn = _clamp(init.p_init), _clamp(init.p_learn)
    p_guess, p_slip = _clamp(init.p_guess), _clamp(init.p_slip)
    lls: list[float] = []
    converged = False

    for iteration in range(max_iterations):
        # Emission probabilities per (sequence, step, state); state 0 = not mastered.
        b0 = np.where(obs == 1.0, p_guess, 1.0 - p_guess)
        b1 = np.where(obs == 1.0, 1.0 - p_slip, p_slip)
        b0[~mask] = 1.0
        b1[~mask] = 1.0

        alpha0 = np.zeros((n, t_max))
        alpha1 = np.zeros((n, t_max))
        scale = np.ones((n, t_max))

        a0 = (1.0 - p_init) * b0[:, 0]
        a1 = p_init * b1[:, 0]
        c = a0 + a1
        alpha0[:, 0], alpha1[:, 0], scale[:, 0] = a0 / c, a1 / c, c
        for t in range(1, t_max):
            a0 = alpha0[:, t - 1] * (1.0 - p_learn) * b0[:, t]
            a1 = (alpha0[:, t - 1] * p_learn + alpha1[:, t - 1]) * b1[:, t]
            c = a0 + a1
            step = mask[:, t]
            alpha0[:, t] = np.where(step, a0 / c, alpha0[:, t - 1])
            alpha1[:, t] = np.where(step, a1 / c, alpha1[:, t - 1])
            scale[:, t] = np.where(step, c, 1.0)

        ll = float(np.log(scale[mask]).sum())
        lls.append(ll)

        beta0 = np.zeros((n, t_max))
        beta1 = np.zeros((n, t_max))
        last = (lengths - 1).astype(int)
        beta0[np.arange(n), last] = 1.0
        beta1[np.arange(n), last] = 1.0
        for t in range(t_max - 2, -1, -1):
            step = mask[:, t + 1]
            nb0 = (
                (1.0 - p_learn) * b0[:, t + 1] * beta0[:, t + 1]
                + p_learn * b1[:, t + 1] * beta1[:, t + 1]
            ) / scale[:, t + 1]
            nb1 = b1[:, t + 1] * beta1[:, t + 1] / scale[:, t + 1]
            # Positions at or past the end of a sequence keep their boundary values.
            ended = ~step
            at_last = mask[:, t] & ended
            beta0[:, t] = np.where(step, nb0, np.where(at_last, 1.0, beta0[:, t]))
            beta1[:, t] = np.where(step, nb1, np.where(at_last, 1.0, beta1[:, t]))

        gamma0 = alpha0 * beta0
        gamma1 = alpha1 * beta1
        norm = gamma0 + gamma1
        norm = np.where(norm > 0.0, norm, 1.0)
        gamma0 = np.where(mask, gamma0 / norm, 0.0)
        gamma1 = np.where(mask, gamma1 / norm, 0.0)

        # Transition posteriors out of the unmastered state, for t -> t+1.
        xi01 = np.zeros((n, t_max))
        xi00 = np.zeros((n, t_max))
        for t in range(t_max - 1):
            step = mask[:, t + 1]
            x01 = (
                alpha0[:, t] * p_learn * b1[:, t + 1] * beta1[:, t + 1]
                / scale[:, t + 1]
            )
            x00 = (
                alpha0[:, t] * (1.0 - p_learn) * b0[:, t + 1] * beta0[:, t + 1]
                / scale[:, t + 1]
            )
            xi01[:, t] = np.where(step, x01, 0.0)
            xi00[:, t] = np.where(step, x00, 0.0)

        p_init = _clamp(float(gamma1[:, 0].mean()))
        denom = float((xi00 + xi01).sum())
        p_learn = _clamp(float(xi01.sum()) / denom) if denom > 0 else p_learn
        g_mass = float(gamma0[mask].sum())
        s_mass = float(gamma1[mask].sum())
        p_guess = _clamp(float((gamma0 * obs)[mask].sum()) / g_mass) if g_mass > 0 else p_guess
        p_slip = _clamp(float((gamma1 * (1.0 - obs))[mask].sum()) / s_mass) if s_mass > 0 else p_slip

        # Identifiability guard: a fit where guessing and slipping together
        # exceed certainty has swapped the state labels.
        if p_guess + p_slip >= 1.0:
            total = p_guess + p_slip
            p_guess = p_guess / total * (1.0 - _EPS)
            p_slip = p_slip / total * (1.0 - _EPS)

        if len(lls) >= 2 and abs(lls[-1] - lls[-2]) < tol:
            converged = True
            break

    params = BktParams(p_init=p_init, p_learn=p_learn, p_guess=p_guess, p_slip=p_slip)
    return FitResult(
        params=params,
        log_likelihoods=lls,
        n_iterations=len(lls),
        converged=converged,
    )


def skill_sequences(trajectories, bank: Mapping) -> dict[str, list[list[bool]]]:
    """Group per-student correctness runs by question construct."""
    out: dict[str, list[list[bool]]] = {}
    for trajectory in trajectories:
        per_skill: dict[str, list[bool]] = {}
        for interaction in trajectory.interactions:
            question = bank.get(interaction.question_id)
            skill = (question.construct if question else None) or "all"
            per_skill.setdefault(skill, []).append(bool(interaction.correct))
        for skill, seq in per_skill.items():
            out.setdefault(skill, []).append(seq)
    return out


def fit_per_skill(
    trajectories,
    bank: Mapping,
    init: BktParams = BktParams(0.5, 0.2, 0.25, 0.15),
    max_iterations: int = 200,
    tol: float = 1e-6,
) -> dict[str, FitResult]:
    return {
        skill: fit_em(seqs, init=init, max_iterations=max_iterations, tol=tol)
        for skill, seqs in sorted(skill_sequences(trajectories, bank).items())
    }


def evaluate_last_n(
    trajectories,
    bank: Mapping,
    params_by_skill: Mapping[str, BktParams],
    n: int = 4,
    threshold: float = 0.5,
) -> float:
    """Accuracy of thresholded predictions on each student's last n answers.

    Mastery estimates are rolled forward per skill through the whole
    trajectory; each of the final n answers is predicted from the state built
    strictly before it.
    """
    hits = total = 0
    for trajectory in trajectories:
        cut = max(len(trajectory.interactions) - n, 0)
        state: dict[str, float] = {}
        for position, interaction in enumerate(trajectory.interactions):
            question = bank.get(interaction.question_id)
            skill = (question.construct if question else None) or "all"
            params = params_by_skill[skill]
            p = state.get(skill, params.p_init)
            if position >= cut:
                predicted = predict_correct_prob(p, params) >= threshold
                hits += int(predicted == bool(interaction.correct))
                total += 1
            state[skill] = posterior_update(p, bool(interaction.correct), params)
    if total == 0:
        raise ValueError("no predictions made; are the trajectories empty?")
    return hits / total
