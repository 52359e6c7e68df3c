"""Group-relative policy optimization.

For each prompt a group of G summaries is sampled, rewarded, and normalized
against its own group statistics; the policy gradient weights each sample's
log-probability gradient by that advantage. Two advantage flavors are
provided: the group-standardized form (reward minus group mean over group
standard deviation) used for training, and a leave-one-out centered form
whose gradient estimator is exactly unbiased for the expected reward, which
is what the estimator checks validate against.

The toy trainer optimizes a softmax policy over a fixed library of candidate
summaries per student, with rewards scored by the oracle decoder; the gateway
fine-tuner ships prompts, sampled completions and locally computed rewards to
an external training endpoint without doing any weight math here.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .gateway import BackendSpec, BackendError, complete, count_tokens, truncate_to_tokens
from .pipeline import Bottleneck, decode
from .rewards import RewardBreakdown, RewardWeights, accuracy, omega, phi_reward
from .students import Question

ADVANTAGE_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, trace: "TrainingTrace"):
        super().__init__(message)
        self.trace = trace


class GatewayRequiredError(RuntimeError):
    pass


def group_advantages(totals: Sequence[float], eps: float = ADVANTAGE_EPS) -> np.ndarray:
    """Standardize rewards against their own group: (r - mean) / population std.

    A degenerate group (std below eps) gets all-zero advantages instead of a
    blow-up, so uniform groups simply contribute no gradient.
    """
    r = np.asarray(totals, dtype=float)
    if r.size == 0:
        raise ValueError("empty group")
    mu = r.mean()
    sigma = r.std()  # population std, ddof=0
    if sigma <= eps:
        return np.zeros_like(r)
    return (r - mu) / sigma


def loo_advantages(totals: Sequence[float]) -> np.ndarray:
    """Center each reward on the mean of the other group members.

    Equivalent to (r - mean) * G / (G - 1); the baseline is independent of
    the sample it corrects, which keeps the policy-gradient estimator exactly
    unbiased for the expected reward.
    """
    r = np.asarray(totals, dtype=float)
    if r.size < 2:
        raise ValueError("leave-one-out advantages need at least two samples")
    g = r.size
    return (r - r.mean()) * g / (g - 1)


def softmax(theta: np.ndarray) -> np.ndarray:
    z = np.asarray(theta, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def log_prob(theta: np.ndarray, k: int) -> float:
    z = np.asarray(theta, dtype=float)
    z = z - z.max()
    return float(z[k] - math.log(np.exp(z).sum()))


def log_prob_grad(theta: np.ndarray, k: int) -> np.ndarray:
    """d log softmax(theta)[k] / d theta = e_k - p."""
    p = softmax(theta)
    grad = -p
    grad[k] += 1.0
    return grad


def _log_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Softmax can underflow to exact zero; 0 log 0 counts as 0 by convention.
    tiny = np.finfo(float).tiny
    return np.log(np.maximum(p, tiny)) - np.log(np.maximum(q, tiny))


def kl_divergence(theta: np.ndarray, reference: np.ndarray) -> float:
    p = softmax(theta)
    q = softmax(reference)
    s = _log_ratio(p, q)
    return float(np.sum(np.where(p > 0, p * s, 0.0)))


def kl_gradient(theta: np.ndarray, reference: np.ndarray) -> np.ndarray:
    # d KL(p_theta || q) / d theta_l = p_l * (log(p_l / q_l) - KL)
    p = softmax(theta)
    q = softmax(reference)
    s = _log_ratio(p, q)
    kl = float(np.sum(np.where(p > 0, p * s, 0.0)))
    return p * (s - kl)


@dataclass
class GroupSample:
    template_index: int
    text: str
    reward: RewardBreakdown


@dataclass
class Group:
    samples: list[GroupSample]

    @property
    def totals(self) -> np.ndarray:
        return np.array([s.reward.total for s in self.samples], dtype=float)

    @property
    def mean(self) -> float:
        return float(self.totals.mean())

    @property
    def stddev(self) -> float:
        return float(self.totals.std())


@dataclass
class ToyPolicy:
    """Softmax distribution over a fixed library of candidate summaries."""

    theta: np.ndarray
    reference_theta: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.reference_theta is not None:
            self.reference_theta = np.asarray(self.reference_theta, dtype=float)

    @property
    def k(self) -> int:
        return self.theta.size

    def probs(self) -> np.ndarray:
        return softmax(self.theta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.k, size=size, p=self.probs())


def grpo_gradient(
    policy: ToyPolicy,
    group: Group,
    beta: float = 0.0,
    advantage_fn: Callable[[Sequence[float]], np.ndarray] = group_advantages,
) -> np.ndarray:
    """Ascent direction (1/G) sum_i A_i * grad log p(sample_i), minus beta * grad KL."""
    totals = group.totals
    advantages = np.asarray(advantage_fn(totals), dtype=float)
    grad = np.zeros_like(policy.theta)
    p = policy.probs()
    for adv, sample in zip(advantages, group.samples):
        e = np.zeros_like(p)
        e[sample.template_index] = 1.0
        grad += adv * (e - p)
    grad /= len(group.samples)
    if beta:
        if policy.reference_theta is None:
            raise ValueError("beta > 0 requires a reference policy")
        grad -= beta * kl_gradient(policy.theta, policy.reference_theta)
    return grad


@dataclass
class GrpoConfig:
    group_size: int = 5
    learning_rate: float = 1e-4
    kl_coefficient: float = 0.04
    batch_size: int = 5
    n_steps: int = 100
    seed: int = 0

    def validate(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.learning_rate < 0 or self.kl_coefficient < 0:
            raise ValueError("learning_rate and kl_coefficient must be non-negative")
        if self.batch_size < 1 or self.n_steps < 1:
            raise ValueError("batch_size and n_steps must be positive")


@dataclass
class ToyStudent:
    id: str
    templates: list[str]
    questions: list[Question]          # held-out prediction targets
    truth: dict                        # question_id -> bool
    recon_questions: list[Question] = field(default_factory=list)
    recon_truth: dict = field(default_factory=dict)


@dataclass
class ToyTask:
    students: list[ToyStudent]
    decoder: BackendSpec = field(default_factory=lambda: BackendSpec(kind="oracle"))


@dataclass
class StepRecord:
    step: int
    mean_reward: float
    decode_accuracy: float
    omega_rate: float
    expected_reward: float
    expected_accuracy: float
    expected_omega_rate: float


@dataclass
class TrainingTrace:
    steps: list[StepRecord] = field(default_factory=list)
    policies: dict = field(default_factory=dict)  # student_id -> ToyPolicy

    def save(self, path: str | Path):
        with open(path, "w") as f:
            for s in self.steps:
                f.write(
                    json.dumps(
                        {
                            "step": s.step,
                            "mean_reward": s.mean_reward,
                            "decode_accuracy": s.decode_accuracy,
                            "omega_rate": s.omega_rate,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def score_template(
    text: str,
    student: ToyStudent,
    decoder: BackendSpec,
    weights: RewardWeights,
) -> RewardBreakdown:
    """Reward one candidate summary via the decoder; unreadable summaries earn 0 accuracy."""
    truncated = truncate_to_tokens(text, weights.budget)
    bottleneck = Bottleneck(
        text=truncated,
        token_count=count_tokens(truncated),
        budget=weights.budget,
        encoder_id="template",
        raw_text=text,
    )

    def acc(questions, truth):
        if not questions:
            return 1.0
        try:
            preds = decode(decoder, bottleneck, questions)
        except (ValueError, BackendError):
            return 0.0
        return accuracy(preds, truth).value

    return phi_reward(
        acc_recon=acc(student.recon_questions, student.recon_truth),
        acc_pred=acc(student.questions, student.truth),
        length=count_tokens(text),
        omega_value=omega(text),
        weights=weights,
    )


def train_toy_encoder(
    task: ToyTask,
    config: GrpoConfig = GrpoConfig(),
    weights: RewardWeights = RewardWeights(),
) -> TrainingTrace:
    """Optimize each student's template policy by group-relative updates.

    Rewards are deterministic per (student, template), so they are scored
    once up front through the decoder and then looked up during training.
    Batches cycle through students round-robin; every policy update uses one
    freshly sampled group. Non-finite rewards or parameters abort with the
    trace collected so far attached to the error.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)

    tables: dict[str, list[RewardBreakdown]] = {}
    policies: dict[str, ToyPolicy] = {}
    for student in task.students:
        if len(student.templates) < 2:
            raise ValueError(f"student {student.id} needs at least two templates")
        tables[student.id] = [
            score_template(t, student, task.decoder, weights) for t in student.templates
        ]
        theta = np.zeros(len(student.templates))
        policies[student.id] = ToyPolicy(theta=theta, reference_theta=theta.copy())

    trace = TrainingTrace(policies=policies)
    totals_by_student = {
        sid: np.array([b.total for b in breakdowns])
        for sid, breakdowns in tables.items()
    }
    if not all(np.isfinite(v).all() for v in totals_by_student.values()):
        raise TrainingDivergedError("non-finite reward in template table", trace)

    n = len(task.students)
    for step in range(config.n_steps):
        first = (step * config.batch_size) % n
        batch = [task.students[(first + j) % n] for j in range(min(config.batch_size, n))]

        sampled_rewards, sampled_acc, sampled_omega = [], [], []
        for student in batch:
            policy = policies[student.id]
            table = tables[student.id]
            idx = policy.sample(rng, config.group_size)
            group = Group(
                samples=[
                    GroupSample(
                        template_index=int(k),
                        text=student.templates[int(k)],
                        reward=table[int(k)],
                    )
                    for k in idx
                ]
            )
            grad = grpo_gradient(policy, group, beta=config.kl_coefficient)
            policy.theta = policy.theta + config.learning_rate * grad
            if not np.isfinite(policy.theta).all():
                raise TrainingDivergedError(
                    f"policy for {student.id} diverged at step {step}", trace
                )
            sampled_rewards.extend(group.totals.tolist())
            sampled_acc.extend(table[int(k)].acc_pred for k in idx)
            sampled_omega.extend(table[int(k)].omega for k in idx)

        expected_reward = expected_accuracy = expected_omega = 0.0
        for student in task.students:
            p = policies[student.id].probs()
            table = tables[student.id]
            expected_reward += float(p @ totals_by_student[student.id])
            expected_accuracy += float(p @ np.array([b.acc_pred for b in table]))
            expected_omega += float(p @ np.array([b.omega for b in table]))
        trace.steps.append(
            StepRecord(
                step=step,
                mean_reward=float(np.mean(sampled_rewards)),
                decode_accuracy=float(np.mean(sampled_acc)),
                omega_rate=float(np.mean(sampled_omega)),
                expected_reward=expected_reward / n,
                expected_accuracy=expected_accuracy / n,
                expected_omega_rate=expected_omega / n,
            )
        )
    return trace


def standard_templates(profile, include_unlabeled_twin: bool = False) -> list[str]:
    """A small candidate library: the truthful summary plus plausible distractors."""
    from .students import OP_ORDER, StudentProfile
    from .summary import render_summary

    truthful = render_summary(profile)
    all_mastered = render_summary(
        StudentProfile(id="t", mastered=frozenset(OP_ORDER), misconceptions=())
    )
    none_mastered = render_summary(
        StudentProfile(id="t", mastered=frozenset(), misconceptions=())
    )
    templates = [truthful, all_mastered, none_mastered]
    if include_unlabeled_twin:
        # Same mastery claims but with the misconception section dropped.
        templates.append(
            "\n".join(
                line
                for line in truthful.splitlines()
                if not line.lower().startswith("misconceptions:")
            )
        )
    return templates


# ---------------------------------------------------------------------------
# external fine-tuning gateway

def _post_json(url: str, payload: dict, timeout: float = 60.0) -> dict:
    try:
        resp = httpx.post(url, json=payload, timeout=timeout)
        resp.raise_for_status()
        return resp.json()
    except httpx.HTTPError as exc:
        raise BackendError(f"trainer endpoint failed: {exc}")


def finetune_via_gateway(
    spec: BackendSpec,
    dataset,
    config: GrpoConfig,
    weights: RewardWeights,
    out_path: str | Path,
    decoder: BackendSpec | None = None,
    n_enc: int = 50,
    n_recon: int = 0,
    n_pred: int = 4,
    train_fraction: float = 0.8,
    max_batches: int | None = None,
    seed: int = 0,
) -> dict:
    """Drive group-relative fine-tuning through an external training service.

    Per batch of students: render each encoder prompt, ask the endpoint to
    sample G completions (POST {endpoint}/sample), score them locally with
    the decoder and reward weights, and post rewards plus advantages back
    (POST {endpoint}/update). The manifest written to out_path records the
    exchange and the last completed batch, so an interrupted run resumes
    instead of repeating work. No weight updates happen on this side.
    """
    from .pipeline import render_encoder_prompt, sample_split

    config.validate()
    if spec.kind != "http" or not spec.endpoint:
        raise GatewayRequiredError(
            "fine-tuning needs an http training endpoint; none configured"
        )
    decoder = decoder or BackendSpec(kind="oracle")
    out_path = Path(out_path)

    students = dataset.trajectories
    n_train = int(len(students) * train_fraction)
    train, test = students[:n_train], students[n_train:]

    manifest = {
        "config": {
            "batch_size": config.batch_size,
            "group_size": config.group_size,
            "learning_rate": config.learning_rate,
            "kl_coefficient": config.kl_coefficient,
        },
        "reward_weights": {
            "w_recon": weights.w_recon,
            "w_pred": weights.w_pred,
            "w_len": weights.w_len,
            "w_omega": weights.w_omega,
            "budget": weights.budget,
        },
        "split": {"n_train": len(train), "n_test": len(test)},
        "endpoint": spec.endpoint,
        "batches": [],
        "last_completed_batch": -1,
    }
    if out_path.exists():
        previous = json.loads(out_path.read_text())
        if previous.get("endpoint") == spec.endpoint:
            manifest["batches"] = previous.get("batches", [])
            manifest["last_completed_batch"] = previous.get("last_completed_batch", -1)

    bank = dataset.questions_by_id
    batches = [
        train[i : i + config.batch_size]
        for i in range(0, len(train), config.batch_size)
    ]
    if max_batches is not None:
        batches = batches[:max_batches]

    for batch_index, batch in enumerate(batches):
        if batch_index <= manifest["last_completed_batch"]:
            continue
        receipts = []
        for trajectory in batch:
            # Salted hash() would change across processes and break resume.
            sid_digest = hashlib.sha256(trajectory.student_id.encode()).digest()
            split = sample_split(
                trajectory, n_enc=n_enc, n_recon=n_recon, n_pred=n_pred,
                seed=[seed, int.from_bytes(sid_digest[:4], "big")],
            )
            request = render_encoder_prompt(split.x_enc, bank, weights.budget)
            sample_reply = _post_json(
                f"{spec.endpoint.rstrip('/')}/sample",
                {
                    "system": request.system_text,
                    "user": request.user_text,
                    "n": config.group_size,
                    "max_new_tokens": request.max_new_tokens,
                },
                timeout=spec.timeout_s,
            )
            completions = sample_reply["completions"]
            if len(completions) != config.group_size:
                raise BackendError(
                    f"endpoint returned {len(completions)} completions, "
                    f"expected {config.group_size}"
                )

            student = ToyStudent(
                id=trajectory.student_id,
                templates=completions,
                questions=[bank[i.question_id] for i in split.y_s],
                truth={i.question_id: i.correct for i in split.y_s},
                recon_questions=[bank[i.question_id] for i in split.x_s],
                recon_truth={i.question_id: i.correct for i in split.x_s},
            )
            breakdowns = [
                score_template(c, student, decoder, weights) for c in completions
            ]
            totals = [b.total for b in breakdowns]
            advantages = group_advantages(totals).tolist()
            receipt = _post_json(
                f"{spec.endpoint.rstrip('/')}/update",
                {
                    "prompt": {"system": request.system_text, "user": request.user_text},
                    "completions": completions,
                    "rewards": totals,
                    "advantages": advantages,
                    "config": manifest["config"],
                },
                timeout=spec.timeout_s,
            )
            receipts.append(
                {
                    "student_id": trajectory.student_id,
                    "mean_reward": float(np.mean(totals)),
                    "receipt": receipt,
                }
            )
        manifest["batches"].append({"batch_index": batch_index, "students": receipts})
        manifest["last_completed_batch"] = batch_index
        out_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")

    return manifest
