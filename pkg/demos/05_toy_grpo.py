"""Train a summary policy with group-relative rewards, no gradients through text.

Each student has four candidate summaries (templates); the policy is a
softmax over them. Groups of sampled summaries are scored by the decoder,
advantages are computed within the group, and the policy shifts toward
templates whose decodes predict held-out answers.
"""

from lbkt.gateway import BackendSpec
from lbkt.grpo import (
    GrpoConfig,
    RewardWeights,
    ToyStudent,
    ToyTask,
    softmax,
    standard_templates,
    train_toy_encoder,
)
from lbkt.students import (
    Misconception,
    MisconceptionKind,
    Operator,
    Question,
    StudentProfile,
    deterministic_answer,
    question_text,
    true_answer,
)


def student(sid, mastered, misconceptions, qspecs):
    profile = StudentProfile(
        id=sid, mastered=frozenset(mastered), misconceptions=tuple(misconceptions)
    )
    questions = [
        Question(
            id=f"{sid}-q{i}", text=question_text(op, a, b),
            op=op, lhs=a, rhs=b, construct=op.value,
        )
        for i, (op, a, b) in enumerate(qspecs)
    ]
    truth = {
        q.id: deterministic_answer(profile, q) == true_answer(q.op, q.lhs, q.rhs)
        for q in questions
    }
    return ToyStudent(
        id=sid, templates=standard_templates(profile), questions=questions, truth=truth
    )


O = Operator
task = ToyTask(
    students=[
        student(
            "a", {O.ADD, O.MUL}, [Misconception(MisconceptionKind.FAILS_MUL_WITH, 7)],
            [(O.ADD, 3, 4), (O.MUL, 7, 6), (O.SUB, 5, 2), (O.DIV, 8, 2)],
        ),
        student(
            "b", {O.ADD, O.SUB, O.DIV}, [Misconception(MisconceptionKind.ROUNDS_DIV_DOWN)],
            [(O.ADD, 9, 9), (O.DIV, 7, 2), (O.SUB, 9, 4), (O.MUL, 3, 3)],
        ),
    ]
)

print("templates for student a (policy starts uniform over these):")
for i, t in enumerate(task.students[0].templates):
    print(f"  [{i}] {t.splitlines()[0]} ...")

config = GrpoConfig(
    group_size=5, learning_rate=0.5, kl_coefficient=0.04, batch_size=2, n_steps=300, seed=0
)
trace = train_toy_encoder(task, config, weights=RewardWeights(w_omega=0.5))

print("\nstep  reward  decode-acc  misconception-mention")
milestones = trace.steps[:: max(1, config.n_steps // 6)]
if milestones[-1] is not trace.steps[-1]:
    milestones.append(trace.steps[-1])
for step in milestones:
    print(
        f"{step.step:4d}  {step.expected_reward:6.3f}  {step.expected_accuracy:10.3f}"
        f"  {step.expected_omega_rate:10.3f}"
    )

probs = softmax(trace.policies["a"].theta)
best = int(probs.argmax())
print(f"\nstudent a's policy mass: {[round(float(p), 3) for p in probs]}")
print(f"winning template:\n{task.students[0].templates[best]}")
