"""Generate a synthetic cohort and look at one student from the inside.

Every student is a latent knowledge state: a set of mastered constructs plus
up to four systematic misconceptions. Answers are deterministic given that
state, so the same seed always produces the same dataset.
"""

from lbkt.students import SimConfig, deterministic_answer, generate_dataset, true_answer
from lbkt.summary import render_summary

dataset = generate_dataset(SimConfig(n_students=50, n_questions=400, per_student=30, seed=4))
print(f"{len(dataset.profiles)} students, bank of {len(dataset.bank)} questions\n")

# Pick someone whose misconceptions actually bite.
profile = next(p for p in dataset.profiles if len(p.misconceptions) >= 2)
print(f"student {profile.id}")
print(f"  mastered: {sorted(op.value for op in profile.mastered)}")
for m in profile.misconceptions:
    print(f"  misconception: {m.kind.value}" + (f" (x={m.x})" if m.x is not None else ""))

print("\ncanonical summary of that state:")
print(render_summary(profile))

print("\nfirst answers, with the deterministic rule applied:")
for interaction in dataset.trajectory(profile.id).interactions[:8]:
    q = dataset.question(interaction.question_id)
    truth = true_answer(q.op, q.lhs, q.rhs)
    again = deterministic_answer(profile, q)
    assert again == interaction.given_answer
    mark = "correct" if interaction.correct else f"wrong (truth {truth})"
    print(f"  {q.text:<28} -> {interaction.given_answer:>4}   {mark}")
