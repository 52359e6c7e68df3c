"""Steer predictions by editing the summary - no retraining, just text.

Two experiments: (1) the missing-construct ablation, where one construct's
evidence is hidden from the encoder and a single appended sentence repairs
it; (2) a workbench-style edit, deleting the misconception line and watching
exactly the triggered questions flip.
"""

from dataclasses import replace

from lbkt.gateway import BackendSpec
from lbkt.harness import ExperimentConfig, steering_ablation_missing_construct
from lbkt.pipeline import decode, encode, sample_split
from lbkt.students import SimConfig, generate_dataset

ORACLE = BackendSpec(kind="oracle")
dataset = generate_dataset(SimConfig(n_students=40, n_questions=500, per_student=60, seed=6))
config = ExperimentConfig(
    encoder=ORACLE, decoder=ORACLE, n_enc=40, n_pred=8, n_test_students=20, seed=8
)

result = steering_ablation_missing_construct(config, dataset=dataset)
print("construct        plain   +sentence")
for construct, row in result["per_construct"].items():
    if row["construct_with"] is None:
        continue
    print(f"{construct:<14} {row['construct_without']:7.3f} {row['construct_with']:9.3f}")
print(f"overall        {result['mean_without']:7.3f} {result['mean_with']:9.3f}\n")

# Workbench-style edit: find a student whose misconception line matters for
# the sampled target questions, then delete it.
bank = dataset.questions_by_id
for profile in dataset.profiles:
    if not (profile.misconceptions and profile.mastered):
        continue
    split = sample_split(dataset.trajectory(profile.id), n_enc=40, n_pred=8, seed=[0, 1])
    bottleneck = encode(ORACLE, split, bank, budget=128, profile=profile)
    questions = [bank[i.question_id] for i in split.y_s]
    before = decode(ORACLE, bottleneck, questions)
    kept = [l for l in bottleneck.text.splitlines() if not l.startswith("Misconceptions:")]
    after = decode(ORACLE, replace(bottleneck, text="\n".join(kept)), questions)
    if any(before.predictions[q.id] != after.predictions[q.id] for q in questions):
        break

print(f"summary for {profile.id}:\n{bottleneck.text}\n")

print("after deleting the misconception line:")
for q in questions:
    b, a = before.predictions[q.id], after.predictions[q.id]
    note = f"{b} -> {a}" if b != a else b
    flag = "  <- flipped" if b != a else ""
    print(f"  {q.text:<28} {note}{flag}")
