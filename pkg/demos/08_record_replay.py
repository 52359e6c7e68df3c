"""Record a run, then reproduce it byte-for-byte with no backend at all.

Any backend can record its responses to a transcript. Re-running from the
report's manifest swaps recorded backends for replay, so the second run makes
zero live calls and serializes to the identical report.
"""

from pathlib import Path

from lbkt.gateway import BackendSpec
from lbkt.harness import ExperimentConfig, run_experiment, run_from_manifest
from lbkt.students import SimConfig, generate_dataset

out = Path("demos_out")
out.mkdir(exist_ok=True)

dataset = generate_dataset(SimConfig(n_students=30, n_questions=300, per_student=50, seed=12))
config = ExperimentConfig(
    encoder=BackendSpec(kind="oracle"),
    decoder=BackendSpec(kind="oracle", record_path=str(out / "decoder.jsonl")),
    n_enc=30,
    n_pred=5,
    n_test_students=15,
    seed=13,
    out_dir=str(out / "run"),
)

first = run_experiment(config, dataset=dataset)
n_lines = len((out / "decoder.jsonl").read_text().splitlines())
print(f"live run: accuracy {first.mean_accuracy:.4f}, transcript of {n_lines} responses")
print(f"artifacts: {sorted(p.name for p in (out / 'run').iterdir())}")

again = run_from_manifest(out / "run" / "manifest.json", dataset=dataset)
print(f"replay run: accuracy {again.mean_accuracy:.4f}")
print(f"byte-identical reports: {again.to_json() == first.to_json()}")
