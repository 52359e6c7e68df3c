"""Config-driven evaluation runs.

A run scores one (encoder, decoder) pair over the last n test students of a
dataset: per student, sample a split, write the knowledge summary (or skip it
in direct mode), predict the held-out questions, and aggregate accuracy with
its standard error. Every run emits a manifest carrying the config, backend
ids and prompt-template hashes; re-running a manifest whose backends recorded
transcripts replays bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import pipeline
from .gateway import BackendSpec
from .ingest import load_dataset
from .pipeline import Bottleneck, decode, direct_predict, encode, sample_split
from .rewards import accuracy
from .students import Dataset, Operator, StudentProfile
from .summary import OP_WORDS

STEERING_SENTENCE = "The student has {mastery} {construct} except in the event of misconceptions."


def steering_sentence(construct: Operator, mastered: bool) -> str:
    """One teacher-supplied sentence stating the student's true mastery."""
    return STEERING_SENTENCE.format(
        mastery="mastered" if mastered else "not mastered",
        construct=OP_WORDS[construct],
    )


def compute_sem(values: Sequence[float]) -> float:
    """Standard error of the mean: sample standard deviation over sqrt(n)."""
    if len(values) < 2:
        raise ValueError("SEM needs at least two values")
    arr = np.asarray(values, dtype=float)
    return float(arr.std(ddof=1) / math.sqrt(arr.size))


def _spec_dict(spec: BackendSpec) -> dict:
    return {k: v for k, v in asdict(spec).items() if v is not None}


def _spec_from(d: Mapping) -> BackendSpec:
    return BackendSpec(**d)


@dataclass
class ExperimentConfig:
    encoder: BackendSpec
    decoder: BackendSpec
    dataset_path: str | None = None
    mode: str = "lbm"            # "lbm" (summary bottleneck) or "direct"
    n_enc: int = 50
    n_recon: int = 0
    n_pred: int = 4
    budget: int = 128
    chain_of_thought: bool = False
    n_test_students: int = 200
    seed: int = 0
    holdout_last: bool = False
    steering_text: str | None = None
    out_dir: str | None = None

    def validate(self):
        if self.mode not in ("lbm", "direct"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if min(self.n_enc, self.n_pred, self.n_test_students) < 1 or self.n_recon < 0:
            raise ValueError("split sizes must be positive")


@dataclass
class StudentResult:
    student_id: str
    accuracy: float
    n_questions: int
    predictions: dict
    truth: dict
    bottleneck_text: str | None = None
    token_count: int | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    mean_accuracy: float
    sem: float | None
    n_students: int
    per_student: list[StudentResult]
    manifest: dict

    def to_json(self) -> str:
        """Canonical serialization: identical runs give identical bytes."""
        payload = {
            "mean_accuracy": self.mean_accuracy,
            "sem": self.sem,
            "n_students": self.n_students,
            "per_student": [
                {
                    "student_id": r.student_id,
                    "accuracy": r.accuracy,
                    "n_questions": r.n_questions,
                    "predictions": {str(k): v for k, v in sorted(r.predictions.items(), key=lambda kv: str(kv[0]))},
                    "error": r.error,
                }
                for r in self.per_student
            ],
            "manifest": self.manifest,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


_TEMPLATE_FINGERPRINT = hashlib.sha256(
    "\x1f".join(
        [
            pipeline.ENCODER_SYSTEM,
            pipeline.DECODER_SYSTEM,
            pipeline._DECODER_TEMPLATE,
            pipeline._DIRECT_TEMPLATE,
        ]
    ).encode("utf-8")
).hexdigest()


def _build_manifest(config: ExperimentConfig, dataset_path: str | None) -> dict:
    return {
        "config": {
            "mode": config.mode,
            "n_enc": config.n_enc,
            "n_recon": config.n_recon,
            "n_pred": config.n_pred,
            "budget": config.budget,
            "chain_of_thought": config.chain_of_thought,
            "n_test_students": config.n_test_students,
            "seed": config.seed,
            "holdout_last": config.holdout_last,
            "steering_text": config.steering_text,
        },
        "dataset_path": dataset_path,
        "encoder": _spec_dict(config.encoder),
        "decoder": _spec_dict(config.decoder),
        "backend_ids": {"encoder": config.encoder.id, "decoder": config.decoder.id},
        "prompt_template_hash": _TEMPLATE_FINGERPRINT,
    }


def _test_students(dataset: Dataset, n: int):
    if n > len(dataset.trajectories):
        raise ValueError(
            f"requested {n} test students but the dataset has "
            f"{len(dataset.trajectories)} trajectories"
        )
    return dataset.trajectories[-n:]


def _split_seed(config_seed: int, student_id: str) -> list[int]:
    digest = hashlib.sha256(student_id.encode("utf-8")).digest()
    return [config_seed, int.from_bytes(digest[:4], "big")]


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> MetricsReport:
    """Score one configuration over the dataset's held-out tail of students.

    Splits depend only on (seed, student), never on budget or backends, so
    side-by-side runs are paired. A backend failure for one student is
    recorded on that student (accuracy 0, all questions unanswered) rather
    than aborting the whole run.
    """
    config.validate()
    if dataset is None:
        if not config.dataset_path:
            raise ValueError("config has no dataset_path and no dataset was passed")
        dataset = load_dataset(config.dataset_path)
    bank = dataset.questions_by_id

    results = []
    for trajectory in _test_students(dataset, config.n_test_students):
        seed = _split_seed(config.seed, trajectory.student_id)
        try:
            split = sample_split(
                trajectory,
                n_enc=config.n_enc,
                n_recon=config.n_recon,
                n_pred=config.n_pred,
                seed=seed,
                holdout_last=config.holdout_last,
            )
            questions = [bank[i.question_id] for i in split.y_s]
            truth = {i.question_id: i.correct for i in split.y_s}
            if config.mode == "direct":
                preds = direct_predict(config.encoder, split.x_enc, questions, bank)
                bottleneck = None
            else:
                bottleneck = encode(
                    config.encoder,
                    split,
                    bank,
                    config.budget,
                    steering_text=config.steering_text,
                    chain_of_thought=config.chain_of_thought,
                    profile=dataset.profile(trajectory.student_id),
                )
                preds = decode(config.decoder, bottleneck, questions)
            acc = accuracy(preds, truth)
            results.append(
                StudentResult(
                    student_id=trajectory.student_id,
                    accuracy=acc.value,
                    n_questions=acc.n,
                    predictions=preds.predictions,
                    truth=truth,
                    bottleneck_text=bottleneck.text if bottleneck else None,
                    token_count=bottleneck.token_count if bottleneck else None,
                )
            )
        except Exception as exc:  # noqa: BLE001 - recorded per student
            results.append(
                StudentResult(
                    student_id=trajectory.student_id,
                    accuracy=0.0,
                    n_questions=0,
                    predictions={},
                    truth={},
                    error=f"{type(exc).__name__}: {exc}",
                )
            )

    accuracies = [r.accuracy for r in results]
    report = MetricsReport(
        mean_accuracy=float(np.mean(accuracies)),
        sem=compute_sem(accuracies) if len(accuracies) >= 2 else None,
        n_students=len(results),
        per_student=results,
        manifest=_build_manifest(config, config.dataset_path),
    )
    if config.out_dir:
        write_report(report, config.out_dir)
    return report


def write_report(report: MetricsReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "manifest.json").write_text(
        json.dumps(report.manifest, sort_keys=True, indent=2) + "\n"
    )
    with open(out / "per_student.jsonl", "w") as f:
        for r in report.per_student:
            f.write(
                json.dumps(
                    {
                        "student_id": r.student_id,
                        "accuracy": r.accuracy,
                        "n_questions": r.n_questions,
                        "error": r.error,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(out / "bottlenecks.jsonl", "w") as f:
        for r in report.per_student:
            if r.bottleneck_text is not None:
                f.write(
                    json.dumps(
                        {
                            "student_id": r.student_id,
                            "budget": report.manifest["config"]["budget"],
                            "text": r.bottleneck_text,
                            "token_count": r.token_count,
                            "encoder_id": report.manifest["backend_ids"]["encoder"],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    sem = f"{report.sem:.4f}" if report.sem is not None else "n/a"
    (out / "table.txt").write_text(
        "students  mean_accuracy  sem\n"
        f"{report.n_students:8d}  {report.mean_accuracy:13.4f}  {sem}\n"
    )
    return out


def run_from_manifest(manifest: Mapping | str | Path, dataset: Dataset | None = None) -> MetricsReport:
    """Re-execute a recorded run. Backends that recorded transcripts are
    swapped for replay backends over those transcripts, making the re-run
    deterministic and offline. The returned report keeps the original
    manifest (the swap is an execution detail), so a faithful replay
    serializes byte-for-byte identical to the first run."""
    if isinstance(manifest, (str, Path)):
        manifest = json.loads(Path(manifest).read_text())

    def respec(d: Mapping) -> BackendSpec:
        spec = _spec_from(d)
        if spec.kind != "replay" and spec.record_path:
            return BackendSpec(kind="replay", transcript_path=spec.record_path)
        return spec

    cfg = manifest["config"]
    config = ExperimentConfig(
        encoder=respec(manifest["encoder"]),
        decoder=respec(manifest["decoder"]),
        dataset_path=manifest.get("dataset_path"),
        mode=cfg["mode"],
        n_enc=cfg["n_enc"],
        n_recon=cfg["n_recon"],
        n_pred=cfg["n_pred"],
        budget=cfg["budget"],
        chain_of_thought=cfg["chain_of_thought"],
        n_test_students=cfg["n_test_students"],
        seed=cfg["seed"],
        holdout_last=cfg["holdout_last"],
        steering_text=cfg["steering_text"],
    )
    report = run_experiment(config, dataset=dataset)
    report.manifest = dict(manifest)
    return report


def bottleneck_sweep(
    config: ExperimentConfig, budgets: Sequence[int], dataset: Dataset | None = None
) -> dict[int, MetricsReport]:
    """One run per budget over identical splits (seeds are budget-independent)."""
    if len(set(budgets)) != len(budgets) or not budgets:
        raise ValueError("budgets must be non-empty and distinct")
    reports = {}
    for budget in budgets:
        reports[int(budget)] = run_experiment(
            replace(config, budget=int(budget), out_dir=None), dataset=dataset
        )
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_plot_data(
            out / "sweep.dat",
            [
                (b, r.mean_accuracy, r.sem if r.sem is not None else 0.0)
                for b, r in sorted(reports.items())
            ],
            header="budget accuracy sem",
        )
    return reports


def write_plot_data(path: str | Path, rows: Sequence[tuple], header: str = "x y err") -> Path:
    path = Path(path)
    lines = [f"# {header}"]
    for row in rows:
        lines.append(" ".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def encoder_decoder_grid(
    config: ExperimentConfig,
    encoders: Sequence[BackendSpec],
    decoders: Sequence[BackendSpec],
    dataset: Dataset | None = None,
) -> dict:
    """Cross every encoder with every decoder on identical splits."""
    cells = {}
    for enc in encoders:
        for dec in decoders:
            report = run_experiment(
                replace(config, encoder=enc, decoder=dec, out_dir=None), dataset=dataset
            )
            cells[(enc.id, dec.id)] = report.mean_accuracy
    encoder_means = {
        e.id: float(np.mean([cells[(e.id, d.id)] for d in decoders])) for e in encoders
    }
    decoder_means = {
        d.id: float(np.mean([cells[(e.id, d.id)] for e in encoders])) for d in decoders
    }
    return {
        "cells": {f"{eid}|{did}": v for (eid, did), v in sorted(cells.items())},
        "encoder_means": encoder_means,
        "decoder_means": decoder_means,
    }


_STRATA = ("0", "1", "2", "3+")


def _stratum(profile: StudentProfile) -> str:
    n = len(profile.misconceptions)
    return str(n) if n < 3 else "3+"


def stratify_by_misconceptions(
    report: MetricsReport,
    profiles: Mapping[str, StudentProfile] | Sequence[StudentProfile],
    baseline: MetricsReport | None = None,
) -> dict:
    """Group per-student accuracy by misconception count (0, 1, 2, 3+).

    With a baseline report (same students), each stratum also gets the
    relative accuracy difference against it.
    """
    if not isinstance(profiles, Mapping):
        profiles = {p.id: p for p in profiles}
    buckets: dict[str, list[float]] = {s: [] for s in _STRATA}
    for r in report.per_student:
        profile = profiles.get(r.student_id)
        if profile is None:
            raise ValueError(f"no profile for student {r.student_id}")
        buckets[_stratum(profile)].append(r.accuracy)

    base_means = {}
    if baseline is not None:
        base_buckets: dict[str, list[float]] = {s: [] for s in _STRATA}
        for r in baseline.per_student:
            base_buckets[_stratum(profiles[r.student_id])].append(r.accuracy)
        base_means = {
            s: float(np.mean(v)) if v else None for s, v in base_buckets.items()
        }

    out = {}
    for stratum in _STRATA:
        values = buckets[stratum]
        entry = {
            "n": len(values),
            "mean": float(np.mean(values)) if values else None,
            "std": float(np.std(values, ddof=1)) if len(values) > 1 else None,
        }
        if baseline is not None and entry["mean"] is not None:
            base = base_means.get(stratum)
            if base:
                entry["relative_difference"] = (entry["mean"] - base) / base
        out[stratum] = entry
    return out


def steering_ablation_missing_construct(
    config: ExperimentConfig, dataset: Dataset | None = None
) -> dict:
    """Remove one construct's questions from the encoder evidence, then repair
    the summary with a single injected mastery sentence.

    For each construct c, every test student is run twice on identical target
    questions: once with the impoverished summary alone, once with the true
    mastery sentence appended. Reported per construct: both arms' accuracy on
    c-questions and overall. Requires profiles (synthetic data) and an oracle
    encoder, since the summary must reflect only the surviving evidence.
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config.dataset_path)
    if config.encoder.kind != "oracle":
        raise ValueError("the ablation is defined for the oracle encoder")
    bank = dataset.questions_by_id

    per_construct = {}
    for construct in Operator:
        rows = []
        for trajectory in _test_students(dataset, config.n_test_students):
            profile = dataset.profile(trajectory.student_id)
            if profile is None:
                raise ValueError(f"no profile for student {trajectory.student_id}")
            seed = _split_seed(config.seed, trajectory.student_id)
            split = sample_split(
                trajectory,
                n_enc=config.n_enc,
                n_recon=config.n_recon,
                n_pred=config.n_pred,
                seed=seed,
                holdout_last=config.holdout_last,
            )
            filtered = replace(
                split,
                x_enc=[i for i in split.x_enc if bank[i.question_id].op is not construct],
            )
            bottleneck = encode(
                config.encoder,
                filtered,
                bank,
                config.budget,
                profile=profile,
                observed_only=True,
            )
            injected = replace(
                bottleneck,
                text=bottleneck.text
                + "\n"
                + steering_sentence(construct, construct in profile.mastered),
            )
            questions = [bank[i.question_id] for i in split.y_s]
            truth = {i.question_id: i.correct for i in split.y_s}
            preds_plain = decode(config.decoder, bottleneck, questions)
            preds_injected = decode(config.decoder, injected, questions)

            c_qids = {q.id for q in questions if q.op is construct}
            row = {
                "student_id": trajectory.student_id,
                "overall_without": accuracy(preds_plain, truth).value,
                "overall_with": accuracy(preds_injected, truth).value,
            }
            if c_qids:
                c_truth = {qid: truth[qid] for qid in c_qids}
                row["construct_without"] = accuracy(
                    {qid: preds_plain.predictions[qid] for qid in c_qids}, c_truth
                ).value
                row["construct_with"] = accuracy(
                    {qid: preds_injected.predictions[qid] for qid in c_qids}, c_truth
                ).value
            rows.append(row)

        with_c = [r for r in rows if "construct_without" in r]
        per_construct[construct.value] = {
            "n_students": len(rows),
            "n_with_construct_targets": len(with_c),
            "overall_without": float(np.mean([r["overall_without"] for r in rows])),
            "overall_with": float(np.mean([r["overall_with"] for r in rows])),
            "construct_without": float(np.mean([r["construct_without"] for r in with_c]))
            if with_c
            else None,
            "construct_with": float(np.mean([r["construct_with"] for r in with_c]))
            if with_c
            else None,
        }

    without = [v["overall_without"] for v in per_construct.values()]
    with_ = [v["overall_with"] for v in per_construct.values()]
    return {
        "per_construct": per_construct,
        "mean_without": float(np.mean(without)),
        "std_without": float(np.std(without, ddof=1)),
        "mean_with": float(np.mean(with_)),
        "std_with": float(np.std(with_, ddof=1)),
    }
