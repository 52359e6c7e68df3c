"""Interaction-log parsing, single-session filtering and dataset persistence.

Raw logs arrive as comma-separated rows with the header

    student_id,question_id,question_text,answer_given,correct,timestamp,response_time

Datasets persist as a directory of three line-delimited JSON files (bank,
profiles, trajectories) plus a small meta.json carrying the schema version.
Serialization is canonical (sorted keys, fixed separators) so identical data
always produces identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .students import (
    Dataset,
    Interaction,
    Misconception,
    MisconceptionKind,
    Operator,
    Question,
    StudentProfile,
    Trajectory,
)

SCHEMA_VERSION = 1

_HEADER = (
    "student_id",
    "question_id",
    "question_text",
    "answer_given",
    "correct",
    "timestamp",
    "response_time",
)

_TRUE_WORDS = {"true", "1", "yes", "t"}
_FALSE_WORDS = {"false", "0", "no", "f"}


class IngestError(ValueError):
    """Raised for malformed raw logs; the message carries line numbers."""


class SchemaVersionError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    student_id: str
    question_id: str
    question_text: str
    answer_given: str
    correct: bool
    timestamp: float
    response_time: float


@dataclass(frozen=True)
class SessionFilterConfig:
    min_response_time: float = 5.0
    max_gap: float = 180.0
    min_length: int = 40

    def validate(self):
        if self.min_response_time < 0 or self.max_gap <= 0 or self.min_length < 1:
            raise ValueError("filter thresholds must be positive")


def parse_records(stream: Iterable[str]) -> list[RawRecord]:
    """Parse a CSV stream into RawRecords, rejecting malformed rows.

    All problems are collected and raised together so a bad file reports
    every offending line, not just the first.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty input: missing header row")
    header = [h.strip() for h in header]
    missing = [c for c in _HEADER if c not in header]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")
    idx = {c: header.index(c) for c in _HEADER}

    records, problems = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            problems.append(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            continue
        try:
            correct_raw = row[idx["correct"]].strip().lower()
            if correct_raw in _TRUE_WORDS:
                correct = True
            elif correct_raw in _FALSE_WORDS:
                correct = False
            else:
                raise ValueError(f"unparseable correct flag {correct_raw!r}")
            timestamp = float(row[idx["timestamp"]])
            response_time = float(row[idx["response_time"]])
            if response_time < 0:
                raise ValueError(f"negative response_time {response_time}")
            records.append(
                RawRecord(
                    student_id=row[idx["student_id"]].strip(),
                    question_id=row[idx["question_id"]].strip(),
                    question_text=row[idx["question_text"]],
                    answer_given=row[idx["answer_given"]],
                    correct=correct,
                    timestamp=timestamp,
                    response_time=response_time,
                )
            )
        except ValueError as exc:
            problems.append(f"line {line_no}: {exc}")
    if problems:
        raise IngestError("; ".join(problems))
    return records


def filter_single_session(
    records: Sequence[RawRecord], config: SessionFilterConfig = SessionFilterConfig()
) -> list[Trajectory]:
    """Reduce noisy multi-session logs to clean single-session trajectories.

    Per student, in timestamp order (stable for ties): drop answers faster
    than min_response_time, split the remaining stream wherever the gap
    between consecutive answers exceeds max_gap, and keep every segment of at
    least min_length answers. Each surviving segment becomes one Trajectory;
    students contributing several segments get a #k suffix on the id.
    """
    config.validate()
    by_student: dict[str, list[RawRecord]] = {}
    for rec in records:
        by_student.setdefault(rec.student_id, []).append(rec)

    trajectories = []
    for student_id in sorted(by_student):
        recs = sorted(by_student[student_id], key=lambda r: r.timestamp)
        kept = [r for r in recs if r.response_time >= config.min_response_time]
        segments: list[list[RawRecord]] = []
        current: list[RawRecord] = []
        for rec in kept:
            if current and rec.timestamp - current[-1].timestamp > config.max_gap:
                segments.append(current)
                current = []
            current.append(rec)
        if current:
            segments.append(current)
        surviving = [seg for seg in segments if len(seg) >= config.min_length]
        for k, seg in enumerate(surviving):
            sid = student_id if len(surviving) == 1 else f"{student_id}#{k}"
            trajectories.append(
                Trajectory(
                    student_id=sid,
                    interactions=[
                        Interaction(
                            question_id=r.question_id,
                            given_answer=r.answer_given,
                            correct=r.correct,
                            timestamp=r.timestamp,
                            response_time=r.response_time,
                        )
                        for r in seg
                    ],
                )
            )
    return trajectories


def bank_from_records(records: Sequence[RawRecord]) -> list[Question]:
    """Distinct questions seen in a raw log, as text-only bank entries."""
    seen: dict[str, Question] = {}
    for rec in records:
        if rec.question_id not in seen:
            seen[rec.question_id] = Question(id=rec.question_id, text=rec.question_text)
    return [seen[qid] for qid in sorted(seen)]


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _question_record(q: Question) -> dict:
    rec = {"id": q.id, "text": q.text}
    if q.op is not None:
        rec.update(op=q.op.value, lhs=q.lhs, rhs=q.rhs, construct=q.construct)
    return rec


def _question_from(rec: dict) -> Question:
    op = Operator(rec["op"]) if "op" in rec else None
    return Question(
        id=rec["id"],
        text=rec["text"],
        op=op,
        lhs=rec.get("lhs"),
        rhs=rec.get("rhs"),
        construct=rec.get("construct"),
    )


def _profile_record(p: StudentProfile) -> dict:
    return {
        "id": p.id,
        "mastered": sorted(op.value for op in p.mastered),
        "misconceptions": [
            {"kind": m.kind.value} if m.x is None else {"kind": m.kind.value, "x": m.x}
            for m in p.misconceptions
        ],
        "slip_rate": p.slip_rate,
        "guess_rate": p.guess_rate,
    }


def _profile_from(rec: dict) -> StudentProfile:
    return StudentProfile(
        id=rec["id"],
        mastered=frozenset(Operator(v) for v in rec["mastered"]),
        misconceptions=tuple(
            Misconception(kind=MisconceptionKind(m["kind"]), x=m.get("x"))
            for m in rec["misconceptions"]
        ),
        slip_rate=rec["slip_rate"],
        guess_rate=rec["guess_rate"],
    )


def _interaction_record(i: Interaction) -> dict:
    rec = {
        "question_id": i.question_id,
        "given_answer": i.given_answer,
        "correct": i.correct,
    }
    if i.timestamp is not None:
        rec["timestamp"] = i.timestamp
    if i.response_time is not None:
        rec["response_time"] = i.response_time
    return rec


def _interaction_from(rec: dict) -> Interaction:
    return Interaction(
        question_id=rec["question_id"],
        given_answer=rec["given_answer"],
        correct=rec["correct"],
        timestamp=rec.get("timestamp"),
        response_time=rec.get("response_time"),
    )


def _trajectory_record(t: Trajectory) -> dict:
    return {
        "student_id": t.student_id,
        "interactions": [_interaction_record(i) for i in t.interactions],
    }


def _trajectory_from(rec: dict) -> Trajectory:
    return Trajectory(
        student_id=rec["student_id"],
        interactions=[_interaction_from(i) for i in rec["interactions"]],
    )


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.json").write_text(_dumps({"schema_version": SCHEMA_VERSION}) + "\n")
    with open(path / "bank.jsonl", "w") as f:
        for q in dataset.bank:
            f.write(_dumps(_question_record(q)) + "\n")
    with open(path / "profiles.jsonl", "w") as f:
        for p in dataset.profiles:
            f.write(_dumps(_profile_record(p)) + "\n")
    with open(path / "trajectories.jsonl", "w") as f:
        for t in dataset.trajectories:
            f.write(_dumps(_trajectory_record(t)) + "\n")
    return path


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no dataset at {path} (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"dataset schema version {meta.get('schema_version')!r} != {SCHEMA_VERSION}"
        )

    def read_lines(name):
        p = path / name
        if not p.exists():
            return []
        with open(p) as f:
            return [json.loads(line) for line in f if line.strip()]

    return Dataset(
        bank=[_question_from(r) for r in read_lines("bank.jsonl")],
        profiles=[_profile_from(r) for r in read_lines("profiles.jsonl")],
        trajectories=[_trajectory_from(r) for r in read_lines("trajectories.jsonl")],
    )
