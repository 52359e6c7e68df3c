"""Log parsing, single-session filtering and dataset persistence."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lbkt.ingest import (
    IngestError,
    RawRecord,
    SchemaVersionError,
    SessionFilterConfig,
    bank_from_records,
    filter_single_session,
    load_dataset,
    parse_records,
    save_dataset,
)

HEADER = "student_id,question_id,question_text,answer_given,correct,timestamp,response_time"


def rec(sid="s1", qid="q1", ts=0.0, rt=10.0, correct=True):
    return RawRecord(
        student_id=sid,
        question_id=qid,
        question_text="What is 1 + 1?",
        answer_given="2",
        correct=correct,
        timestamp=ts,
        response_time=rt,
    )


def steady(sid, n, start=0.0, step=30.0, rt=10.0):
    """n answers, one every `step` seconds."""
    return [rec(sid=sid, qid=f"q{i}", ts=start + i * step, rt=rt) for i in range(n)]


class TestParse:
    def test_parses_clean_csv(self):
        lines = [HEADER, 's1,q1,"What is 1 + 1?",2,true,100.0,7.5']
        records = parse_records(lines)
        assert records == [
            RawRecord("s1", "q1", "What is 1 + 1?", "2", True, 100.0, 7.5)
        ]

    def test_correct_flag_spellings(self):
        lines = [HEADER] + [f"s1,q{i},t,2,{w},0,9" for i, w in enumerate(["1", "no", "T", "FALSE"])]
        flags = [r.correct for r in parse_records(lines)]
        assert flags == [True, False, True, False]

    def test_reports_every_bad_line(self):
        lines = [
            HEADER,
            "s1,q1,t,2,true,0,9",
            "s1,q2,t,2,maybe,1,9",
            "s1,q3,t,2,true,zzz,9",
            "s1,q4,t,2,true,3,-1",
        ]
        with pytest.raises(IngestError) as err:
            parse_records(lines)
        msg = str(err.value)
        assert "line 3" in msg and "line 4" in msg and "line 5" in msg
        assert "line 2" not in msg

    def test_missing_column_rejected(self):
        with pytest.raises(IngestError, match="missing required columns"):
            parse_records(["student_id,question_id", "s1,q1"])

    def test_empty_input_rejected(self):
        with pytest.raises(IngestError, match="missing header"):
            parse_records([])

    def test_blank_lines_skipped(self):
        lines = [HEADER, "", "s1,q1,t,2,true,0,9", "  "]
        assert len(parse_records(lines)) == 1

    def test_reordered_columns_accepted(self):
        lines = [
            "timestamp,student_id,question_id,question_text,answer_given,correct,response_time",
            "5.0,s1,q1,t,3,false,8.0",
        ]
        (r,) = parse_records(lines)
        assert r.timestamp == 5.0 and r.student_id == "s1" and not r.correct


class TestFilter:
    def test_clean_run_kept_whole(self):
        # 45 answers, 30s apart, all slow enough: one full trajectory.
        out = filter_single_session(steady("s1", 45))
        assert len(out) == 1
        assert out[0].student_id == "s1"
        assert len(out[0].interactions) == 45

    def test_large_gap_splits_and_drops_short_segments(self):
        # 50 answers with a 300s break after the 20th: segments of 20 and 30,
        # both under the 40-answer floor, so the student vanishes entirely.
        records = steady("s1", 20) + steady("s1", 30, start=20 * 30.0 + 300.0)
        assert filter_single_session(records) == []

    def test_fast_answers_dropped_before_segmentation(self):
        records = steady("s1", 45)
        records[10] = rec(sid="s1", qid="q10", ts=10 * 30.0, rt=4.0)
        out = filter_single_session(records)
        assert len(out) == 1
        assert len(out[0].interactions) == 44
        assert all(i.response_time >= 5.0 for i in out[0].interactions)

    def test_boundary_values(self):
        # response_time == 5 stays; gap == 180 does not split.
        records = [
            rec(sid="s1", qid=f"q{i}", ts=i * 180.0, rt=5.0) for i in range(40)
        ]
        out = filter_single_session(records)
        assert len(out) == 1 and len(out[0].interactions) == 40

    def test_multiple_segments_get_suffixes(self):
        records = steady("s1", 40) + steady("s1", 41, start=40 * 30.0 + 500.0)
        out = filter_single_session(records)
        assert [t.student_id for t in out] == ["s1#0", "s1#1"]
        assert [len(t.interactions) for t in out] == [40, 41]

    def test_sorts_by_timestamp(self):
        records = list(reversed(steady("s1", 40)))
        out = filter_single_session(records)
        times = [i.timestamp for i in out[0].interactions]
        assert times == sorted(times)

    def test_students_independent(self):
        records = steady("a", 45) + steady("b", 10) + steady("c", 40)
        out = filter_single_session(records)
        assert [t.student_id for t in out] == ["a", "c"]

    def test_custom_thresholds(self):
        config = SessionFilterConfig(min_response_time=0.0, max_gap=1e9, min_length=1)
        out = filter_single_session(steady("s1", 3, rt=1.0), config)
        assert len(out) == 1 and len(out[0].interactions) == 3

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            filter_single_session([], SessionFilterConfig(min_length=0))

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["s1", "s2"]),
                st.floats(0, 1e5, allow_nan=False),
                st.floats(0, 60, allow_nan=False),
            ),
            max_size=60,
        )
    )
    def test_filter_idempotent(self, rows):
        records = [
            rec(sid=sid, qid=f"q{i}", ts=ts, rt=rt)
            for i, (sid, ts, rt) in enumerate(rows)
        ]
        config = SessionFilterConfig(min_length=5)
        once = filter_single_session(records, config)
        back = [
            RawRecord(
                student_id=t.student_id,
                question_id=i.question_id,
                question_text="t",
                answer_given=i.given_answer,
                correct=i.correct,
                timestamp=i.timestamp,
                response_time=i.response_time,
            )
            for t in once
            for i in t.interactions
        ]
        twice = filter_single_session(back, config)
        assert [
            [(i.question_id, i.timestamp) for i in t.interactions] for t in twice
        ] == [[(i.question_id, i.timestamp) for i in t.interactions] for t in once]


class TestBankFromRecords:
    def test_distinct_questions_sorted(self):
        records = [rec(qid="q2"), rec(qid="q1"), rec(qid="q2")]
        bank = bank_from_records(records)
        assert [q.id for q in bank] == ["q1", "q2"]
        assert bank[0].op is None


class TestPersistence:
    def test_roundtrip(self, small_dataset, tmp_path):
        save_dataset(small_dataset, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert loaded.bank == small_dataset.bank
        assert loaded.profiles == small_dataset.profiles
        assert loaded.trajectories == small_dataset.trajectories

    def test_save_is_canonical(self, small_dataset, tmp_path):
        a = save_dataset(small_dataset, tmp_path / "a")
        b = save_dataset(small_dataset, tmp_path / "b")
        for name in ["meta.json", "bank.jsonl", "profiles.jsonl", "trajectories.jsonl"]:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_schema_version_mismatch(self, small_dataset, tmp_path):
        path = save_dataset(small_dataset, tmp_path / "ds")
        (path / "meta.json").write_text(json.dumps({"schema_version": 999}))
        with pytest.raises(SchemaVersionError):
            load_dataset(path)

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")
