"""Clean a raw answer log down to single-session trajectories.

Three rules, applied per student: drop answers faster than 5 s, cut the
stream at any gap over 180 s, keep only segments of at least 40 answers.
"""

import io

from lbkt.ingest import SessionFilterConfig, filter_single_session, parse_records

rows = ["student_id,question_id,question_text,answer_given,correct,timestamp,response_time"]


def log(sid, n, start, step=60.0, rt=10.0):
    ts = start
    for i in range(n):
        rows.append(f"{sid},q{len(rows)},What is 2 + {i % 9}?,{2 + i % 9},true,{ts},{rt}")
        ts += step


log("amy", 45, start=0.0)                # steady 45-answer session
log("ben", 20, start=0.0)                # 20 answers ...
log("ben", 30, start=20 * 60 + 300.0)    # ... a 5-minute break, then 30 more
log("cal", 50, start=0.0, rt=3.0)        # all answers suspiciously fast

records = parse_records(io.StringIO("\n".join(rows)))
print(f"{len(records)} raw records from 3 students")

config = SessionFilterConfig()
for t in filter_single_session(records, config):
    print(f"  kept {t.student_id}: {len(t.interactions)} answers")

print()
print("amy survives whole; ben's two segments (20, 30) both miss the 40 floor;")
print("cal's 3 s answers are dropped before segmentation even starts.")

relaxed = SessionFilterConfig(min_length=20)
names = [t.student_id for t in filter_single_session(records, relaxed)]
print(f"with min_length=20 instead: {names}")
