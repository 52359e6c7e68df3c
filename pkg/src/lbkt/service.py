"""HTTP service for interactive summary steering.

Read-only over its dataset: list students, show a trajectory, encode a
student's evidence into a knowledge summary, and decode any summary text
against chosen questions. Decoding sees only the summary and the question
ids; the optional student_id in a decode request is used purely to attach
truth flags to the response, never to influence predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .gateway import BackendError, BackendSpec
from .harness import _split_seed
from .pipeline import decode, encode, sample_split
from .rewards import accuracy
from .students import Dataset
from .summary import SummaryParseError


class EncodeRequest(BaseModel):
    student_id: str
    n_enc: int = Field(default=50, ge=1)
    budget: int = Field(default=128, ge=1)
    steering_text: str | None = None
    seed: int = 0


class DecodeRequest(BaseModel):
    summary_text: str
    question_ids: list
    student_id: str | None = None


def create_app(
    dataset: Dataset,
    encoder: BackendSpec = BackendSpec(kind="oracle"),
    decoder: BackendSpec = BackendSpec(kind="oracle"),
    n_pred: int = 4,
    holdout_last: bool = False,
) -> FastAPI:
    app = FastAPI(title="knowledge-summary steering service")
    bank = dataset.questions_by_id

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "students": len(dataset.trajectories),
            "questions": len(dataset.bank),
            "encoder": encoder.id,
            "decoder": decoder.id,
        }

    @app.get("/students")
    def students():
        out = []
        for t in dataset.trajectories:
            profile = dataset.profile(t.student_id)
            out.append(
                {
                    "student_id": t.student_id,
                    "n_interactions": len(t.interactions),
                    "n_misconceptions": len(profile.misconceptions) if profile else None,
                }
            )
        return out

    @app.get("/students/{student_id}/trajectory")
    def trajectory(student_id: str):
        try:
            t = dataset.trajectory(student_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown student {student_id}")
        return {
            "student_id": student_id,
            "interactions": [
                {
                    "question_id": i.question_id,
                    "question_text": bank[i.question_id].text
                    if i.question_id in bank
                    else None,
                    "given_answer": i.given_answer,
                    "correct": i.correct,
                }
                for i in t.interactions
            ],
        }

    @app.post("/encode")
    def encode_endpoint(body: EncodeRequest):
        try:
            t = dataset.trajectory(body.student_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown student {body.student_id}")
        try:
            split = sample_split(
                t,
                n_enc=body.n_enc,
                n_pred=n_pred,
                seed=_split_seed(body.seed, body.student_id),
                holdout_last=holdout_last,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            bottleneck = encode(
                encoder,
                split,
                bank,
                body.budget,
                steering_text=body.steering_text,
                profile=dataset.profile(body.student_id),
            )
        except (BackendError, ValueError) as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return {
            "student_id": body.student_id,
            "text": bottleneck.text,
            "token_count": bottleneck.token_count,
            "budget": bottleneck.budget,
            "encoder_id": bottleneck.encoder_id,
            "y_question_ids": [i.question_id for i in split.y_s],
            "x_enc_question_ids": [i.question_id for i in split.x_enc],
        }

    @app.post("/decode")
    def decode_endpoint(body: DecodeRequest):
        questions = []
        for qid in body.question_ids:
            if qid not in bank:
                raise HTTPException(status_code=404, detail=f"unknown question {qid!r}")
            questions.append(bank[qid])
        from .pipeline import Bottleneck
        from .gateway import count_tokens

        bottleneck = Bottleneck(
            text=body.summary_text,
            token_count=count_tokens(body.summary_text),
            budget=max(count_tokens(body.summary_text), 1),
            encoder_id="client",
        )
        try:
            preds = decode(decoder, bottleneck, questions)
        # A summary the decoder cannot read is the client's document, not a
        # backend fault; the position in the detail points at the bad span.
        except SummaryParseError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except (BackendError, ValueError) as exc:
            raise HTTPException(status_code=502, detail=str(exc))

        response = {
            "predictions": [
                {
                    "question_id": q.id,
                    "question_text": q.text,
                    "prediction": preds.predictions[q.id],
                    "raw": preds.raw_texts.get(q.id),
                }
                for q in questions
            ],
            "truth": None,
            "accuracy": None,
        }
        if body.student_id is not None:
            try:
                t = dataset.trajectory(body.student_id)
            except KeyError:
                raise HTTPException(
                    status_code=404, detail=f"unknown student {body.student_id}"
                )
            recorded = {i.question_id: i.correct for i in t.interactions}
            if all(q.id in recorded for q in questions):
                truth = {q.id: recorded[q.id] for q in questions}
                response["truth"] = [
                    {
                        "question_id": q.id,
                        "actual_correct": truth[q.id],
                        "match": preds.predictions[q.id] is not None
                        and (preds.predictions[q.id] == "yes") == truth[q.id],
                    }
                    for q in questions
                ]
                response["accuracy"] = accuracy(preds, truth).value
        return response

    return app
