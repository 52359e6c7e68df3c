/** Before/after comparison of two prediction sets over identical questions. */

import type { DecodeResponse, Prediction } from "./api.js";

export interface Flip {
  question_id: number | string;
  question_text: string;
  before: "yes" | "no" | null;
  after: "yes" | "no" | null;
}

export interface PredictionDiff {
  unchanged: (number | string)[];
  flips: Flip[];
  /** Accuracies and delta are present only when both sides carry truth. */
  accuracyBefore: number | null;
  accuracyAfter: number | null;
  accuracyDelta: number | null;
}

function byId(predictions: Prediction[]): Map<number | string, Prediction> {
  return new Map(predictions.map((p) => [p.question_id, p]));
}

export function comparePredictions(pre: DecodeResponse, post: DecodeResponse): PredictionDiff {
  const before = byId(pre.predictions);
  const after = byId(post.predictions);
  if (before.size !== after.size || ![...before.keys()].every((id) => after.has(id))) {
    throw new Error("prediction sets cover different questions");
  }

  const flips: Flip[] = [];
  const unchanged: (number | string)[] = [];
  for (const [id, b] of before) {
    const a = after.get(id)!;
    if (a.prediction === b.prediction) {
      unchanged.push(id);
    } else {
      flips.push({
        question_id: id,
        question_text: b.question_text,
        before: b.prediction,
        after: a.prediction,
      });
    }
  }

  const haveTruth = pre.accuracy !== null && post.accuracy !== null;
  return {
    unchanged,
    flips,
    accuracyBefore: pre.accuracy,
    accuracyAfter: post.accuracy,
    accuracyDelta: haveTruth ? post.accuracy! - pre.accuracy! : null,
  };
}
