/** Client-side workbench state: the server stays stateless.
 *
 * Invariants enforced here rather than in the DOM layer:
 * - post-edit predictions always derive from the currently displayed summary
 *   text: a decode result is applied only if it is the newest request AND was
 *   issued for the text still on screen;
 * - edit history is kept locally with undo;
 * - a failed or superseded decode leaves the pre-edit view intact.
 */

import type { DecodeResponse, EncodeResponse } from "./api.js";
import { comparePredictions, type PredictionDiff } from "./diff.js";

export interface WorkbenchState {
  studentId: string | null;
  budget: number;
  bottleneck: EncodeResponse | null;
  /** The text in the editor; starts as the generated summary. */
  summaryText: string;
  baseline: DecodeResponse | null;
  postEdit: DecodeResponse | null;
  diff: PredictionDiff | null;
  error: string | null;
}

export const BUDGET_CHOICES = [128, 256, 512] as const;

interface PendingDecode {
  seq: number;
  summaryText: string;
}

export class WorkbenchStore {
  private state: WorkbenchState = {
    studentId: null,
    budget: 128,
    bottleneck: null,
    summaryText: "",
    baseline: null,
    postEdit: null,
    diff: null,
    error: null,
  };
  private history: string[] = [];
  private decodeSeq = 0;
  private pending: PendingDecode | null = null;
  private listeners: (() => void)[] = [];

  snapshot(): Readonly<WorkbenchState> {
    return this.state;
  }

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private update(partial: Partial<WorkbenchState>): void {
    this.state = { ...this.state, ...partial };
    for (const l of this.listeners) l();
  }

  selectStudent(studentId: string): void {
    this.history = [];
    this.pending = null;
    this.update({
      studentId,
      bottleneck: null,
      summaryText: "",
      baseline: null,
      postEdit: null,
      diff: null,
      error: null,
    });
  }

  setBudget(budget: number): void {
    if (!BUDGET_CHOICES.includes(budget as (typeof BUDGET_CHOICES)[number])) {
      throw new Error(`budget must be one of ${BUDGET_CHOICES.join(", ")}`);
    }
    this.update({ budget });
  }

  setBottleneck(bottleneck: EncodeResponse, baseline: DecodeResponse): void {
    this.history = [];
    this.pending = null;
    this.update({
      bottleneck,
      summaryText: bottleneck.text,
      baseline,
      postEdit: null,
      diff: null,
      error: null,
    });
  }

  /** Record an edit; the previous text becomes undoable. */
  editSummary(text: string): void {
    if (text === this.state.summaryText) return;
    this.history.push(this.state.summaryText);
    this.update({ summaryText: text });
  }

  canUndo(): boolean {
    return this.history.length > 0;
  }

  undo(): void {
    const previous = this.history.pop();
    if (previous !== undefined) this.update({ summaryText: previous });
  }

  /** Claim the single in-flight decode slot for the current text. */
  beginDecode(): number {
    const seq = ++this.decodeSeq;
    this.pending = { seq, summaryText: this.state.summaryText };
    return seq;
  }

  decodeInFlight(): boolean {
    return this.pending !== null;
  }

  /** Apply a finished decode; stale or mismatched responses are dropped.
   * Returns true when the view advanced. */
  applyDecode(seq: number, result: DecodeResponse): boolean {
    if (this.pending === null || this.pending.seq !== seq) return false;
    if (this.pending.summaryText !== this.state.summaryText) {
      // The operator kept typing; this response no longer describes the
      // displayed document.
      this.pending = null;
      return false;
    }
    this.pending = null;
    const diff = this.state.baseline ? comparePredictions(this.state.baseline, result) : null;
    this.update({ postEdit: result, diff, error: null });
    return true;
  }

  failDecode(seq: number, message: string): void {
    if (this.pending === null || this.pending.seq !== seq) return;
    this.pending = null;
    // Pre-edit view stays; only the error banner changes.
    this.update({ error: message });
  }

  /** Truth-aware accuracy panel is shown only when the service sent truth. */
  showAccuracyPanel(): boolean {
    return this.state.baseline?.accuracy != null;
  }
}
