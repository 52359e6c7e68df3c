/** DOM wiring for the workbench. All state lives in WorkbenchStore; this
 * layer renders snapshots and forwards events. */

import { ApiError, ServiceClient, type Trajectory } from "./api.js";
import { BUDGET_CHOICES, WorkbenchStore } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountWorkbench(root: HTMLElement, client: ServiceClient): WorkbenchStore {
  const store = new WorkbenchStore();

  const banner = el("div", { id: "error-banner", hidden: "" });
  const studentSelect = el("select", { id: "student-select" });
  const budgetSelect = el("select", { id: "budget-select" });
  for (const b of BUDGET_CHOICES) {
    const option = el("option", { value: String(b) }, `${b} tokens`);
    if (b === 128) option.selected = true;
    budgetSelect.appendChild(option);
  }
  const generateBtn = el("button", { id: "generate" }, "Generate summary");
  const historyTable = el("table", { id: "history" });
  const editor = el("textarea", { id: "summary-editor", rows: "6" });
  const undoBtn = el("button", { id: "undo" }, "Undo edit");
  const decodeBtn = el("button", { id: "redecode" }, "Re-decode");
  const diffPanel = el("div", { id: "diff-panel" });
  const accuracyPanel = el("div", { id: "accuracy-panel", hidden: "" });
  const auditPanel = el("ol", { id: "audit-panel" });

  root.append(
    banner,
    studentSelect,
    budgetSelect,
    generateBtn,
    historyTable,
    editor,
    undoBtn,
    decodeBtn,
    diffPanel,
    accuracyPanel,
    el("h3", {}, "Requests"),
    auditPanel,
  );

  function showError(message: string | null): void {
    banner.hidden = message === null;
    banner.textContent = message ?? "";
  }

  function renderHistory(trajectory: Trajectory): void {
    historyTable.replaceChildren();
    for (const row of trajectory.interactions) {
      const tr = el("tr", { class: row.correct ? "correct" : "incorrect" });
      tr.append(
        el("td", {}, row.question_text ?? String(row.question_id)),
        el("td", {}, String(row.given_answer)),
        el("td", {}, row.correct ? "correct" : "incorrect"),
      );
      historyTable.appendChild(tr);
    }
  }

  function renderAudit(): void {
    auditPanel.replaceChildren();
    for (const entry of client.audit) {
      auditPanel.appendChild(
        el(
          "li",
          { "data-audit": String(entry.id) },
          `#${entry.id} ${entry.method} ${entry.path} -> ${entry.status} (${entry.elapsedMs}ms)`,
        ),
      );
    }
  }

  store.subscribe(() => {
    const s = store.snapshot();
    showError(s.error);
    editor.value = s.summaryText;
    undoBtn.disabled = !store.canUndo();
    decodeBtn.disabled = s.bottleneck === null || store.decodeInFlight();

    diffPanel.replaceChildren();
    if (s.diff) {
      diffPanel.appendChild(
        el("p", {}, `${s.diff.flips.length} flipped, ${s.diff.unchanged.length} unchanged`),
      );
      for (const flip of s.diff.flips) {
        diffPanel.appendChild(
          el(
            "div",
            { class: "flip", "data-question": String(flip.question_id) },
            `${flip.question_text}: ${flip.before ?? "?"} -> ${flip.after ?? "?"}`,
          ),
        );
      }
    }

    accuracyPanel.hidden = !store.showAccuracyPanel();
    if (!accuracyPanel.hidden) {
      const before = s.baseline?.accuracy;
      const after = s.diff?.accuracyAfter ?? before;
      const delta = s.diff?.accuracyDelta ?? 0;
      accuracyPanel.textContent =
        `accuracy ${before?.toFixed(3)} -> ${after?.toFixed(3)} (${delta >= 0 ? "+" : ""}${delta.toFixed(3)})`;
    }
  });

  async function loadStudents(): Promise<void> {
    try {
      const rows = await client.students();
      studentSelect.replaceChildren();
      for (const row of rows) {
        studentSelect.appendChild(
          el(
            "option",
            { value: row.student_id },
            `${row.student_id} (${row.n_interactions} answers)`,
          ),
        );
      }
    } catch (e) {
      showError(e instanceof Error ? e.message : String(e));
    }
  }

  studentSelect.addEventListener("change", async () => {
    store.selectStudent(studentSelect.value);
    try {
      renderHistory(await client.trajectory(studentSelect.value));
    } catch (e) {
      showError(e instanceof Error ? e.message : String(e));
    }
    renderAudit();
  });

  generateBtn.addEventListener("click", async () => {
    const s = store.snapshot();
    const studentId = s.studentId ?? studentSelect.value;
    if (!studentId) return;
    try {
      const bottleneck = await client.encode({
        student_id: studentId,
        budget: Number(budgetSelect.value),
      });
      // Baseline decode over the held-out targets, truth attached.
      const baseline = await client.decode({
        summary_text: bottleneck.text,
        question_ids: bottleneck.y_question_ids,
        student_id: studentId,
      });
      store.setBottleneck(bottleneck, baseline);
    } catch (e) {
      showError(e instanceof ApiError ? e.detail : String(e));
    }
    renderAudit();
  });

  editor.addEventListener("input", () => store.editSummary(editor.value));
  undoBtn.addEventListener("click", () => store.undo());

  decodeBtn.addEventListener("click", async () => {
    const s = store.snapshot();
    if (!s.bottleneck) return;
    const seq = store.beginDecode();
    try {
      const result = await client.decode({
        summary_text: s.summaryText,
        question_ids: s.bottleneck.y_question_ids,
        student_id: s.studentId ?? undefined,
      });
      store.applyDecode(seq, result);
    } catch (e) {
      store.failDecode(seq, e instanceof ApiError ? e.detail : String(e));
    }
    renderAudit();
  });

  void loadStudents();
  return store;
}
