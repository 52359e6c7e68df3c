/** Typed client for the steering service.
 *
 * Every call is recorded in an audit log so each displayed prediction can be
 * traced back to the exact request/response pair that produced it. Decode
 * requests carry only summary text and question ids - never the interaction
 * history - which keeps the bottleneck intact at the wire.
 */

export interface HealthInfo {
  status: string;
  students: number;
  questions: number;
  encoder: string;
  decoder: string;
}

export interface StudentRow {
  student_id: string;
  n_interactions: number;
  n_misconceptions: number | null;
}

export interface InteractionRow {
  question_id: number | string;
  question_text: string | null;
  given_answer: number | string;
  correct: boolean;
}

export interface Trajectory {
  student_id: string;
  interactions: InteractionRow[];
}

export interface EncodeRequest {
  student_id: string;
  n_enc?: number;
  budget?: number;
  seed?: number;
  steering_text?: string;
}

export interface EncodeResponse {
  student_id: string;
  text: string;
  token_count: number;
  budget: number;
  encoder_id: string;
  y_question_ids: (number | string)[];
  x_enc_question_ids: (number | string)[];
}

export interface DecodeRequest {
  summary_text: string;
  question_ids: (number | string)[];
  student_id?: string;
}

export interface Prediction {
  question_id: number | string;
  question_text: string;
  prediction: "yes" | "no" | null;
  raw: string | null;
}

export interface TruthRow {
  question_id: number | string;
  actual_correct: boolean;
  match: boolean;
}

export interface DecodeResponse {
  predictions: Prediction[];
  truth: TruthRow[] | null;
  accuracy: number | null;
}

export interface AuditEntry {
  id: number;
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: unknown;
  startedAt: number;
  elapsedMs: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service returned ${status}: ${detail}`);
  }
}

/** fetch with the same shape in browsers, jsdom, and node tests. */
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  readonly audit: AuditEntry[] = [];
  private nextAuditId = 1;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async health(): Promise<HealthInfo> {
    return this.call("GET", "/health");
  }

  async students(): Promise<StudentRow[]> {
    return this.call("GET", "/students");
  }

  async trajectory(studentId: string): Promise<Trajectory> {
    return this.call("GET", `/students/${encodeURIComponent(studentId)}/trajectory`);
  }

  async encode(req: EncodeRequest): Promise<EncodeResponse> {
    return this.call("POST", "/encode", req);
  }

  async decode(req: DecodeRequest): Promise<DecodeResponse> {
    return this.call("POST", "/decode", req);
  }

  /** Audit entry backing the most recent call, for the traceability panel. */
  lastAudit(): AuditEntry | undefined {
    return this.audit[this.audit.length - 1];
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const startedAt = Date.now();
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await response.json().catch(() => null);
    this.audit.push({
      id: this.nextAuditId++,
      method,
      path,
      request: body ?? null,
      status: response.status,
      response: payload,
      startedAt,
      elapsedMs: Date.now() - startedAt,
    });
    if (!response.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }
}
