/** Typed client for the blinded reading service HTTP API. */

export interface Progress {
  read: number;
  total: number;
}

export interface CaseInfo {
  case_id: string;
  dims: number[];
}

export interface NextResponse {
  progress: Progress;
  case: CaseInfo | null;
}

export interface Conflict {
  case_id: string;
  dims: number[];
  primary_calls: string[];
}

export interface Report {
  n_cases: number;
  n_arbitrated: number;
  matrix: number[][];
  kappa: number | null;
  inter_reader_kappa: number | null;
  accuracy: number | null;
  sensitivity: number | null;
  specificity: number | null;
  f1: number | null;
}

export type Call = "positive" | "negative";
export type Axis = "sagittal" | "coronal" | "axial";
export type Display = "gray" | "pseudocolor";

export const AXES: Axis[] = ["sagittal", "coronal", "axial"];

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ReaderApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, String(body?.detail ?? resp.status));
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  nextCase(sessionId: string, reader: string): Promise<NextResponse> {
    const q = new URLSearchParams({ reader });
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/next?${q}`);
  }

  submitJudgment(sessionId: string, caseId: string, readerId: string, call: Call) {
    return this.post<{ case_id: string; status: string }>("/judgments", {
      session_id: sessionId,
      case_id: caseId,
      reader_id: readerId,
      call,
    });
  }

  conflicts(sessionId: string): Promise<{ conflicts: Conflict[] }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/conflicts`);
  }

  submitArbitration(sessionId: string, caseId: string, arbitratorId: string, call: Call) {
    return this.post<{ case_id: string; final_call: string; status: string }>(
      "/arbitrations",
      { session_id: sessionId, case_id: caseId, arbitrator_id: arbitratorId, call },
    );
  }

  report(sessionId: string): Promise<Report> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/report`);
  }

  sliceUrl(caseId: string, axis: Axis, index: number, display: Display): string {
    const q = new URLSearchParams({ axis, index: String(index), display });
    return `${this.baseUrl}/cases/${encodeURIComponent(caseId)}/slice?${q}`;
  }
}
