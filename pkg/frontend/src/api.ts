import type { QueueFilters, QueuePage, QueueStats, ReviewItem } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public error: string,
    public detail: string,
  ) {
    super(`${error}: ${detail}`);
  }
}

/** 409 from a double submit; the UI shows the conflict banner for these. */
export class ConflictError extends ApiError {}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseFor(response: Response): Promise<never> {
  let error = "error";
  let detail = response.statusText;
  try {
    const body = await response.json();
    error = body.error ?? error;
    detail = body.detail ?? detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 409) throw new ConflictError(409, error, detail);
  throw new ApiError(response.status, error, detail);
}

export class ReviewApi {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private token: string | null = null,
  ) {}

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["X-Review-Token"] = this.token;
    return headers;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      headers: this.headers(false),
    });
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as T;
  }

  async queue(filters: QueueFilters = {}): Promise<QueuePage> {
    const params = new URLSearchParams();
    if (filters.status) params.set("status", filters.status);
    if (filters.machine_outcome) params.set("machine_outcome", filters.machine_outcome);
    params.set("page", String(filters.page ?? 1));
    params.set("page_size", String(filters.page_size ?? 50));
    return this.get<QueuePage>(`/api/queue?${params.toString()}`);
  }

  async case(caseId: string): Promise<ReviewItem> {
    return this.get<ReviewItem>(`/api/case/${encodeURIComponent(caseId)}`);
  }

  async stats(): Promise<QueueStats> {
    return this.get<QueueStats>("/api/stats");
  }

  async adjudicate(caseId: string, label: string, reviewer: string): Promise<ReviewItem> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/case/${encodeURIComponent(caseId)}/adjudicate`,
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ label, reviewer }),
      },
    );
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as ReviewItem;
  }

  async reopen(caseId: string): Promise<ReviewItem> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/case/${encodeURIComponent(caseId)}/reopen`,
      { method: "POST", headers: this.headers(false) },
    );
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as ReviewItem;
  }

  async exportCsv(): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/export`, {
      headers: this.headers(false),
    });
    if (!response.ok) await raiseFor(response);
    return response.text();
  }
}
