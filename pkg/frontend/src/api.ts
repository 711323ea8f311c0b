/**
 * Typed client for the copyforge generation service.
 *
 * Every shape here mirrors one JSON response of the HTTP API; the UI
 * layers never recompute business figures, they only display fields
 * returned by these calls.
 */

export type Provenance = "model" | "cache";
export type ScreeningState = "pending" | "approved" | "rejected";
export type Verdict = "approve" | "reject";

export interface Candidate {
  text: string;
  score: number;
}

/** Filter outcome attached to an artifact; reasons are [rule, evidence] pairs. */
export interface FilterVerdict {
  accepted: boolean;
  reasons: [string, string][];
}

export interface Artifact {
  artifact_id: string;
  sku: string;
  description: string;
  /** The text this artifact serves: the reviewer's edit when present. */
  text: string;
  candidates: Candidate[];
  provenance: Provenance;
  model_version: string;
  verdict: FilterVerdict;
  screening_state: ScreeningState;
  edited_text: string | null;
  created_at: number;
  reviewed_at: number | null;
}

export interface GenerateResponse extends Artifact {
  latency_ms: number;
}

export interface VerdictResponse extends Artifact {
  acceptance_rate_today: number;
}

export interface Stats {
  acceptance_rate_today: number | null;
  ctr: number | null;
  cvr: number | null;
  cache_hit_rate: number;
}

export interface Health {
  status: "ok" | "degraded";
  model_version: string | null;
}

export interface InlineAttr {
  k: string;
  v: string;
}

/** A product record sent inline instead of looked up in the catalog. */
export interface InlineRecord {
  sku: string;
  title: string;
  category?: string;
  attrs?: InlineAttr[];
  slogan?: string;
}

export interface GenerateRequest {
  sku?: string;
  record?: InlineRecord;
  beam_size?: number;
  max_len?: number;
}

export interface EventRecord {
  sku: string;
  event: "pv" | "click" | "purchase";
  bucket?: string;
  ts?: number;
}

/** Error raised for any non-2xx response; `code` is the service's error id. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

const defaultFetch: FetchLike = (input, init) => globalThis.fetch(input, init);

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl: FetchLike = defaultFetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} ${response.statusText}`;
      try {
        const payload = (await response.json()) as {
          error?: string;
          message?: string;
        };
        if (typeof payload.error === "string") code = payload.error;
        if (typeof payload.message === "string") message = payload.message;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.request("POST", "/v1/generate", req);
  }

  description(sku: string): Promise<Artifact> {
    return this.request("GET", `/v1/descriptions/${encodeURIComponent(sku)}`);
  }

  pending(limit?: number): Promise<Artifact[]> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    return this.request("GET", `/v1/screening/pending${query}`);
  }

  postVerdict(
    artifactId: string,
    verdict: Verdict,
    editedText?: string,
  ): Promise<VerdictResponse> {
    const body: { verdict: Verdict; edited_text?: string } = { verdict };
    if (editedText !== undefined) body.edited_text = editedText;
    return this.request(
      "POST",
      `/v1/screening/${encodeURIComponent(artifactId)}/verdict`,
      body,
    );
  }

  stats(): Promise<Stats> {
    return this.request("GET", "/v1/stats");
  }

  health(): Promise<Health> {
    return this.request("GET", "/v1/healthz");
  }

  async recordEvents(records: EventRecord[]): Promise<number> {
    const out = await this.request<{ appended: number }>(
      "POST",
      "/v1/events",
      { records },
    );
    return out.appended;
  }
}

/** A display string for any error thrown by the client. */
export function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
