/** Typed client for the question-answering service. Every number shown
 * in the console comes verbatim from one of these responses; the client
 * adds no inference of its own. */

export interface AskResponse {
  request_id: string;
  domain_id: string;
  question: string;
  answer: string;
  category: string;
  confidence: number;
  similarity: number;
  fallback: boolean;
  snapshot_id: number;
  latency_ms: number;
}

export interface FeedbackResponse {
  request_id: string;
  accepted: boolean;
  learned: boolean;
  kb_size: number;
}

export interface DomainSummary {
  domain_id: string;
  status: "created" | "ingested" | "trained" | "training";
  kb_size: number;
  num_categories: number;
  snapshot_id: number;
}

export interface TrainingProgress {
  steps_done: number;
  total_steps: number;
}

export interface DomainDetail extends DomainSummary {
  categories: string[];
  pad_length: number;
  vocab_size: number;
  training_progress: TrainingProgress | null;
  last_train_seconds: number | null;
  last_error: string | null;
}

/** A structured 4xx/5xx from the service; `code` is the machine name
 * from the error envelope. */
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

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Pass `domainId` null to route across all trained domains. */
  ask(question: string, domainId: string | null): Promise<AskResponse> {
    const body: Record<string, unknown> = { question };
    if (domainId !== null) body.domain_id = domainId;
    return this.request<AskResponse>("/ask", body);
  }

  sendFeedback(requestId: string, accepted: boolean): Promise<FeedbackResponse> {
    return this.request<FeedbackResponse>("/feedback", {
      request_id: requestId,
      accepted,
    });
  }

  async listDomains(): Promise<DomainSummary[]> {
    const data = await this.request<{ domains: DomainSummary[] }>("/domains");
    return data.domains;
  }

  domainDetail(domainId: string): Promise<DomainDetail> {
    return this.request<DomainDetail>(`/domains/${encodeURIComponent(domainId)}`);
  }

  private async request<T>(path: string, body?: unknown): Promise<T> {
    const init: RequestInit =
      body === undefined
        ? { method: "GET" }
        : {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
          };
    const response = await this.fetchFn(this.baseUrl + path, init);
    const payload = await response.json();
    if (!response.ok) {
      const envelope = (payload as { error?: { code?: string; message?: string } }).error;
      throw new ApiError(
        response.status,
        envelope?.code ?? "UNKNOWN",
        envelope?.message ?? `request failed with status ${response.status}`,
      );
    }
    return payload as T;
  }
}

/** Human-readable text for an inline error banner. */
export function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.message} (${err.code})`;
  if (err instanceof Error) return err.message;
  return String(err);
}
