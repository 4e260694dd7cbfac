/** Test doubles shared by the unit tests: a scripted fetch that records
 * every request and replies from a queue. */

import type { AskResponse } from "../src/api.js";

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

export function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status < 400,
    status,
    json: async () => body,
  } as Response;
}

export function errorResponse(
  status: number,
  code: string,
  message: string,
): Response {
  return jsonResponse(status, { error: { code, message } });
}

/** Returns [fetchFn, requests]; fetchFn pops one scripted response per
 * call and records what was sent. */
export function scriptedFetch(
  responses: Response[],
): [(url: string, init?: RequestInit) => Promise<Response>, RecordedRequest[]] {
  const requests: RecordedRequest[] = [];
  const queue = [...responses];
  const fetchFn = async (url: string, init?: RequestInit) => {
    requests.push({
      url,
      method: init?.method ?? "GET",
      body: typeof init?.body === "string" ? JSON.parse(init.body) : null,
    });
    const next = queue.shift();
    if (next === undefined) throw new Error("scripted fetch queue is empty");
    return next;
  };
  return [fetchFn, requests];
}

export function askResponse(overrides: Partial<AskResponse> = {}): AskResponse {
  return {
    request_id: "req-1",
    domain_id: "support",
    question: "How do refunds work?",
    answer: "Refunds post back to the original payment card.",
    category: "billing",
    confidence: 0.91234,
    similarity: 0.87654,
    fallback: false,
    snapshot_id: 1,
    latency_ms: 2.5,
    ...overrides,
  };
}
