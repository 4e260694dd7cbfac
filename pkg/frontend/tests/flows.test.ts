import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { runAsk, runFeedback } from "../src/flows.js";
import { SessionState } from "../src/state.js";
import {
  askResponse,
  errorResponse,
  jsonResponse,
  scriptedFetch,
} from "./helpers.js";

describe("runAsk", () => {
  it("sends nothing for an empty question", async () => {
    const [fetchFn, requests] = scriptedFetch([]);
    const state = new SessionState();

    const index = await runAsk(state, new ApiClient("http://svc", fetchFn), "  ");

    expect(index).toBeNull();
    expect(requests).toHaveLength(0);
    expect(state.exchanges).toHaveLength(0);
  });

  it("routes with the selected domain and settles the exchange", async () => {
    const [fetchFn, requests] = scriptedFetch([
      jsonResponse(200, askResponse({ similarity: 1.0 })),
    ]);
    const state = new SessionState();
    state.domain = "support";

    const index = await runAsk(
      state,
      new ApiClient("http://svc", fetchFn),
      "How do refunds work?",
    );

    expect(requests[0]?.body).toMatchObject({ domain_id: "support" });
    expect(state.exchanges[index!]?.response?.similarity).toBe(1.0);
    expect(state.askPending).toBe(false);
  });

  it("renders a 4xx inline and keeps the exchange for retry context", async () => {
    const [fetchFn] = scriptedFetch([
      errorResponse(404, "UNKNOWN_DOMAIN", "no domain 'ghost'"),
    ]);
    const state = new SessionState();
    state.domain = "ghost";

    const index = await runAsk(
      state,
      new ApiClient("http://svc", fetchFn),
      "hello there service",
    );

    expect(state.exchanges[index!]?.error).toBe(
      "no domain 'ghost' (UNKNOWN_DOMAIN)",
    );
    expect(state.askPending).toBe(false);
  });
});

describe("runFeedback", () => {
  it("issues exactly one request for a double click", async () => {
    const [fetchFn, requests] = scriptedFetch([
      jsonResponse(200, askResponse()),
      jsonResponse(200, {
        request_id: "req-1",
        accepted: true,
        learned: true,
        kb_size: 14,
      }),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    const state = new SessionState();
    const index = await runAsk(state, client, "a fine question");

    // Second call starts while the first is still pending.
    const [first, second] = await Promise.all([
      runFeedback(state, client, index!, true),
      runFeedback(state, client, index!, true),
    ]);

    const feedbackCalls = requests.filter((r) => r.url.endsWith("/feedback"));
    expect(feedbackCalls).toHaveLength(1);
    expect([first, second].sort()).toEqual([false, true]);
    expect(state.exchanges[index!]?.feedback).toBe("accepted");
  });

  it("releases the claim so a failed request can be retried", async () => {
    const [fetchFn, requests] = scriptedFetch([
      jsonResponse(200, askResponse()),
      errorResponse(409, "FEEDBACK_ALREADY_RECORDED", "already recorded"),
      jsonResponse(200, {
        request_id: "req-1",
        accepted: false,
        learned: false,
        kb_size: 13,
      }),
    ]);
    const client = new ApiClient("http://svc", fetchFn);
    const state = new SessionState();
    const index = await runAsk(state, client, "a fine question");

    expect(await runFeedback(state, client, index!, false)).toBe(false);
    expect(state.exchanges[index!]?.feedback).toBe("none");
    expect(await runFeedback(state, client, index!, false)).toBe(true);
    expect(state.exchanges[index!]?.feedback).toBe("rejected");
    expect(requests.filter((r) => r.url.endsWith("/feedback"))).toHaveLength(2);
  });
});
