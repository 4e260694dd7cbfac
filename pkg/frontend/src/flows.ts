/** The two user flows, kept free of DOM code so tests can drive them
 * against a counting fetch. */

import { ApiClient, describeError } from "./api.js";
import type { SessionState } from "./state.js";

/** Validate, append, ask, settle. Returns the exchange index, or null
 * when no request was sent (blank question or an ask in flight). */
export async function runAsk(
  state: SessionState,
  client: ApiClient,
  question: string,
): Promise<number | null> {
  const index = state.beginAsk(question);
  if (index === null) return null;
  try {
    state.resolveAsk(index, await client.ask(question, state.domain));
  } catch (err) {
    state.failAsk(index, describeError(err));
  }
  return index;
}

/** Send feedback exactly once for the exchange. Returns true when the
 * service acknowledged it; false when the exchange was already settled,
 * still pending, or the request failed (releasing it for retry). */
export async function runFeedback(
  state: SessionState,
  client: ApiClient,
  index: number,
  accepted: boolean,
): Promise<boolean> {
  if (!state.beginFeedback(index)) return false;
  const exchange = state.exchanges[index];
  const requestId = exchange?.response?.request_id;
  if (requestId === undefined) return false;
  try {
    await client.sendFeedback(requestId, accepted);
    state.finishFeedback(index, accepted);
    return true;
  } catch (err) {
    state.feedbackFailed(index, describeError(err));
    return false;
  }
}
