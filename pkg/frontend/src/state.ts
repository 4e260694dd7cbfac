/** Session state: the selected domain and an append-only conversation.
 * Feedback is sent at most once per exchange; the pending flag is what
 * makes a double click issue a single request. */

import type { AskResponse } from "./api.js";

export type FeedbackState = "none" | "pending" | "accepted" | "rejected";

export interface Exchange {
  question: string;
  response: AskResponse | null;
  error: string | null;
  feedback: FeedbackState;
}

export class SessionState {
  /** null routes questions across all trained domains ("general"). */
  domain: string | null = null;
  readonly exchanges: Exchange[] = [];
  askPending = false;

  /** Append a pending exchange and return its index, or null when the
   * question is blank or another ask is still in flight. */
  beginAsk(question: string): number | null {
    if (!question.trim() || this.askPending) return null;
    this.askPending = true;
    this.exchanges.push({
      question,
      response: null,
      error: null,
      feedback: "none",
    });
    return this.exchanges.length - 1;
  }

  resolveAsk(index: number, response: AskResponse): void {
    this.exchangeAt(index).response = response;
    this.askPending = false;
  }

  failAsk(index: number, message: string): void {
    this.exchangeAt(index).error = message;
    this.askPending = false;
  }

  /** True while the exchange has an answer and no feedback yet. */
  canSendFeedback(index: number): boolean {
    const exchange = this.exchangeAt(index);
    return exchange.response !== null && exchange.feedback === "none";
  }

  /** Claim the exchange for one feedback request; false when it was
   * already claimed or settled. */
  beginFeedback(index: number): boolean {
    if (!this.canSendFeedback(index)) return false;
    this.exchangeAt(index).feedback = "pending";
    return true;
  }

  finishFeedback(index: number, accepted: boolean): void {
    this.exchangeAt(index).feedback = accepted ? "accepted" : "rejected";
  }

  /** A failed request releases the claim so the user can retry. */
  feedbackFailed(index: number, message: string): void {
    const exchange = this.exchangeAt(index);
    exchange.feedback = "none";
    exchange.error = message;
  }

  private exchangeAt(index: number): Exchange {
    const exchange = this.exchanges[index];
    if (exchange === undefined) {
      throw new RangeError(`no exchange at index ${index}`);
    }
    return exchange;
  }
}
