/** DOM builders. Every figure rendered here is copied verbatim from an
 * API response and only formatted for display. */

import type { DomainSummary, TrainingProgress } from "./api.js";
import type { Exchange } from "./state.js";

/** 0.9964 -> "99.6%" (one decimal, as shown everywhere in the console). */
export function formatPct(fraction: number): string {
  return `${(fraction * 100).toFixed(1)}%`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface FeedbackHandlers {
  onFeedback: (index: number, accepted: boolean) => void;
}

/** One conversation entry: the question, then either a spinner note, an
 * inline error, or the answer card with category badge, percentages,
 * fallback warning and feedback controls. */
export function renderExchange(
  exchange: Exchange,
  index: number,
  handlers: FeedbackHandlers,
): HTMLElement {
  const root = el("article", "exchange");
  root.append(el("div", "question", exchange.question));

  if (exchange.error !== null) {
    root.append(el("div", "error", exchange.error));
  }
  if (exchange.response === null) {
    if (exchange.error === null) {
      root.append(el("div", "pending", "waiting for the service..."));
    }
    return root;
  }

  const response = exchange.response;
  const card = el("div", "answer-card");
  const header = el("div", "answer-header");
  header.append(
    el("span", "category-badge", response.category),
    el("span", "domain-tag", response.domain_id),
    el("span", "confidence", `confidence ${formatPct(response.confidence)}`),
    el("span", "similarity", `similarity ${formatPct(response.similarity)}`),
  );
  card.append(header);
  if (response.fallback) {
    card.append(
      el(
        "div",
        "fallback-warning",
        "no entry in the predicted category; matched across the whole knowledge base",
      ),
    );
  }
  card.append(el("div", "answer-text", response.answer));

  const controls = el("div", "feedback-controls");
  const settled = exchange.feedback !== "none";
  for (const [label, accepted] of [
    ["accept", true],
    ["reject", false],
  ] as const) {
    const button = el("button", `feedback-${label}`, label);
    button.type = "button";
    button.disabled = settled;
    button.addEventListener("click", () => handlers.onFeedback(index, accepted));
    controls.append(button);
  }
  if (settled) {
    controls.append(el("span", "feedback-state", exchange.feedback));
  }
  card.append(controls);
  root.append(card);
  return root;
}

function describeStatus(
  domain: DomainSummary,
  progress: TrainingProgress | null,
): string {
  if (domain.status === "training" && progress !== null) {
    return `training ${progress.steps_done}/${progress.total_steps} steps`;
  }
  return domain.status;
}

/** Dashboard table; `progressByDomain` carries live training progress
 * for domains currently training. */
export function renderDomainList(
  domains: DomainSummary[],
  progressByDomain: Map<string, TrainingProgress | null> = new Map(),
): HTMLElement {
  const root = el("div", "domain-list");
  if (domains.length === 0) {
    root.append(
      el(
        "div",
        "onboarding-hint",
        "no domains yet; create one with the command line, then ingest and train",
      ),
    );
    return root;
  }
  for (const domain of domains) {
    const row = el("div", "domain-row");
    row.append(
      el("span", "domain-id", domain.domain_id),
      el(
        "span",
        `domain-status status-${domain.status}`,
        describeStatus(domain, progressByDomain.get(domain.domain_id) ?? null),
      ),
      el("span", "domain-kb", `${domain.kb_size} sentences`),
      el("span", "domain-categories", `${domain.num_categories} categories`),
    );
    root.append(row);
  }
  return root;
}

/** Banner shown when the service is unreachable; the caller wires the
 * retry button. */
export function renderOfflineBanner(onRetry: () => void): HTMLElement {
  const banner = el("div", "offline-banner");
  banner.append(el("span", "offline-text", "service unreachable"));
  const retry = el("button", "offline-retry", "retry");
  retry.type = "button";
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  return banner;
}
