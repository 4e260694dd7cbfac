/** Page wiring: a question bar, the conversation, and a domain
 * dashboard that polls while any domain is training. */

import { ApiClient, describeError } from "./api.js";
import { runAsk, runFeedback } from "./flows.js";
import { SessionState } from "./state.js";
import { renderDomainList, renderExchange, renderOfflineBanner } from "./ui.js";
import type { TrainingProgress } from "./api.js";

const GENERAL = "__general__";
const POLL_MS = 2000;

function defaultBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) return fromQuery.replace(/\/+$/, "");
  return "http://127.0.0.1:8000";
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function start(): void {
  const state = new SessionState();
  let client = new ApiClient(defaultBaseUrl());

  const baseUrlInput = byId<HTMLInputElement>("base-url");
  const domainSelect = byId<HTMLSelectElement>("domain-select");
  const questionInput = byId<HTMLInputElement>("question");
  const askButton = byId<HTMLButtonElement>("ask");
  const conversation = byId<HTMLDivElement>("conversation");
  const dashboard = byId<HTMLDivElement>("dashboard");
  baseUrlInput.value = client.baseUrl;

  function redrawConversation(): void {
    conversation.replaceChildren(
      ...state.exchanges.map((exchange, index) =>
        renderExchange(exchange, index, {
          onFeedback: (i, accepted) => {
            void runFeedback(state, client, i, accepted).then(redrawConversation);
            redrawConversation(); // show the pending state immediately
          },
        }),
      ),
    );
    conversation.scrollTop = conversation.scrollHeight;
    questionInput.disabled = state.askPending;
    askButton.disabled = state.askPending;
  }

  async function refreshDashboard(): Promise<void> {
    try {
      const domains = await client.listDomains();
      const progress = new Map<string, TrainingProgress | null>();
      for (const domain of domains) {
        if (domain.status === "training") {
          const detail = await client.domainDetail(domain.domain_id);
          progress.set(domain.domain_id, detail.training_progress);
        }
      }
      dashboard.replaceChildren(renderDomainList(domains, progress));

      const selected = domainSelect.value || GENERAL;
      domainSelect.replaceChildren(
        new Option("general (all trained domains)", GENERAL),
        ...domains.map((d) => new Option(d.domain_id, d.domain_id)),
      );
      domainSelect.value = [...domainSelect.options].some(
        (option) => option.value === selected,
      )
        ? selected
        : GENERAL;

      if (domains.some((d) => d.status === "training")) {
        window.setTimeout(() => void refreshDashboard(), POLL_MS);
      }
    } catch (err) {
      dashboard.replaceChildren(
        renderOfflineBanner(() => void refreshDashboard()),
      );
      console.error("dashboard refresh failed:", describeError(err));
    }
  }

  byId<HTMLFormElement>("ask-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const question = questionInput.value;
    void runAsk(state, client, question).then((index) => {
      if (index !== null) {
        questionInput.value = ""; // sent: clear; kept on error for retry
        if (state.exchanges[index]?.error !== null) {
          questionInput.value = question;
        }
      }
      redrawConversation();
    });
    redrawConversation();
  });

  domainSelect.addEventListener("change", () => {
    state.domain = domainSelect.value === GENERAL ? null : domainSelect.value;
  });

  baseUrlInput.addEventListener("change", () => {
    client = new ApiClient(baseUrlInput.value.replace(/\/+$/, ""));
    void refreshDashboard();
  });

  byId<HTMLButtonElement>("refresh-domains").addEventListener("click", () =>
    void refreshDashboard(),
  );

  void refreshDashboard();
}

start();
