/** DOM wiring for the two-tab console. Logic lives in views/render;
 * this file only reads inputs, drives fetches, and swaps innerHTML.
 */

import { isAbort, retrieve, zeroShot } from "./api.js";
import { renderBars, renderCards, renderError } from "./render.js";
import {
  buildRetrievalView,
  buildZeroShotView,
  parseIds,
  parseK,
  parseQueries,
} from "./views.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function serviceBase(): string {
  return el<HTMLInputElement>("service-url").value.trim() || "http://127.0.0.1:8000";
}

function initBaseUrl(): void {
  const param = new URLSearchParams(window.location.search).get("service");
  if (param) {
    el<HTMLInputElement>("service-url").value = param;
  }
}

function initTabs(): void {
  const tabs = Array.from(document.querySelectorAll<HTMLButtonElement>("[role=tab]"));
  for (const tab of tabs) {
    tab.addEventListener("click", () => {
      for (const other of tabs) {
        const active = other === tab;
        other.setAttribute("aria-selected", String(active));
        el(other.getAttribute("aria-controls") as string).hidden = !active;
      }
    });
  }
}

function initRetrieveTab(): void {
  let inflight: AbortController | null = null;
  const form = el<HTMLFormElement>("retrieve-form");
  const hint = el("retrieve-hint");
  const banner = el("retrieve-banner");
  const results = el("retrieve-results");

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const query = el<HTMLInputElement>("retrieve-query").value.trim();
    if (!query) {
      hint.textContent = "enter a query first";
      return;
    }
    hint.textContent = "";
    banner.innerHTML = "";
    const k = parseK(el<HTMLInputElement>("retrieve-k").value);

    inflight?.abort(); // one in-flight request per tab
    const controller = new AbortController();
    inflight = controller;

    void retrieve(serviceBase(), query, k, controller.signal)
      .then((payload) => {
        results.innerHTML = renderCards(buildRetrievalView(query, payload));
      })
      .catch((err: unknown) => {
        if (isAbort(err)) {
          return; // superseded by a newer submission
        }
        results.innerHTML = ""; // never show stale results next to an error
        banner.innerHTML = renderError(err instanceof Error ? err.message : String(err));
      });
  });
}

function initZeroShotTab(): void {
  let inflight: AbortController | null = null;
  const form = el<HTMLFormElement>("zeroshot-form");
  const hint = el("zeroshot-hint");
  const banner = el("zeroshot-banner");
  const charts = el("zeroshot-charts");

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const queries = parseQueries(el<HTMLTextAreaElement>("zeroshot-queries").value);
    const ids = parseIds(el<HTMLInputElement>("zeroshot-ids").value);
    if (queries.length === 0) {
      hint.textContent = "enter at least one query";
      return;
    }
    if (ids.length === 0) {
      hint.textContent = "enter at least one recording id";
      return;
    }
    hint.textContent = "";
    banner.innerHTML = "";

    inflight?.abort();
    const controller = new AbortController();
    inflight = controller;

    // stateless by contract: every submission refetches the full matrix
    void zeroShot(serviceBase(), queries, ids, controller.signal)
      .then((payload) => {
        charts.innerHTML = renderBars(buildZeroShotView(queries, ids, payload));
      })
      .catch((err: unknown) => {
        if (isAbort(err)) {
          return;
        }
        charts.innerHTML = "";
        banner.innerHTML = renderError(err instanceof Error ? err.message : String(err));
      });
  });
}

initBaseUrl();
initTabs();
initRetrieveTab();
initZeroShotTab();
