/** Pure view models: service payloads in, render-ready structures out.
 *
 * Every number in a view is the payload value itself; nothing here
 * recomputes or rescales scores. Display rounding happens at render
 * time only.
 */

import type { RetrievePayload, ZeroShotPayload } from "./api.js";

export interface CardView {
  recordingId: string;
  score: number;
  truthClass: string;
  annotation: string;
  spectrum: number[];
}

export interface RetrievalView {
  query: string;
  cards: CardView[];
}

export function buildRetrievalView(query: string, payload: RetrievePayload): RetrievalView {
  const cards = payload.results.map((r) => ({
    recordingId: r.recording_id,
    score: r.score,
    truthClass: r.truth_class,
    annotation: r.annotation,
    spectrum: r.spectrum_preview.slice(),
  }));
  cards.sort((a, b) => b.score - a.score); // stable, so service order breaks ties
  return { query, cards };
}

export interface BarView {
  query: string;
  value: number;
  /** True for the recording's best-scoring query. */
  highlighted: boolean;
}

export interface BarGroupView {
  recordingId: string;
  color: string;
  bars: BarView[];
}

export interface ZeroShotView {
  queries: string[];
  groups: BarGroupView[];
}

export const GROUP_COLORS = [
  "#2563eb",
  "#dc2626",
  "#d97706",
  "#059669",
  "#7c3aed",
  "#0891b2",
];

export function buildZeroShotView(
  queries: string[],
  recordingIds: string[],
  payload: ZeroShotPayload,
): ZeroShotView {
  const groups = recordingIds.map((recordingId, j) => ({
    recordingId,
    color: GROUP_COLORS[j % GROUP_COLORS.length],
    bars: queries.map((query, i) => ({
      query,
      value: payload.scores[i][j],
      highlighted: payload.argmax[j] === i,
    })),
  }));
  return { queries: queries.slice(), groups };
}

/** Parse the k field; out-of-range and junk input clamp into [1, 20]. */
export function parseK(raw: string, fallback = 3): number {
  const n = Number.parseInt(raw, 10);
  if (Number.isNaN(n)) {
    return fallback;
  }
  return Math.min(20, Math.max(1, n));
}

/** Comma-separated ids, trimmed, empties dropped. */
export function parseIds(raw: string): string[] {
  return raw
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}

/** One query per line, trimmed, empties dropped. */
export function parseQueries(raw: string): string[] {
  return raw
    .split("\n")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}
