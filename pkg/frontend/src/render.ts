/** HTML and SVG string builders, kept DOM-free so tests run anywhere.
 *
 * Geometry below maps values to pixels, which is allowed display
 * scaling; the numbers written into attributes and labels come from
 * the view models untouched (labels round for display only).
 */

import type { RetrievalView, ZeroShotView } from "./views.js";

export const SPECTRUM_WIDTH = 320;
export const SPECTRUM_HEIGHT = 80;
export const BAR_HEIGHT = 120;
export const BAR_WIDTH = 34;
export const BAR_GAP = 10;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** SVG path through the points, x spread over the width, y scaled to peak. */
export function linePath(
  points: number[],
  width = SPECTRUM_WIDTH,
  height = SPECTRUM_HEIGHT,
): string {
  if (points.length === 0) {
    return "";
  }
  const peak = Math.max(...points);
  const scale = peak > 0 ? height / peak : 0;
  const dx = points.length > 1 ? width / (points.length - 1) : 0;
  return points
    .map((v, i) => {
      const x = (i * dx).toFixed(2);
      const y = (height - v * scale).toFixed(2);
      return `${i === 0 ? "M" : "L"}${x},${y}`;
    })
    .join("");
}

/** Vertical extent of one bar against a shared [lo, hi] value range. */
export function barRect(
  value: number,
  lo: number,
  hi: number,
  height = BAR_HEIGHT,
): { y: number; height: number } {
  const span = hi - lo;
  if (span <= 0) {
    return { y: height, height: 0 };
  }
  const yOf = (v: number) => ((hi - v) / span) * height;
  const baseline = yOf(0);
  const top = yOf(value);
  return { y: Math.min(top, baseline), height: Math.abs(top - baseline) };
}

export function renderCards(view: RetrievalView): string {
  return view.cards
    .map((card) => {
      const score = String(card.score);
      return (
        `<article class="card" data-recording="${escapeHtml(card.recordingId)}" ` +
        `data-score="${score}">` +
        `<header class="card-head">` +
        `<span class="rec">${escapeHtml(card.recordingId)}</span>` +
        `<span class="badge">${escapeHtml(card.truthClass)}</span>` +
        `<span class="score">${score}</span>` +
        `</header>` +
        `<p class="annotation">${escapeHtml(card.annotation)}</p>` +
        `<svg class="spectrum" viewBox="0 0 ${SPECTRUM_WIDTH} ${SPECTRUM_HEIGHT}" ` +
        `preserveAspectRatio="none" role="img" ` +
        `aria-label="spectrum preview for ${escapeHtml(card.recordingId)}">` +
        `<path d="${linePath(card.spectrum)}" fill="none" stroke="#2563eb"/>` +
        `</svg>` +
        `</article>`
      );
    })
    .join("");
}

export function renderBars(view: ZeroShotView): string {
  const values = view.groups.flatMap((g) => g.bars.map((b) => b.value));
  const lo = Math.min(0, ...values);
  const hi = Math.max(0, ...values);
  const width = view.queries.length * (BAR_WIDTH + BAR_GAP) + BAR_GAP;
  const labelSpace = 34;

  return view.groups
    .map((group) => {
      const bars = group.bars
        .map((bar, i) => {
          const { y, height } = barRect(bar.value, lo, hi);
          const x = BAR_GAP + i * (BAR_WIDTH + BAR_GAP);
          const value = String(bar.value);
          return (
            `<g class="bar${bar.highlighted ? " best" : ""}" ` +
            `data-query="${escapeHtml(bar.query)}" data-value="${value}">` +
            `<rect x="${x}" y="${y.toFixed(2)}" width="${BAR_WIDTH}" ` +
            `height="${height.toFixed(2)}" fill="${group.color}"` +
            `${bar.highlighted ? ' stroke="#111827" stroke-width="2"' : ""}/>` +
            `<text class="value" x="${x + BAR_WIDTH / 2}" y="${BAR_HEIGHT + 12}" ` +
            `text-anchor="middle">${bar.value.toFixed(3)}</text>` +
            `<text class="qlabel" x="${x + BAR_WIDTH / 2}" y="${BAR_HEIGHT + 26}" ` +
            `text-anchor="middle">${escapeHtml(bar.query)}</text>` +
            `</g>`
          );
        })
        .join("");
      return (
        `<figure class="group" data-recording="${escapeHtml(group.recordingId)}">` +
        `<figcaption>` +
        `<span class="swatch" style="background:${group.color}"></span>` +
        `${escapeHtml(group.recordingId)}` +
        `</figcaption>` +
        `<svg viewBox="0 0 ${width} ${BAR_HEIGHT + labelSpace}" role="img" ` +
        `aria-label="query scores for ${escapeHtml(group.recordingId)}">` +
        `<line x1="0" y1="${barRect(0, lo, hi).y.toFixed(2)}" x2="${width}" ` +
        `y2="${barRect(0, lo, hi).y.toFixed(2)}" class="baseline" stroke="#9ca3af"/>` +
        bars +
        `</svg>` +
        `</figure>`
      );
    })
    .join("");
}

export function renderError(message: string): string {
  return `<div class="banner" role="alert">${escapeHtml(message)}</div>`;
}
