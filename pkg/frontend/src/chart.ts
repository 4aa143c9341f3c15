import type { Series } from "./schema.js";

/** Fixed styling per algorithm label; extra labels cycle through the palette. */
const PALETTE: Record<string, string> = {
  dp: "#1f2430",
  greedy: "#c0392b",
  "QL-0.5": "#e67e22",
  "QL-0.9": "#2980b9",
  RL: "#27ae60",
};
const FALLBACK = ["#8e44ad", "#16a085", "#7f8c8d", "#d35400"];

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width?: number;
  height?: number;
}

const MARGIN = { top: 34, right: 20, bottom: 42, left: 58 };

function colorFor(label: string, index: number): string {
  return PALETTE[label] ?? FALLBACK[index % FALLBACK.length];
}

function fmt(value: number): string {
  return value.toFixed(2);
}

/** Tick positions: a round step covering [lo, hi] with about five divisions. */
export function niceTicks(lo: number, hi: number): number[] {
  if (lo === hi) {
    hi = lo + 1;
    lo = lo - 1;
  }
  const raw = (hi - lo) / 5;
  const power = Math.pow(10, Math.floor(Math.log10(raw)));
  const candidates = [1, 2, 2.5, 5, 10].map((m) => m * power);
  const step = candidates.find((c) => c >= raw) ?? candidates[candidates.length - 1];
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function tickLabel(value: number): string {
  const rounded = Math.round(value * 1e6) / 1e6;
  return String(rounded);
}

/**
 * Render one line chart (mean per sweep value, min-max whiskers) as an SVG
 * string.  Pure string assembly with fixed number formatting, so identical
 * input yields identical bytes.
 */
export function renderChart(series: Series[], options: ChartOptions): string {
  const width = options.width ?? 640;
  const height = options.height ?? 420;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const xs = series.flatMap((s) => s.points.map((p) => p.sweep));
  const ys = series.flatMap((s) => s.points.flatMap((p) => [p.min, p.max]));
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  let yMin = Math.min(...ys, 0);
  let yMax = Math.max(...ys);
  if (yMin === yMax) yMax = yMin + 1;
  const yPad = 0.05 * (yMax - yMin);
  yMax += yPad;
  if (yMin < 0) yMin -= yPad;

  const sx = (v: number) =>
    xMax === xMin
      ? MARGIN.left + plotW / 2
      : MARGIN.left + ((v - xMin) / (xMax - xMin)) * plotW;
  const sy = (v: number) => MARGIN.top + (1 - (v - yMin) / (yMax - yMin)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `font-family="Helvetica, Arial, sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="20" text-anchor="middle" font-size="14" font-weight="bold">` +
      `${options.title}</text>`,
  );

  for (const tick of niceTicks(yMin, yMax)) {
    const y = fmt(sy(tick));
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y}" x2="${width - MARGIN.right}" y2="${y}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${y}" text-anchor="end" dominant-baseline="middle">` +
        `${tickLabel(tick)}</text>`,
    );
  }
  for (const tick of niceTicks(xMin, xMax)) {
    if (tick < xMin - 1e-9 || tick > xMax + 1e-9) continue;
    const x = fmt(sx(tick));
    parts.push(
      `<line x1="${x}" y1="${MARGIN.top + plotH}" x2="${x}" y2="${MARGIN.top + plotH + 4}" ` +
        `stroke="#333333"/>`,
    );
    parts.push(
      `<text x="${x}" y="${MARGIN.top + plotH + 16}" text-anchor="middle">${tickLabel(tick)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" ` +
      `fill="none" stroke="#333333"/>`,
  );
  parts.push(
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 8}" text-anchor="middle">` +
      `${options.xLabel}</text>`,
  );
  parts.push(
    `<text x="16" y="${MARGIN.top + plotH / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 16 ${MARGIN.top + plotH / 2})">${options.yLabel}</text>`,
  );

  series.forEach((s, index) => {
    const color = colorFor(s.label, index);
    const path = s.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(sx(p.sweep))} ${fmt(sy(p.mean))}`)
      .join(" ");
    for (const p of s.points) {
      if (p.max > p.min) {
        const x = fmt(sx(p.sweep));
        parts.push(
          `<line x1="${x}" y1="${fmt(sy(p.min))}" x2="${x}" y2="${fmt(sy(p.max))}" ` +
            `stroke="${color}" stroke-width="1" opacity="0.6"/>`,
        );
        for (const cap of [p.min, p.max]) {
          parts.push(
            `<line x1="${fmt(sx(p.sweep) - 3)}" y1="${fmt(sy(cap))}" ` +
              `x2="${fmt(sx(p.sweep) + 3)}" y2="${fmt(sy(cap))}" ` +
              `stroke="${color}" stroke-width="1" opacity="0.6"/>`,
          );
        }
      }
    }
    parts.push(`<path d="${path}" fill="none" stroke="${color}" stroke-width="2"/>`);
    for (const p of s.points) {
      parts.push(
        `<circle cx="${fmt(sx(p.sweep))}" cy="${fmt(sy(p.mean))}" r="3" fill="${color}"/>`,
      );
    }
  });

  series.forEach((s, index) => {
    const y = MARGIN.top + 8 + index * 16;
    const x = width - MARGIN.right - 110;
    parts.push(
      `<line x1="${x}" y1="${y}" x2="${x + 18}" y2="${y}" ` +
        `stroke="${colorFor(s.label, index)}" stroke-width="2"/>`,
    );
    parts.push(`<text x="${x + 24}" y="${y + 4}">${s.label}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}
