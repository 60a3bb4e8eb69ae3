/**
 * Minimal headless SVG plotting: line charts with optional log10 y-axis,
 * bar histograms, legends. Pure string assembly, no DOM.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  width?: number;
  dashed?: boolean;
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  logY: boolean;
  legendLines?: string[];
  width?: number;
  height?: number;
}

const MARGIN = { top: 40, right: 20, bottom: 48, left: 64 };

function niceTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) {
    return [lo];
  }
  const span = hi - lo;
  const step = 10 ** Math.floor(Math.log10(span / count));
  const err = span / count / step;
  const factor = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * factor;
  const ticks = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) {
    ticks.push(v);
  }
  return ticks;
}

function formatTick(v: number): string {
  if (v === 0) return '0';
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0);
  return Number(v.toPrecision(4)).toString();
}

function escapeXml(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

export function lineChart(series: Series[], options: ChartOptions): string {
  const width = options.width ?? 720;
  const height = options.height ?? 480;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;

  const transformY = (v: number) => (options.logY ? Math.log10(v) : v);
  const points = series.flatMap((s) =>
    s.x.map((x, i) => ({ x, y: s.y[i] }))
      .filter((p) => isFinite(p.x) && isFinite(p.y) &&
        (!options.logY || p.y > 0)),
  );
  if (points.length === 0) {
    throw new Error('nothing to plot: no finite data points');
  }
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => transformY(p.y));
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = Math.min(...ys);
  const yHi = Math.max(...ys);
  const padY = (yHi - yLo || 1) * 0.05;

  const sx = (x: number) =>
    MARGIN.left + ((x - xLo) / (xHi - xLo || 1)) * innerW;
  const sy = (y: number) =>
    MARGIN.top + innerH - ((transformY(y) - yLo + padY) /
      (yHi - yLo + 2 * padY)) * innerH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}" ` +
    `font-family="Helvetica, Arial, sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);

  // axes frame
  const x0 = MARGIN.left;
  const y0 = MARGIN.top + innerH;
  parts.push(
    `<g stroke="#333" fill="none">` +
    `<line x1="${x0}" y1="${y0}" x2="${x0 + innerW}" y2="${y0}"/>` +
    `<line x1="${x0}" y1="${MARGIN.top}" x2="${x0}" y2="${y0}"/></g>`,
  );

  for (const t of niceTicks(xLo, xHi)) {
    const px = sx(t);
    parts.push(
      `<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="#333"/>`,
      `<text x="${px}" y="${y0 + 18}" text-anchor="middle">` +
      `${formatTick(t)}</text>`,
    );
  }
  const yTicks = options.logY
    ? niceTicks(Math.ceil(yLo - padY), Math.floor(yHi + padY),
                Math.min(8, Math.ceil(yHi - yLo) + 1)).map((e) => 10 ** e)
    : niceTicks(yLo - padY, yHi + padY);
  for (const t of yTicks) {
    const py = sy(t);
    if (py < MARGIN.top - 1 || py > y0 + 1) continue;
    parts.push(
      `<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="#333"/>`,
      `<text x="${x0 - 8}" y="${py + 4}" text-anchor="end">` +
      `${options.logY ? t.toExponential(0) : formatTick(t)}</text>`,
    );
  }

  for (const s of series) {
    const coords = s.x
      .map((x, i) => ({ x, y: s.y[i] }))
      .filter((p) => isFinite(p.y) && (!options.logY || p.y > 0))
      .map((p) => `${sx(p.x).toFixed(2)},${sy(p.y).toFixed(2)}`);
    if (coords.length === 0) continue;
    const dash = s.dashed ? ' stroke-dasharray="6 4"' : '';
    parts.push(
      `<polyline fill="none" stroke="${s.color}" ` +
      `stroke-width="${s.width ?? 1.5}"${dash} points="${coords.join(' ')}"/>`,
    );
  }

  parts.push(
    `<text x="${width / 2}" y="22" text-anchor="middle" font-size="15">` +
    `${escapeXml(options.title)}</text>`,
    `<text x="${MARGIN.left + innerW / 2}" y="${height - 10}" ` +
    `text-anchor="middle">${escapeXml(options.xLabel)}</text>`,
    `<text x="16" y="${MARGIN.top + innerH / 2}" text-anchor="middle" ` +
    `transform="rotate(-90 16 ${MARGIN.top + innerH / 2})">` +
    `${escapeXml(options.yLabel)}</text>`,
  );

  const legendEntries = series.filter((s) => s.label);
  const legendLines = options.legendLines ?? [];
  if (legendEntries.length + legendLines.length > 0) {
    const lx = MARGIN.left + innerW - 230;
    let ly = MARGIN.top + 12;
    const boxH = 16 * (legendEntries.length + legendLines.length) + 10;
    parts.push(
      `<rect x="${lx - 8}" y="${ly - 14}" width="238" height="${boxH}" ` +
      `fill="white" fill-opacity="0.85" stroke="#999"/>`,
    );
    for (const s of legendEntries) {
      parts.push(
        `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" ` +
        `stroke="${s.color}" stroke-width="${s.width ?? 1.5}"` +
        `${s.dashed ? ' stroke-dasharray="6 4"' : ''}/>`,
        `<text x="${lx + 28}" y="${ly}">${escapeXml(s.label)}</text>`,
      );
      ly += 16;
    }
    for (const line of legendLines) {
      parts.push(`<text x="${lx}" y="${ly}">${escapeXml(line)}</text>`);
      ly += 16;
    }
  }

  parts.push('</svg>');
  return parts.join('\n');
}

export function histogram(values: number[], bins: number,
                          options: ChartOptions): string {
  if (values.length === 0) {
    throw new Error('nothing to plot: empty histogram data');
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || Math.abs(hi) || 1;
  const edges = Array.from({ length: bins + 1 },
                           (_, i) => lo + (span * i) / bins);
  const counts = new Array(bins).fill(0);
  for (const v of values) {
    const idx = Math.min(bins - 1, Math.floor(((v - lo) / span) * bins));
    counts[idx] += 1;
  }

  const width = options.width ?? 720;
  const height = options.height ?? 480;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;
  const peak = Math.max(...counts);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}" ` +
    `font-family="Helvetica, Arial, sans-serif" font-size="12">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
  );
  const y0 = MARGIN.top + innerH;
  for (let i = 0; i < bins; i++) {
    const bx = MARGIN.left + (innerW * i) / bins;
    const bw = innerW / bins - 1;
    const bh = (counts[i] / peak) * innerH;
    parts.push(
      `<rect x="${bx.toFixed(2)}" y="${(y0 - bh).toFixed(2)}" ` +
      `width="${bw.toFixed(2)}" height="${bh.toFixed(2)}" ` +
      `fill="#4878a8" stroke="#2b4a6f"/>`,
    );
  }
  parts.push(
    `<g stroke="#333" fill="none">` +
    `<line x1="${MARGIN.left}" y1="${y0}" x2="${MARGIN.left + innerW}" ` +
    `y2="${y0}"/>` +
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" ` +
    `y2="${y0}"/></g>`,
  );
  for (const t of niceTicks(lo, hi, 5)) {
    const px = MARGIN.left + ((t - lo) / span) * innerW;
    parts.push(
      `<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="#333"/>`,
      `<text x="${px}" y="${y0 + 18}" text-anchor="middle">` +
      `${formatTick(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${width / 2}" y="22" text-anchor="middle" font-size="15">` +
    `${escapeXml(options.title)}</text>`,
    `<text x="${MARGIN.left + innerW / 2}" y="${height - 10}" ` +
    `text-anchor="middle">${escapeXml(options.xLabel)}</text>`,
    `<text x="16" y="${MARGIN.top + innerH / 2}" text-anchor="middle" ` +
    `transform="rotate(-90 16 ${MARGIN.top + innerH / 2})">` +
    `${escapeXml(options.yLabel)}</text>`,
    '</svg>',
  );
  return parts.join('\n');
}
