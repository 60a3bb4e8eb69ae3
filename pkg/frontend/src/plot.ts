import { readFileSync, writeFileSync } from 'fs';
import { byQuantity, distinct, loadRows, requireKind, seriesBySeed, Row } from './csv';
import { ensemblePMean, leastSquares, LineFit, toSignificant } from './fit';
import { histogram, lineChart, Series } from './svg';

export interface PlotSpec {
  csvPath: string;
  kind: string;
  outPath: string;
  summaryPath?: string;
  logY?: boolean;
  fitOverlay?: boolean;
}

export interface PlotResult {
  outPath: string;
  fit?: LineFit & { rate: number };
  legend: string[];
}

const SEED_COLORS = ['#9ecae1', '#a1d99b', '#bcbddc', '#fdae6b', '#bdbdbd'];
const R_COLORS = ['#1b6ca8', '#d95f02', '#2ca02c', '#7570b3', '#e7298a'];

function readSummary(path?: string): Record<string, any> {
  if (!path) return {};
  return JSON.parse(readFileSync(path, 'utf8'));
}

/** Ensemble p-mean of a per-seed curve collection at shared times. */
function pMeanCurve(groups: Map<string, Row[]>, p: number):
  { t: number[]; y: number[] } {
  const times = distinct(
    [...groups.values()].flatMap((rows) => rows.map((r) => r.t)),
  ).sort((a, b) => a - b);
  const y = times.map((t) => {
    const samples: number[] = [];
    for (const rows of groups.values()) {
      const hit = rows.find((r) => r.t === t);
      if (hit) samples.push(hit.value);
    }
    return ensemblePMean(samples, p);
  });
  return { t: times, y };
}

function plotSyncRate(spec: PlotSpec, rows: Row[]): PlotResult {
  const summary = readSummary(spec.summaryPath);
  const p: number = summary.p ?? 41;
  const window: [number, number] = summary.fit_window ?? [1, Infinity];

  const gap = byQuantity(rows, 'gap_norm');
  if (gap.length === 0) {
    throw new Error(`${spec.csvPath}: no gap_norm rows`);
  }
  const groups = seriesBySeed(gap);
  const mean = pMeanCurve(groups, p);

  const inWindow = mean.t
    .map((t, i) => ({ t, y: mean.y[i] }))
    .filter((q) => q.t >= window[0] && q.t <= window[1] && q.y > 0);
  const fit = leastSquares(inWindow.map((q) => q.t),
                           inWindow.map((q) => Math.log(q.y)));
  const rate = -fit.slope;

  const series: Series[] = [];
  let i = 0;
  for (const [, memberRows] of groups) {
    series.push({
      label: '',
      x: memberRows.map((r) => r.t),
      y: memberRows.map((r) => r.value),
      color: SEED_COLORS[i++ % SEED_COLORS.length],
      width: 0.8,
    });
  }
  series.push({
    label: `ensemble L^${p} mean`,
    x: mean.t,
    y: mean.y,
    color: '#08306b',
    width: 2.5,
  });
  if (spec.fitOverlay !== false) {
    series.push({
      label: 'exponential fit',
      x: inWindow.map((q) => q.t),
      y: inWindow.map((q) => Math.exp(fit.intercept + fit.slope * q.t)),
      color: '#c23b22',
      width: 2,
      dashed: true,
    });
  }
  const legend = [
    `decay rate = ${toSignificant(rate, 3)}`,
    `r^2 = ${toSignificant(fit.rSquared, 3)}`,
  ];
  const svg = lineChart(series, {
    title: 'Synchronization of the extremal envelope',
    xLabel: 't',
    yLabel: 'envelope gap norm',
    logY: spec.logY ?? true,
    legendLines: legend,
  });
  writeFileSync(spec.outPath, svg);
  return { outPath: spec.outPath, fit: { ...fit, rate }, legend };
}

function plotComingDown(spec: PlotSpec, rows: Row[]): PlotResult {
  const quantities = distinct(rows.map((r) => r.quantity))
    .filter((q) => q.startsWith('besov_norm_R'));
  if (quantities.length === 0) {
    throw new Error(`${spec.csvPath}: no besov_norm_R* rows`);
  }
  const series: Series[] = quantities.map((q, i) => {
    const groups = seriesBySeed(byQuantity(rows, q));
    const mean = pMeanCurve(groups, 1);
    return {
      label: `R = ${q.slice('besov_norm_R'.length)}`,
      x: mean.t,
      y: mean.y,
      color: R_COLORS[i % R_COLORS.length],
      width: 2,
    };
  });
  const svg = lineChart(series, {
    title: 'Coming down from large initial data (ensemble mean)',
    xLabel: 't',
    yLabel: 'negative-exponent norm',
    logY: spec.logY ?? true,
  });
  writeFileSync(spec.outPath, svg);
  return { outPath: spec.outPath, legend: series.map((s) => s.label) };
}

function plotPullback(spec: PlotSpec, rows: Row[]): PlotResult {
  const diffs = byQuantity(rows, 'cauchy_diff');
  if (diffs.length === 0) {
    throw new Error(`${spec.csvPath}: no cauchy_diff rows`);
  }
  const groups = seriesBySeed(diffs);
  const mean = pMeanCurve(groups, 1);
  const usable = mean.t.map((t, i) => ({ t, y: mean.y[i] }))
    .filter((q) => q.y > 0);
  const fit = leastSquares(usable.map((q) => q.t),
                           usable.map((q) => Math.log(q.y)));
  const rate = -fit.slope;

  const series: Series[] = [
    {
      label: 'mean Cauchy difference',
      x: mean.t,
      y: mean.y,
      color: '#08306b',
      width: 2.5,
    },
  ];
  if (spec.fitOverlay !== false) {
    series.push({
      label: 'exponential fit',
      x: usable.map((q) => q.t),
      y: usable.map((q) => Math.exp(fit.intercept + fit.slope * q.t)),
      color: '#c23b22',
      width: 2,
      dashed: true,
    });
  }
  const legend = [
    `decay rate = ${toSignificant(rate, 3)}`,
    `r^2 = ${toSignificant(fit.rSquared, 3)}`,
  ];
  const svg = lineChart(series, {
    title: 'Pullback Cauchy differences',
    xLabel: 'span |s|',
    yLabel: 'difference norm',
    logY: spec.logY ?? true,
    legendLines: legend,
  });
  writeFileSync(spec.outPath, svg);
  return { outPath: spec.outPath, fit: { ...fit, rate }, legend };
}

function plotOrder(spec: PlotSpec, rows: Row[]): PlotResult {
  const gaps = byQuantity(rows, 'min_gap');
  if (gaps.length === 0) {
    throw new Error(`${spec.csvPath}: no min_gap rows`);
  }
  const svg = histogram(gaps.map((r) => r.value), 24, {
    title: 'Worst pointwise order gap per coupled run',
    xLabel: 'min over time and space of (upper - lower)',
    yLabel: 'runs',
    logY: false,
  });
  writeFileSync(spec.outPath, svg);
  return { outPath: spec.outPath, legend: [`${gaps.length} runs`] };
}

const PLOTTERS: Record<string, (spec: PlotSpec, rows: Row[]) => PlotResult> = {
  sync_rate: plotSyncRate,
  coming_down: plotComingDown,
  pullback: plotPullback,
  order: plotOrder,
};

export function plot(spec: PlotSpec): PlotResult {
  const plotter = PLOTTERS[spec.kind];
  if (!plotter) {
    throw new Error(
      `unsupported experiment kind '${spec.kind}' ` +
      `(supported: ${Object.keys(PLOTTERS).join(', ')})`,
    );
  }
  const rows = requireKind(loadRows(spec.csvPath), spec.kind, spec.csvPath);
  return plotter(spec, rows);
}
