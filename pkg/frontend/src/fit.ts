export interface LineFit {
  slope: number;
  intercept: number;
  rSquared: number;
}

export function leastSquares(x: number[], y: number[]): LineFit {
  if (x.length !== y.length || x.length < 2) {
    throw new Error(`need at least two points, got ${x.length}`);
  }
  const n = x.length;
  const meanX = x.reduce((a, b) => a + b, 0) / n;
  const meanY = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - meanX) ** 2;
    sxy += (x[i] - meanX) * (y[i] - meanY);
    syy += (y[i] - meanY) ** 2;
  }
  if (sxx === 0 || syy === 0) {
    throw new Error('degenerate fit: x or y has zero variance');
  }
  const slope = sxy / sxx;
  const intercept = meanY - slope * meanX;
  let ssRes = 0;
  for (let i = 0; i < n; i++) {
    ssRes += (y[i] - slope * x[i] - intercept) ** 2;
  }
  return { slope, intercept, rSquared: 1 - ssRes / syy };
}

/**
 * (mean over members of x^p)^(1/p), evaluated in the log domain so large p
 * does not overflow; mirrors the aggregation used by the simulation side.
 */
export function ensemblePMean(samples: number[], p: number): number {
  if (samples.length === 0) {
    throw new Error('empty sample');
  }
  const logs = samples.map((v) => Math.log(v));
  const peak = Math.max(...logs);
  if (!isFinite(peak)) {
    return 0;
  }
  const mean =
    samples.map((_, i) => Math.exp(p * (logs[i] - peak)))
      .reduce((a, b) => a + b, 0) / samples.length;
  return Math.exp(peak + Math.log(mean) / p);
}

/** Round to a given number of significant digits (legend printing). */
export function toSignificant(value: number, digits: number): string {
  return value.toPrecision(digits);
}
