import { describe, expect, it } from 'vitest';
import { ensemblePMean, leastSquares, toSignificant } from '../src/fit';

describe('leastSquares', () => {
  it('recovers an exact line', () => {
    const x = [0, 1, 2, 3, 4, 5];
    const y = x.map((v) => -0.7 * v + 2.0);
    const fit = leastSquares(x, y);
    expect(fit.slope).toBeCloseTo(-0.7, 12);
    expect(fit.intercept).toBeCloseTo(2.0, 12);
    expect(fit.rSquared).toBeCloseTo(1.0, 12);
  });

  it('recovers the rate of a sampled exponential decay', () => {
    const x = Array.from({ length: 40 }, (_, i) => 1 + i * 0.25);
    const y = x.map((t) => Math.log(3.5 * Math.exp(-1.3 * t)));
    const fit = leastSquares(x, y);
    expect(-fit.slope).toBeCloseTo(1.3, 10);
  });

  it('rejects degenerate input', () => {
    expect(() => leastSquares([1], [2])).toThrow();
    expect(() => leastSquares([1, 2, 3], [5, 5, 5])).toThrow();
  });
});

describe('ensemblePMean', () => {
  it('matches direct computation for small p', () => {
    const samples = [0.5, 1.5, 2.5];
    const direct = Math.cbrt(
      samples.map((v) => v ** 3).reduce((a, b) => a + b, 0) / 3,
    );
    expect(ensemblePMean(samples, 3)).toBeCloseTo(direct, 12);
  });

  it('handles large p on large values without overflow', () => {
    expect(ensemblePMean([1e8, 1e8], 41)).toBeCloseTo(1e8, 2);
  });

  it('returns zero for all-zero samples', () => {
    expect(ensemblePMean([0, 0], 41)).toBe(0);
  });
});

describe('toSignificant', () => {
  it('rounds to significant digits', () => {
    expect(toSignificant(0.756843, 3)).toBe('0.757');
    expect(toSignificant(1234.5, 3)).toBe('1.23e+3');
  });
});
