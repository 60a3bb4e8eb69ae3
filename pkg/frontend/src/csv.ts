import { readFileSync } from 'fs';
import { parse } from 'papaparse';

export interface Row {
  experiment: string;
  seed: string; // 64-bit seeds overflow doubles; keep them as labels
  t: number;
  quantity: string;
  value: number;
}

const REQUIRED = ['experiment', 'seed', 't', 'quantity', 'value'];

export function loadRows(csvPath: string): Row[] {
  const text = readFileSync(csvPath, 'utf8');
  const parsed = parse<Record<string, string>>(text.trim(), { header: true });
  if (parsed.errors.length > 0) {
    throw new Error(`${csvPath}: ${parsed.errors[0].message}`);
  }
  const fields = parsed.meta.fields ?? [];
  for (const column of REQUIRED) {
    if (!fields.includes(column)) {
      throw new Error(`${csvPath}: missing column '${column}'`);
    }
  }
  const rows = parsed.data.map((raw) => ({
    experiment: raw.experiment,
    seed: raw.seed,
    t: Number(raw.t),
    quantity: raw.quantity,
    value: Number(raw.value),
  }));
  if (rows.length === 0) {
    throw new Error(`${csvPath}: no data rows`);
  }
  return rows;
}

export function requireKind(rows: Row[], kind: string, csvPath: string): Row[] {
  const matching = rows.filter((r) => r.experiment === kind);
  if (matching.length === 0) {
    throw new Error(
      `${csvPath}: no rows for experiment '${kind}' ` +
      `(found: ${[...new Set(rows.map((r) => r.experiment))].join(', ')})`,
    );
  }
  return matching;
}

export function byQuantity(rows: Row[], quantity: string): Row[] {
  return rows.filter((r) => r.quantity === quantity);
}

/** Distinct values in first-seen order (stable across re-renders). */
export function distinct<T>(items: T[]): T[] {
  return [...new Set(items)];
}

/** Group rows by seed, each group sorted by t. */
export function seriesBySeed(rows: Row[]): Map<string, Row[]> {
  const groups = new Map<string, Row[]>();
  for (const row of rows) {
    const bucket = groups.get(row.seed);
    if (bucket) {
      bucket.push(row);
    } else {
      groups.set(row.seed, [row]);
    }
  }
  for (const bucket of groups.values()) {
    bucket.sort((a, b) => a.t - b.t);
  }
  return groups;
}
