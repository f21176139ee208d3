// Readers for the solver's CSV outputs.

import { readFileSync } from 'fs';

/** Column order of every time-series CSV the solver writes. */
export const SERIES_HEADER =
  't,errL2,errH1broken,errEnergy,divL2,divLinf,kinetic,dissipation,upwind';

export interface SeriesTable {
  /** column name -> values; empty CSV fields become NaN */
  columns: Map<string, Float64Array>;
  rows: number;
}

export interface RateTable {
  header: string[];
  /** column name -> values (NaN for blank cells) */
  columns: Map<string, Float64Array>;
  rows: number;
}

function parseNumeric(lines: string[], header: string[], path: string) {
  const columns = new Map<string, Float64Array>();
  const rows = lines.length;
  header.forEach((name, j) => {
    const col = new Float64Array(rows);
    for (let i = 0; i < rows; i++) {
      const cells = lines[i].split(',');
      if (cells.length !== header.length) {
        throw new Error(
          `${path}: row ${i + 2} has ${cells.length} fields, expected ${header.length}`);
      }
      col[i] = cells[j] === '' ? NaN : Number(cells[j]);
      if (cells[j] !== '' && !Number.isFinite(col[i]) && cells[j] !== 'inf') {
        throw new Error(`${path}: row ${i + 2}, column ${name}: bad number ${cells[j]}`);
      }
    }
    columns.set(name, col);
  });
  return columns;
}

/** Load a time-series CSV, enforcing the solver's exact schema. */
export function readSeries(path: string): SeriesTable {
  const text = readFileSync(path, 'utf8');
  const lines = text.trim().split('\n');
  if (lines[0] !== SERIES_HEADER) {
    throw new Error(`${path}: header does not match the series schema`);
  }
  const header = lines[0].split(',');
  return { columns: parseNumeric(lines.slice(1), header, path), rows: lines.length - 1 };
}

/** Load a rate-table CSV (h, ndofs, then err/rate column pairs). */
export function readRates(path: string): RateTable {
  const text = readFileSync(path, 'utf8');
  const lines = text.trim().split('\n');
  const header = lines[0].split(',');
  if (header[0] !== 'h' || header[1] !== 'ndofs') {
    throw new Error(`${path}: not a rate table (header must start with h,ndofs)`);
  }
  return {
    header,
    columns: parseNumeric(lines.slice(1), header, path),
    rows: lines.length - 1,
  };
}
