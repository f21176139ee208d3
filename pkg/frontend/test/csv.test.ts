import { describe, expect, it } from 'vitest';
import { mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import path from 'path';
import { readRates, readSeries, SERIES_HEADER } from '../src/csv.js';

const REF = path.join(__dirname, '..', 'reference');

function tmpCsv(content: string): string {
  const dir = mkdtempSync(path.join(tmpdir(), 'flowplot-'));
  const p = path.join(dir, 'x.csv');
  writeFileSync(p, content);
  return p;
}

describe('readSeries', () => {
  it('loads a shipped run and keeps the column order', () => {
    const t = readSeries(path.join(REF, 'potential-BDM4.csv'));
    expect(t.rows).toBe(1001);
    expect([...t.columns.keys()]).toEqual(SERIES_HEADER.split(','));
    const time = t.columns.get('t')!;
    expect(time[0]).toBe(0);
    expect(time[t.rows - 1]).toBeCloseTo(1.0, 9);
  });

  it('maps empty fields to NaN', () => {
    const p = tmpCsv(`${SERIES_HEADER}\n0.0,,,,0,0,1,0,0\n`);
    const t = readSeries(p);
    expect(Number.isNaN(t.columns.get('errL2')![0])).toBe(true);
    expect(t.columns.get('kinetic')![0]).toBe(1);
  });

  it('rejects a wrong header', () => {
    const p = tmpCsv('t,errL2\n0,1\n');
    expect(() => readSeries(p)).toThrow(/schema/);
  });

  it('rejects ragged rows', () => {
    const p = tmpCsv(`${SERIES_HEADER}\n0.0,1\n`);
    expect(() => readSeries(p)).toThrow(/fields/);
  });
});

describe('readRates', () => {
  it('loads the shipped projection study', () => {
    const t = readRates(path.join(REF, 'project-BDM2.csv'));
    expect(t.rows).toBe(3);
    expect(t.header[0]).toBe('h');
    const h = t.columns.get('h')!;
    expect(h[0] / h[1]).toBeCloseTo(2, 6);
    // first rate cell is blank
    expect(Number.isNaN(t.columns.get('rateL2')![0])).toBe(true);
    expect(t.columns.get('rateL2')![2]).toBeGreaterThan(2.8);
  });

  it('rejects non-rate tables', () => {
    const p = tmpCsv('a,b\n1,2\n');
    expect(() => readRates(p)).toThrow(/rate table/);
  });
});
