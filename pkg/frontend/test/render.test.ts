import { beforeAll, describe, expect, it } from 'vitest';
import { existsSync, mkdirSync, readFileSync, writeFileSync, mkdtempSync } from 'fs';
import { tmpdir } from 'os';
import path from 'path';
import { loadSpec } from '../src/spec.js';
import { renderEvolution } from '../src/evolution.js';
import { renderRates } from '../src/rates.js';
import { linearScale, logScale, extent } from '../src/scale.js';
import { SERIES_HEADER } from '../src/csv.js';
import { main } from '../src/cli.js';

const REF = path.join(__dirname, '..', 'reference');

beforeAll(() => {
  mkdirSync(path.join(REF, 'out'), { recursive: true });
});

describe('scales', () => {
  it('linear scale maps the domain onto the pixel range', () => {
    const s = linearScale(0, 10, 100, 500);
    expect(s.toPixel(0)).toBe(100);
    expect(s.toPixel(10)).toBe(500);
    expect(s.ticks().length).toBeGreaterThan(3);
  });

  it('log scale places decades and rejects non-positive bounds', () => {
    const s = logScale(1e-8, 1e-2, 400, 40);
    expect(s.toPixel(1e-8)).toBe(400);
    expect(s.toPixel(1e-2)).toBe(40);
    expect(s.ticks()[0].label).toMatch(/^1e/);
    expect(() => logScale(0, 1, 0, 1)).toThrow(/positive/);
  });

  it('extent skips NaN and non-positives when asked', () => {
    expect(extent([[NaN, 3, 1]], false)).toEqual([1, 3]);
    expect(extent([[0, -1, 2, 8]], true)).toEqual([2, 8]);
    expect(() => extent([[NaN]])).toThrow(/finite/);
  });
});

describe('evolution figures', () => {
  it('renders the shipped potential-flow pair with both methods visible', () => {
    const spec = loadSpec(path.join(REF, 'evolution-spec.json'));
    const out = renderEvolution(spec);
    const svg = readFileSync(out.svg, 'utf8');
    expect(svg).toContain('<svg');
    expect(svg).toContain('grad-div-TH4');
    expect(svg).toContain('BDM4');
    // log axis spanning the >= 4-decade method separation
    const labels = [...svg.matchAll(/>1e(-?\d+)</g)].map((m) => Number(m[1]));
    expect(Math.max(...labels) - Math.min(...labels)).toBeGreaterThanOrEqual(4);
    const png = readFileSync(out.png);
    expect([...png.subarray(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
    expect(png.length).toBeGreaterThan(2000);
  });

  it('renders the lattice pair', () => {
    const spec = loadSpec(path.join(REF, 'lattice-spec.json'));
    const out = renderEvolution(spec);
    expect(existsSync(out.svg) && existsSync(out.png)).toBe(true);
  });

  it('fails loudly on an empty error column', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'flowplot-'));
    const csv = path.join(dir, 'empty.csv');
    writeFileSync(csv, `${SERIES_HEADER}\n0.0,,,,0,0,1,0,0\n0.1,,,,0,0,1,0,0\n`);
    const spec = path.join(dir, 'spec.json');
    writeFileSync(spec, JSON.stringify({
      curves: [{ csv: 'empty.csv', label: 'x' }],
      ycolumn: 'errL2', output: 'fig',
    }));
    expect(() => renderEvolution(loadSpec(spec))).toThrow(/empty/);
  });

  it('rejects duplicate labels', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'flowplot-'));
    const spec = path.join(dir, 'spec.json');
    writeFileSync(spec, JSON.stringify({
      curves: [{ csv: 'a.csv', label: 'x' }, { csv: 'b.csv', label: 'x' }],
      ycolumn: 'errL2', output: 'fig',
    }));
    expect(() => loadSpec(spec)).toThrow(/duplicate/);
  });
});

describe('rate figures', () => {
  it('renders the shipped projection study with slope triangles', () => {
    const spec = loadSpec(path.join(REF, 'rates-spec.json'));
    const out = renderRates(spec);
    const svg = readFileSync(out.svg, 'utf8');
    expect(svg).toContain('rate 3.27');
    expect(svg).toContain('>2<');   // reference slopes k and k+1
    expect(svg).toContain('>3<');
  });

  it('rejects single-row tables', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'flowplot-'));
    const csv = path.join(dir, 'one.csv');
    writeFileSync(csv, 'h,ndofs,errL2,rateL2\n0.5,10,1.0,\n');
    const spec = path.join(dir, 'spec.json');
    writeFileSync(spec, JSON.stringify({
      curves: [{ csv: 'one.csv', label: 'x' }],
      ycolumn: 'L2', output: 'fig',
    }));
    expect(() => renderRates(loadSpec(spec))).toThrow(/2 refinement levels/);
  });

  it('renders a flat table with rate annotation 0.0', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'flowplot-'));
    const csv = path.join(dir, 'flat.csv');
    writeFileSync(csv,
      'h,ndofs,errL2,rateL2\n0.4,10,0.01,\n0.2,40,0.01,0.0\n0.1,160,0.01,0.0\n');
    const spec = path.join(dir, 'spec.json');
    writeFileSync(spec, JSON.stringify({
      curves: [{ csv: 'flat.csv', label: 'flat' }],
      ycolumn: 'L2', output: 'fig',
    }));
    const out = renderRates(loadSpec(spec));
    expect(readFileSync(out.svg, 'utf8')).toContain('rate 0.00');
  });
});

describe('cli', () => {
  it('runs evolution end to end', () => {
    const rc = main(['evolution', '--spec', path.join(REF, 'evolution-spec.json')]);
    expect(rc).toBe(0);
  });

  it('runs rates end to end', () => {
    const rc = main(['rates', '--spec', path.join(REF, 'rates-spec.json')]);
    expect(rc).toBe(0);
  });

  it('rejects unknown modes', () => {
    expect(main(['scatter'])).toBe(2);
  });
});
