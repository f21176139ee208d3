// Linear and logarithmic axis scales with tick generation.

export interface Scale {
  toPixel(v: number): number;
  ticks(): { value: number; label: string }[];
  domain: [number, number];
}

function niceStep(span: number, target: number): number {
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

export function linearScale(lo: number, hi: number, p0: number, p1: number): Scale {
  if (!(hi > lo)) hi = lo + 1;
  const step = niceStep(hi - lo, 6);
  const ticks: { value: number; label: string }[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12 * step; v += step) {
    ticks.push({ value: v, label: formatTick(v) });
  }
  return {
    domain: [lo, hi],
    toPixel: (v) => p0 + ((v - lo) / (hi - lo)) * (p1 - p0),
    ticks: () => ticks,
  };
}

export function logScale(lo: number, hi: number, p0: number, p1: number): Scale {
  if (!(lo > 0)) {
    throw new Error(`log scale needs positive data, got lower bound ${lo}`);
  }
  if (!(hi > lo)) hi = lo * 10;
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const decades = Math.ceil(lhi) - Math.floor(llo);
  const every = Math.max(1, Math.ceil(decades / 8));
  const ticks: { value: number; label: string }[] = [];
  for (let e = Math.ceil(llo); e <= Math.floor(lhi + 1e-12); e += every) {
    ticks.push({ value: Math.pow(10, e), label: `1e${e}` });
  }
  return {
    domain: [lo, hi],
    toPixel: (v) => p0 + ((Math.log10(v) - llo) / (lhi - llo)) * (p1 - p0),
    ticks: () => ticks,
  };
}

export function formatTick(v: number): string {
  if (v === 0) return '0';
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(0).replace('e+', 'e');
  const s = v.toPrecision(4);
  return s.includes('.') ? s.replace(/\.?0+$/, '') : s;
}

/** Finite, positive-aware extent of several arrays. */
export function extent(arrays: ArrayLike<number>[], positiveOnly = false): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const arr of arrays) {
    for (let i = 0; i < arr.length; i++) {
      const v = arr[i];
      if (!Number.isFinite(v)) continue;
      if (positiveOnly && v <= 0) continue;
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(hi >= lo)) throw new Error('no finite data to plot');
  return [lo, hi];
}
