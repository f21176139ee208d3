// Plot specification: what to draw, from which CSVs, to which file.

import { readFileSync } from 'fs';
import path from 'path';

export type LineStyle = 'solid' | 'dashed' | 'dotted';

export interface CurveSpec {
  csv: string;
  label: string;
  style?: LineStyle;
}

export interface PlotSpec {
  curves: CurveSpec[];
  /** y column for evolution plots / error column for rate plots */
  ycolumn: string;
  yscale: 'log' | 'linear';
  xscale?: 'log' | 'linear';
  /** output path without extension; .svg and .png twins are written */
  output: string;
  title?: string;
  /** polynomial order for the reference-slope triangles of rate plots */
  order?: number;
}

const STYLES: LineStyle[] = ['solid', 'dashed', 'dotted'];

/** Read and validate a plot-spec JSON file; relative CSV paths resolve
 *  against the spec file's directory. */
export function loadSpec(specPath: string): PlotSpec {
  const raw = JSON.parse(readFileSync(specPath, 'utf8'));
  if (!Array.isArray(raw.curves) || raw.curves.length === 0) {
    throw new Error(`${specPath}: curves must be a non-empty list`);
  }
  const base = path.dirname(path.resolve(specPath));
  const labels = new Set<string>();
  const curves: CurveSpec[] = raw.curves.map((c: any, i: number) => {
    if (typeof c.csv !== 'string' || typeof c.label !== 'string') {
      throw new Error(`${specPath}: curve ${i} needs csv and label fields`);
    }
    if (labels.has(c.label)) {
      throw new Error(`${specPath}: duplicate curve label '${c.label}'`);
    }
    labels.add(c.label);
    if (c.style !== undefined && !STYLES.includes(c.style)) {
      throw new Error(`${specPath}: curve ${i} has unknown style '${c.style}'`);
    }
    return {
      csv: path.isAbsolute(c.csv) ? c.csv : path.join(base, c.csv),
      label: c.label,
      style: c.style,
    };
  });
  const yscale = raw.yscale ?? 'log';
  if (yscale !== 'log' && yscale !== 'linear') {
    throw new Error(`${specPath}: yscale must be 'log' or 'linear'`);
  }
  if (typeof raw.ycolumn !== 'string' || typeof raw.output !== 'string') {
    throw new Error(`${specPath}: ycolumn and output are required`);
  }
  return {
    curves,
    ycolumn: raw.ycolumn,
    yscale,
    xscale: raw.xscale,
    output: path.isAbsolute(raw.output) ? raw.output : path.join(base, raw.output),
    title: raw.title,
    order: raw.order,
  };
}
