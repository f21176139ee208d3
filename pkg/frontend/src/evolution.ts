// Error-evolution figure: one semilog-y curve per run CSV.

import { writeFileSync } from 'fs';
import { drawCurves, drawFrame, newScene, HEIGHT, MARGIN, WIDTH } from './chart.js';
import { readSeries } from './csv.js';
import { extent, linearScale, logScale } from './scale.js';
import { sceneToPng } from './png.js';
import { sceneToSvg } from './svg.js';
import { PlotSpec } from './spec.js';

export function renderEvolution(spec: PlotSpec): { svg: string; png: string } {
  const curves = spec.curves.map((c) => {
    const table = readSeries(c.csv);
    const y = table.columns.get(spec.ycolumn);
    if (!y) {
      throw new Error(`${c.csv}: no column '${spec.ycolumn}' in the series schema`);
    }
    if (![...y].some(Number.isFinite)) {
      throw new Error(
        `${c.csv}: column '${spec.ycolumn}' is empty (no exact solution attached?)`);
    }
    return { label: c.label, x: table.columns.get('t')!, y, style: c.style };
  });

  const scene = newScene();
  const [tx0, tx1] = extent(curves.map((c) => c.x));
  const xs = linearScale(tx0, tx1, MARGIN.left, WIDTH - MARGIN.right);
  const [ylo, yhi] = extent(curves.map((c) => c.y), spec.yscale === 'log');
  const ys = spec.yscale === 'log'
    ? logScale(ylo, yhi, HEIGHT - MARGIN.bottom, MARGIN.top)
    : linearScale(Math.min(ylo, 0), yhi, HEIGHT - MARGIN.bottom, MARGIN.top);
  drawFrame(scene, xs, ys, 't', spec.ycolumn, spec.title);
  drawCurves(scene, curves, xs, ys);

  const svgPath = spec.output + '.svg';
  const pngPath = spec.output + '.png';
  writeFileSync(svgPath, sceneToSvg(scene));
  writeFileSync(pngPath, sceneToPng(scene));
  return { svg: svgPath, png: pngPath };
}
