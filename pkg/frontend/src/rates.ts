// Convergence figure: log-log error vs h with reference-slope triangles.

import { writeFileSync } from 'fs';
import { drawCurves, drawFrame, newScene, HEIGHT, MARGIN, WIDTH } from './chart.js';
import { readRates } from './csv.js';
import { extent, logScale } from './scale.js';
import { polyline, Scene } from './scene.js';
import { sceneToPng } from './png.js';
import { sceneToSvg } from './svg.js';
import { PlotSpec } from './spec.js';
import { Scale } from './scale.js';

function slopeTriangle(scene: Scene, xs: Scale, ys: Scale, h0: number,
                       e0: number, slope: number): void {
  // anchored at (h0, e0), spanning one halving of h
  const h1 = h0 / 2;
  const e1 = e0 * Math.pow(h1 / h0, slope);
  const pts: [number, number][] = [
    [xs.toPixel(h0), ys.toPixel(e0)],
    [xs.toPixel(h1), ys.toPixel(e1)],
    [xs.toPixel(h0), ys.toPixel(e1)],
    [xs.toPixel(h0), ys.toPixel(e0)],
  ];
  polyline(scene, pts, '#777777', 1.1);
  scene.texts.push({
    x: xs.toPixel(h0) + 8, y: (ys.toPixel(e0) + ys.toPixel(e1)) / 2 + 4,
    text: String(slope), size: 11, color: '#777777', anchor: 'start',
  });
}

export function renderRates(spec: PlotSpec): { svg: string; png: string } {
  const curves = spec.curves.map((c) => {
    const table = readRates(c.csv);
    if (table.rows < 2) {
      throw new Error(`${c.csv}: a rate plot needs at least 2 refinement levels`);
    }
    const errCol = spec.ycolumn.startsWith('err') ? spec.ycolumn : `err${spec.ycolumn}`;
    const y = table.columns.get(errCol) ?? table.columns.get(spec.ycolumn);
    if (!y) {
      throw new Error(`${c.csv}: no error column '${spec.ycolumn}'`);
    }
    const rateName = errCol.replace(/^err/, 'rate');
    const rates = table.columns.get(rateName);
    const observed = rates ? rates[table.rows - 1] : NaN;
    const label = Number.isFinite(observed)
      ? `${c.label} (rate ${observed.toFixed(2)})`
      : `${c.label} (rate 0.0)`;
    return { label, x: table.columns.get('h')!, y, style: c.style };
  });

  const scene = newScene();
  const [hx0, hx1] = extent(curves.map((c) => c.x), true);
  const xs = logScale(hx0 / 1.3, hx1 * 1.3, MARGIN.left, WIDTH - MARGIN.right);
  let [ylo, yhi] = extent(curves.map((c) => c.y), true);
  if (ylo === yhi) {
    ylo /= 10;
    yhi *= 10;
  }
  const ys = logScale(ylo / 2, yhi * 2, HEIGHT - MARGIN.bottom, MARGIN.top);
  drawFrame(scene, xs, ys, 'h', spec.ycolumn, spec.title);
  drawCurves(scene, curves, xs, ys);
  if (spec.order !== undefined) {
    const anchorY = Math.sqrt(ylo * yhi);
    slopeTriangle(scene, xs, ys, hx1, anchorY, spec.order);
    slopeTriangle(scene, xs, ys, hx1, anchorY, spec.order + 1);
  }

  const svgPath = spec.output + '.svg';
  const pngPath = spec.output + '.png';
  writeFileSync(svgPath, sceneToSvg(scene));
  writeFileSync(pngPath, sceneToPng(scene));
  return { svg: svgPath, png: pngPath };
}
