// Shared chart frame: axes, ticks, grid, legend, curves.

import { DASHES, PALETTE, Scene, polyline } from './scene.js';
import { Scale } from './scale.js';

export const WIDTH = 760;
export const HEIGHT = 500;
export const MARGIN = { left: 78, right: 24, top: 40, bottom: 52 };

export interface Curve {
  label: string;
  x: ArrayLike<number>;
  y: ArrayLike<number>;
  style?: string;
}

export function newScene(): Scene {
  return { width: WIDTH, height: HEIGHT, segments: [], texts: [] };
}

export function drawFrame(scene: Scene, xs: Scale, ys: Scale,
                          xlabel: string, ylabel: string, title?: string): void {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  const axis = '#222222';
  const grid = '#d8d8d8';
  for (const t of xs.ticks()) {
    const px = xs.toPixel(t.value);
    scene.segments.push({ x1: px, y1: y0, x2: px, y2: y1, color: grid, width: 0.6 });
    scene.segments.push({ x1: px, y1: y0, x2: px, y2: y0 + 5, color: axis, width: 1 });
    scene.texts.push({ x: px, y: y0 + 18, text: t.label, size: 11,
                       color: axis, anchor: 'middle' });
  }
  for (const t of ys.ticks()) {
    const py = ys.toPixel(t.value);
    scene.segments.push({ x1: x0, y1: py, x2: x1, y2: py, color: grid, width: 0.6 });
    scene.segments.push({ x1: x0 - 5, y1: py, x2: x0, y2: py, color: axis, width: 1 });
    scene.texts.push({ x: x0 - 8, y: py + 4, text: t.label, size: 11,
                       color: axis, anchor: 'end' });
  }
  scene.segments.push({ x1: x0, y1: y0, x2: x1, y2: y0, color: axis, width: 1.4 });
  scene.segments.push({ x1: x0, y1: y0, x2: x0, y2: y1, color: axis, width: 1.4 });
  scene.texts.push({ x: (x0 + x1) / 2, y: HEIGHT - 14, text: xlabel, size: 13,
                     color: axis, anchor: 'middle' });
  scene.texts.push({ x: 18, y: y1 - 14, text: ylabel, size: 13,
                     color: axis, anchor: 'start' });
  if (title) {
    scene.texts.push({ x: (x0 + x1) / 2, y: 22, text: title, size: 14,
                       color: axis, anchor: 'middle' });
  }
}

/** Draw curves (NaN-aware) and a legend; returns the colors used. */
export function drawCurves(scene: Scene, curves: Curve[], xs: Scale,
                           ys: Scale): string[] {
  const colors: string[] = [];
  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    colors.push(color);
    const dash = DASHES[curve.style ?? 'solid'];
    let run: [number, number][] = [];
    for (let k = 0; k < curve.x.length; k++) {
      const vx = curve.x[k];
      const vy = curve.y[k];
      const usable = Number.isFinite(vx) && Number.isFinite(vy) &&
        !(ys.domain[0] > 0 && vy <= 0) && !(xs.domain[0] > 0 && vx <= 0);
      if (!usable) {
        if (run.length > 1) polyline(scene, run, color, 1.8, dash);
        run = [];
        continue;
      }
      run.push([xs.toPixel(vx), ys.toPixel(vy)]);
    }
    if (run.length > 1) polyline(scene, run, color, 1.8, dash);
  });
  const lx = MARGIN.left + 14;
  let ly = MARGIN.top + 14;
  curves.forEach((curve, i) => {
    const color = colors[i];
    scene.segments.push({ x1: lx, y1: ly - 4, x2: lx + 26, y2: ly - 4,
                          color, width: 2.2, dash: DASHES[curve.style ?? 'solid'] });
    scene.texts.push({ x: lx + 32, y: ly, text: curve.label, size: 12,
                       color: '#222222', anchor: 'start' });
    ly += 17;
  });
  return colors;
}
