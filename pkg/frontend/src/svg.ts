// SVG backend: serialise a scene to a standalone vector file.

import { Scene } from './scene.js';

function esc(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

export function sceneToSvg(scene: Scene): string {
  const out: string[] = [];
  out.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" ` +
           `height="${scene.height}" viewBox="0 0 ${scene.width} ${scene.height}">`);
  out.push(`<rect width="${scene.width}" height="${scene.height}" fill="white"/>`);
  for (const s of scene.segments) {
    const dash = s.dash ? ` stroke-dasharray="${s.dash.join(' ')}"` : '';
    out.push(`<line x1="${fmt(s.x1)}" y1="${fmt(s.y1)}" x2="${fmt(s.x2)}" ` +
             `y2="${fmt(s.y2)}" stroke="${s.color}" stroke-width="${s.width}"` +
             `${dash} stroke-linecap="round"/>`);
  }
  for (const t of scene.texts) {
    const anchor = t.anchor === 'start' ? 'start' : t.anchor === 'end' ? 'end' : 'middle';
    out.push(`<text x="${fmt(t.x)}" y="${fmt(t.y)}" font-size="${t.size}" ` +
             `font-family="Helvetica, Arial, sans-serif" fill="${t.color}" ` +
             `text-anchor="${anchor}">${esc(t.text)}</text>`);
  }
  out.push('</svg>');
  return out.join('\n') + '\n';
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}
