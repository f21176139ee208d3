// Raster backend: rasterise a scene and encode it as a PNG.
//
// Lines are stamped along their length; text uses a small built-in
// stroke font so the raster twin stays dependency-free.

import { deflateSync } from 'zlib';
import { Scene, Segment, TextItem } from './scene.js';

type Stroke = [number, number][];

// glyphs on a 4-wide, 6-tall grid (y down); lowercase maps to uppercase
const GLYPHS: Record<string, Stroke[]> = {
  '0': [[[0, 0], [4, 0], [4, 6], [0, 6], [0, 0]]],
  '1': [[[1, 1], [2, 0], [2, 6]], [[1, 6], [3, 6]]],
  '2': [[[0, 0], [4, 0], [4, 3], [0, 3], [0, 6], [4, 6]]],
  '3': [[[0, 0], [4, 0]], [[0, 3], [4, 3]], [[0, 6], [4, 6]], [[4, 0], [4, 6]]],
  '4': [[[0, 0], [0, 3], [4, 3]], [[3, 0], [3, 6]]],
  '5': [[[4, 0], [0, 0], [0, 3], [4, 3], [4, 6], [0, 6]]],
  '6': [[[4, 0], [0, 0], [0, 6], [4, 6], [4, 3], [0, 3]]],
  '7': [[[0, 0], [4, 0], [1, 6]]],
  '8': [[[0, 0], [4, 0], [4, 6], [0, 6], [0, 0]], [[0, 3], [4, 3]]],
  '9': [[[0, 6], [4, 6], [4, 0], [0, 0], [0, 3], [4, 3]]],
  'A': [[[0, 6], [2, 0], [4, 6]], [[1, 4], [3, 4]]],
  'B': [[[0, 0], [0, 6]], [[0, 0], [3, 0], [4, 1], [4, 2], [3, 3], [0, 3]],
        [[3, 3], [4, 4], [4, 5], [3, 6], [0, 6]]],
  'C': [[[4, 0], [0, 0], [0, 6], [4, 6]]],
  'D': [[[0, 0], [0, 6], [3, 6], [4, 4], [4, 2], [3, 0], [0, 0]]],
  'E': [[[4, 0], [0, 0], [0, 6], [4, 6]], [[0, 3], [3, 3]]],
  'F': [[[4, 0], [0, 0], [0, 6]], [[0, 3], [3, 3]]],
  'G': [[[4, 0], [0, 0], [0, 6], [4, 6], [4, 3], [2, 3]]],
  'H': [[[0, 0], [0, 6]], [[4, 0], [4, 6]], [[0, 3], [4, 3]]],
  'I': [[[2, 0], [2, 6]], [[1, 0], [3, 0]], [[1, 6], [3, 6]]],
  'J': [[[4, 0], [4, 5], [3, 6], [1, 6], [0, 5]]],
  'K': [[[0, 0], [0, 6]], [[4, 0], [0, 3], [4, 6]]],
  'L': [[[0, 0], [0, 6], [4, 6]]],
  'M': [[[0, 6], [0, 0], [2, 3], [4, 0], [4, 6]]],
  'N': [[[0, 6], [0, 0], [4, 6], [4, 0]]],
  'O': [[[0, 0], [4, 0], [4, 6], [0, 6], [0, 0]]],
  'P': [[[0, 6], [0, 0], [4, 0], [4, 3], [0, 3]]],
  'Q': [[[0, 0], [4, 0], [4, 6], [0, 6], [0, 0]], [[2, 4], [4, 6]]],
  'R': [[[0, 6], [0, 0], [4, 0], [4, 3], [0, 3]], [[2, 3], [4, 6]]],
  'S': [[[4, 0], [0, 0], [0, 3], [4, 3], [4, 6], [0, 6]]],
  'T': [[[0, 0], [4, 0]], [[2, 0], [2, 6]]],
  'U': [[[0, 0], [0, 6], [4, 6], [4, 0]]],
  'V': [[[0, 0], [2, 6], [4, 0]]],
  'W': [[[0, 0], [1, 6], [2, 3], [3, 6], [4, 0]]],
  'X': [[[0, 0], [4, 6]], [[4, 0], [0, 6]]],
  'Y': [[[0, 0], [2, 3], [4, 0]], [[2, 3], [2, 6]]],
  'Z': [[[0, 0], [4, 0], [0, 6], [4, 6]]],
  '-': [[[1, 3], [3, 3]]],
  '+': [[[2, 1], [2, 5]], [[0, 3], [4, 3]]],
  '.': [[[1.7, 5.6], [2.3, 5.6], [2.3, 6], [1.7, 6], [1.7, 5.6]]],
  ',': [[[2, 5], [1.4, 6.6]]],
  '(': [[[3, 0], [2, 2], [2, 4], [3, 6]]],
  ')': [[[1, 0], [2, 2], [2, 4], [1, 6]]],
  '=': [[[0, 2], [4, 2]], [[0, 4], [4, 4]]],
  '/': [[[0, 6], [4, 0]]],
  '^': [[[1, 2], [2, 0], [3, 2]]],
  ':': [[[2, 1.6], [2, 2.2]], [[2, 4.4], [2, 5]]],
  ' ': [],
};

function glyph(ch: string): Stroke[] {
  return GLYPHS[ch] ?? GLYPHS[ch.toUpperCase()] ?? GLYPHS['.'];
}

class Raster {
  data: Uint8Array;

  constructor(public width: number, public height: number) {
    this.data = new Uint8Array(width * height * 4).fill(255);
  }

  stamp(x: number, y: number, radius: number, rgb: [number, number, number]) {
    const r = Math.max(radius, 0.5);
    for (let py = Math.floor(y - r); py <= Math.ceil(y + r); py++) {
      if (py < 0 || py >= this.height) continue;
      for (let px = Math.floor(x - r); px <= Math.ceil(x + r); px++) {
        if (px < 0 || px >= this.width) continue;
        const dx = px - x;
        const dy = py - y;
        if (dx * dx + dy * dy > r * r) continue;
        const o = (py * this.width + px) * 4;
        this.data[o] = rgb[0];
        this.data[o + 1] = rgb[1];
        this.data[o + 2] = rgb[2];
      }
    }
  }

  line(seg: Segment) {
    const rgb = hexToRgb(seg.color);
    const len = Math.hypot(seg.x2 - seg.x1, seg.y2 - seg.y1);
    const steps = Math.max(1, Math.ceil(len / 0.4));
    const dash = seg.dash;
    const period = dash ? dash[0] + dash[1] : 0;
    for (let i = 0; i <= steps; i++) {
      const s = (i / steps) * len;
      if (dash && s % period > dash[0]) continue;
      const t = i / steps;
      this.stamp(seg.x1 + t * (seg.x2 - seg.x1), seg.y1 + t * (seg.y2 - seg.y1),
                 seg.width / 2, rgb);
    }
  }

  text(item: TextItem) {
    const scale = item.size / 8;
    const advance = 5.6 * scale;
    const width = item.text.length * advance;
    let x0 = item.x;
    if (item.anchor === 'middle') x0 -= width / 2;
    if (item.anchor === 'end') x0 -= width;
    const y0 = item.y - 6 * scale; // item.y is the baseline
    for (const ch of item.text) {
      for (const stroke of glyph(ch)) {
        for (let i = 1; i < stroke.length; i++) {
          this.line({
            x1: x0 + stroke[i - 1][0] * scale, y1: y0 + stroke[i - 1][1] * scale,
            x2: x0 + stroke[i][0] * scale, y2: y0 + stroke[i][1] * scale,
            color: item.color, width: Math.max(1, scale), dash: undefined,
          });
        }
      }
      x0 += advance;
    }
  }
}

function hexToRgb(hex: string): [number, number, number] {
  const h = hex.replace('#', '');
  return [parseInt(h.slice(0, 2), 16), parseInt(h.slice(2, 4), 16),
          parseInt(h.slice(4, 6), 16)];
}

// -- PNG encoding -----------------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, payload: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(payload.length, 0);
  head.write(type, 4, 'ascii');
  const body = Buffer.concat([Buffer.from(type, 'ascii'), Buffer.from(payload)]);
  const tail = Buffer.alloc(4);
  tail.writeUInt32BE(crc32(body), 0);
  return Buffer.concat([head, Buffer.from(payload), tail]);
}

export function encodePng(raster: Raster): Buffer {
  const { width, height, data } = raster;
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 6;   // RGBA
  const rows = Buffer.alloc(height * (width * 4 + 1));
  for (let y = 0; y < height; y++) {
    const o = y * (width * 4 + 1);
    rows[o] = 0; // filter: none
    Buffer.from(data.buffer, y * width * 4, width * 4).copy(rows, o + 1);
  }
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk('IHDR', ihdr),
    chunk('IDAT', deflateSync(rows)),
    chunk('IEND', new Uint8Array(0)),
  ]);
}

export function sceneToPng(scene: Scene): Buffer {
  const raster = new Raster(scene.width, scene.height);
  for (const seg of scene.segments) raster.line(seg);
  for (const t of scene.texts) raster.text(t);
  return encodePng(raster);
}
