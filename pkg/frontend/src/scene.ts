// Resolution-independent scene: the plot layout both backends render.

export interface Segment {
  x1: number; y1: number; x2: number; y2: number;
  color: string;
  width: number;
  dash?: number[];
}

export interface TextItem {
  x: number; y: number;
  text: string;
  size: number;
  color: string;
  anchor: 'start' | 'middle' | 'end';
}

export interface Scene {
  width: number;
  height: number;
  segments: Segment[];
  texts: TextItem[];
}

export const PALETTE = ['#1f6fb4', '#d0541b', '#2f8c43', '#353535',
                        '#9552b0', '#b01f3c'];

export const DASHES: Record<string, number[] | undefined> = {
  solid: undefined,
  dashed: [8, 5],
  dotted: [2, 4],
};

export function polyline(scene: Scene, pts: [number, number][], color: string,
                         width: number, dash?: number[]): void {
  for (let i = 1; i < pts.length; i++) {
    scene.segments.push({
      x1: pts[i - 1][0], y1: pts[i - 1][1], x2: pts[i][0], y2: pts[i][1],
      color, width, dash,
    });
  }
}
