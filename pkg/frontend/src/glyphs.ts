// Client-side palette glyphs. The dataset's sketch domain is stroke
// drawings; the palette stands in for freehand input with one canonical
// polyline set per class, rasterized to the 32x32 crops the API expects.

import { encodePgm, encodeBase64, GrayImage } from "./pgm.js";

export type Polyline = [number, number][]; // unit-square points

function ring(n: number, r: number, cx = 0.5, cy = 0.5, phase = -Math.PI / 2): Polyline {
  const pts: Polyline = [];
  for (let i = 0; i <= n; i++) {
    const a = phase + (2 * Math.PI * i) / n;
    pts.push([cx + r * Math.cos(a), cy + r * Math.sin(a)]);
  }
  return pts;
}

const SHAPES: Record<string, Polyline[]> = {
  circle: [ring(24, 0.42)],
  triangle: [[[0.5, 0.08], [0.92, 0.9], [0.08, 0.9], [0.5, 0.08]]],
  house: [
    [[0.15, 0.5], [0.5, 0.12], [0.85, 0.5], [0.85, 0.92], [0.15, 0.92], [0.15, 0.5]],
    [[0.15, 0.5], [0.85, 0.5]],
  ],
  tree: [
    [[0.5, 0.05], [0.85, 0.6], [0.15, 0.6], [0.5, 0.05]],
    [[0.42, 0.6], [0.42, 0.95], [0.58, 0.95], [0.58, 0.6]],
  ],
  star: (() => {
    const pts: Polyline = [];
    for (let i = 0; i <= 10; i++) {
      const a = -Math.PI / 2 + (Math.PI * i) / 5;
      const r = i % 2 === 0 ? 0.45 : 0.18;
      pts.push([0.5 + r * Math.cos(a), 0.5 + r * Math.sin(a)]);
    }
    return [pts];
  })(),
  cross: [[
    [0.35, 0.08], [0.65, 0.08], [0.65, 0.35], [0.92, 0.35], [0.92, 0.65],
    [0.65, 0.65], [0.65, 0.92], [0.35, 0.92], [0.35, 0.65], [0.08, 0.65],
    [0.08, 0.35], [0.35, 0.35], [0.35, 0.08],
  ]],
  arrow: [[
    [0.05, 0.38], [0.6, 0.38], [0.6, 0.15], [0.95, 0.5], [0.6, 0.85],
    [0.6, 0.62], [0.05, 0.62], [0.05, 0.38],
  ]],
  ring: [ring(24, 0.42), ring(24, 0.22)],
};

export function glyphShape(name: string): Polyline[] {
  const lines = SHAPES[name];
  if (lines) return lines;
  // Unknown class names still get a drawable placeholder.
  return [[[0.1, 0.1], [0.9, 0.1], [0.9, 0.9], [0.1, 0.9], [0.1, 0.1]]];
}

function drawLine(img: GrayImage, x0: number, y0: number, x1: number, y1: number): void {
  // Bresenham, ink = 255.
  let ax = Math.round(x0);
  let ay = Math.round(y0);
  const bx = Math.round(x1);
  const by = Math.round(y1);
  const dx = Math.abs(bx - ax);
  const dy = -Math.abs(by - ay);
  const sx = ax < bx ? 1 : -1;
  const sy = ay < by ? 1 : -1;
  let err = dx + dy;
  for (;;) {
    if (ax >= 0 && ax < img.width && ay >= 0 && ay < img.height) {
      img.pixels[ay * img.width + ax] = 255;
    }
    if (ax === bx && ay === by) break;
    const e2 = 2 * err;
    if (e2 >= dy) { err += dy; ax += sx; }
    if (e2 <= dx) { err += dx; ay += sy; }
  }
}

export function rasterizeGlyph(name: string, size = 32): GrayImage {
  const img: GrayImage = { width: size, height: size, pixels: new Uint8Array(size * size) };
  const scale = size - 1;
  for (const line of glyphShape(name)) {
    for (let i = 1; i < line.length; i++) {
      drawLine(img, line[i - 1][0] * scale, line[i - 1][1] * scale,
               line[i][0] * scale, line[i][1] * scale);
    }
  }
  return img;
}

export function glyphRasterBase64(name: string): string {
  return encodeBase64(encodePgm(rasterizeGlyph(name)));
}
