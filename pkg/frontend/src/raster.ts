/**
 * Brush-stroke rasterization, the client side of the shared stamp rule.
 *
 * The server implements the identical rule, so both sides produce the same
 * pixel set for a recorded stroke: sample each segment every 0.5 px, snap
 * each sample with round-half-up (Math.floor(v + 0.5)), stamp an integer
 * disc (dx^2 + dy^2 <= r^2), clip to bounds. Everything is exact in
 * float64, so the implementations agree bit-for-bit.
 */

export type Point = [number, number];
/** Run-length triple: [row, start, length]. */
export type Run = [number, number, number];

const STEP = 0.5;

function snap(v: number): number {
  return Math.floor(v + 0.5);
}

/** Pixels covered by a polyline stroke, sorted row-major and clipped. */
export function strokePixels(
  points: Point[],
  radius: number,
  width: number,
  height: number,
): Point[] {
  if (radius < 1) throw new Error(`radius must be >= 1, got ${radius}`);
  if (points.length === 0) return [];
  const centers: Point[] = [[snap(points[0][0]), snap(points[0][1])]];
  for (let i = 1; i < points.length; i++) {
    const [x0, y0] = points[i - 1];
    const [x1, y1] = points[i];
    const dist = Math.hypot(x1 - x0, y1 - y0);
    const n = Math.max(1, Math.ceil(dist / STEP));
    for (let k = 1; k <= n; k++) {
      const t = k / n;
      centers.push([snap(x0 + (x1 - x0) * t), snap(y0 + (y1 - y0) * t)]);
    }
  }
  const r2 = radius * radius;
  const seen = new Set<number>();
  for (const [cx, cy] of centers) {
    for (let dy = -radius; dy <= radius; dy++) {
      const yy = cy + dy;
      if (yy < 0 || yy >= height) continue;
      for (let dx = -radius; dx <= radius; dx++) {
        const xx = cx + dx;
        if (xx < 0 || xx >= width) continue;
        if (dx * dx + dy * dy <= r2) seen.add(yy * width + xx);
      }
    }
  }
  return [...seen]
    .sort((a, b) => a - b)
    .map((flat) => [flat % width, Math.floor(flat / width)]);
}

/** Row-major pixels -> maximal run-length triples. */
export function pixelsToRuns(pixels: Point[]): Run[] {
  const runs: Run[] = [];
  for (const [x, y] of pixels) {
    const last = runs[runs.length - 1];
    if (last && last[0] === y && last[1] + last[2] === x) {
      last[2] += 1;
    } else {
      runs.push([y, x, 1]);
    }
  }
  return runs;
}

/** Label raster -> per-class run-length triples (the upload wire format). */
export function maskToRuns(
  mask: Int32Array,
  width: number,
  height: number,
): Record<number, Run[]> {
  const byClass = new Map<number, Point[]>();
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const c = mask[y * width + x];
      if (c === 0) continue;
      let bucket = byClass.get(c);
      if (!bucket) byClass.set(c, (bucket = []));
      bucket.push([x, y]);
    }
  }
  const out: Record<number, Run[]> = {};
  for (const [c, pixels] of byClass) out[c] = pixelsToRuns(pixels);
  return out;
}
