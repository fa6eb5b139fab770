import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { maskToRuns, pixelsToRuns, Point, strokePixels } from "../src/raster.js";

const fixturePath = join(
  dirname(fileURLToPath(import.meta.url)),
  "..", "..", "tests", "fixtures", "strokes_golden.json",
);

interface GoldenStroke {
  points: [number, number][];
  radius: number;
  class_id: number;
  pixels: [number, number][];
}

const golden = JSON.parse(readFileSync(fixturePath, "utf-8")) as {
  width: number;
  height: number;
  strokes: GoldenStroke[];
};

describe("strokePixels", () => {
  it("matches all 25 golden fixtures shared with the server", () => {
    expect(golden.strokes.length).toBe(25);
    for (const stroke of golden.strokes) {
      const got = strokePixels(stroke.points, stroke.radius, golden.width, golden.height);
      expect(got).toEqual(stroke.pixels);
    }
  });

  it("stamps a single disc for a one-point stroke", () => {
    const pixels = strokePixels([[10, 10]], 1, 64, 64);
    expect(pixels).toEqual([
      [10, 9],
      [9, 10],
      [10, 10],
      [11, 10],
      [10, 11],
    ]);
  });

  it("clips to the image bounds", () => {
    const pixels = strokePixels([[0, 0]], 3, 16, 16);
    expect(pixels.every(([x, y]) => x >= 0 && y >= 0)).toBe(true);
    expect(pixels).toContainEqual([0, 0]);
  });

  it("covers segments without gaps", () => {
    const pixels = strokePixels([[2, 2], [20, 17]], 1, 32, 32);
    const xs = new Set(pixels.map(([x]) => x));
    for (let x = 2; x <= 20; x++) expect(xs.has(x)).toBe(true);
  });

  it("rejects radius < 1", () => {
    expect(() => strokePixels([[1, 1]], 0, 8, 8)).toThrow(/radius/);
  });

  it("returns empty for an empty point list", () => {
    expect(strokePixels([], 3, 8, 8)).toEqual([]);
  });
});

describe("run-length encoding", () => {
  it("produces maximal runs", () => {
    const pixels: Point[] = [
      [2, 0],
      [3, 0],
      [4, 0],
      [6, 0],
      [0, 1],
    ];
    expect(pixelsToRuns(pixels)).toEqual([
      [0, 2, 3],
      [0, 6, 1],
      [1, 0, 1],
    ]);
  });

  it("splits a mask by class", () => {
    const mask = new Int32Array(4 * 2);
    mask[0] = 1;
    mask[1] = 1;
    mask[6] = 2;
    expect(maskToRuns(mask, 4, 2)).toEqual({
      1: [[0, 0, 2]],
      2: [[1, 2, 1]],
    });
  });
});
