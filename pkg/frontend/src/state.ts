/**
 * Client-side labeling state: per-image stroke lists with undo, composition
 * into a label raster in paint order, the upload payload, and the viewport
 * transform.
 */

import { maskToRuns, Point, Run, strokePixels } from "./raster.js";

export interface BrushStroke {
  classId: number;
  radius: number;
  points: Point[];
}

/** Strokes for one image; undo pops the latest stroke before submission. */
export class LabelState {
  readonly width: number;
  readonly height: number;
  readonly palette: number[];
  private strokes: BrushStroke[] = [];

  constructor(width: number, height: number, palette: number[]) {
    if (palette.some((c) => c < 1)) throw new Error("palette class ids must be >= 1");
    this.width = width;
    this.height = height;
    this.palette = [...palette];
  }

  get strokeCount(): number {
    return this.strokes.length;
  }

  /** Add a stroke; class ids outside the session palette are rejected. */
  addStroke(stroke: BrushStroke): void {
    if (!this.palette.includes(stroke.classId)) {
      throw new Error(`class ${stroke.classId} is not in the session palette`);
    }
    if (stroke.points.length === 0) return;
    this.strokes.push({ ...stroke, points: [...stroke.points] });
  }

  undo(): boolean {
    return this.strokes.pop() !== undefined;
  }

  clear(): void {
    this.strokes = [];
  }

  /** Compose strokes into a label raster; later strokes win overlaps. */
  compose(): Int32Array {
    const mask = new Int32Array(this.width * this.height);
    for (const stroke of this.strokes) {
      for (const [x, y] of strokePixels(stroke.points, stroke.radius, this.width, this.height)) {
        mask[y * this.width + x] = stroke.classId;
      }
    }
    return mask;
  }

  /** Upload payload for PUT /sessions/{id}/labels/{image}. */
  toUpload(): { width: number; height: number; classes: Record<number, Run[]> } {
    return {
      width: this.width,
      height: this.height,
      classes: maskToRuns(this.compose(), this.width, this.height),
    };
  }
}

export type OverlayMode = "none" | "labels" | "prediction";

/** Viewport and tool state for the canvas. */
export interface ViewState {
  zoom: number; // device pixels per image pixel
  panX: number; // canvas position of image pixel (0, 0)
  panY: number;
  overlay: OverlayMode;
  overlayAlpha: number;
  activeClass: number;
  brushRadius: number;
}

export function initialView(): ViewState {
  return {
    zoom: 1,
    panX: 0,
    panY: 0,
    overlay: "labels",
    overlayAlpha: 0.6,
    activeClass: 1,
    brushRadius: 4,
  };
}

/** Canvas coordinates -> continuous image coordinates. */
export function clientToImage(view: ViewState, cx: number, cy: number): Point {
  return [(cx - view.panX) / view.zoom, (cy - view.panY) / view.zoom];
}

/**
 * Zoom about a canvas anchor point. At 100% the pan is snapped to whole
 * device pixels so the raster stays pixel-aligned.
 */
export function zoomAt(view: ViewState, factor: number, cx: number, cy: number): ViewState {
  const zoom = Math.min(32, Math.max(0.125, view.zoom * factor));
  const [ix, iy] = clientToImage(view, cx, cy);
  let panX = cx - ix * zoom;
  let panY = cy - iy * zoom;
  if (zoom === 1) {
    panX = Math.round(panX);
    panY = Math.round(panY);
  }
  return { ...view, zoom, panX, panY };
}
