/** Canvas rendering: base image, label overlay, prediction overlay. */

import type { ViewState } from "./state.js";

/** Distinct colors for label classes 1..n (index 0 unused). */
export const CLASS_COLORS: [number, number, number][] = [
  [0, 0, 0],
  [230, 60, 60],
  [60, 120, 230],
  [60, 200, 90],
  [240, 200, 60],
  [180, 80, 220],
  [70, 210, 210],
  [240, 130, 40],
  [150, 150, 150],
];

export function classColor(classId: number): [number, number, number] {
  return CLASS_COLORS[classId % CLASS_COLORS.length];
}

/** Label raster -> RGBA image data (transparent where unlabeled). */
export function labelsToImageData(
  mask: Int32Array,
  width: number,
  height: number,
  alpha: number,
): ImageData {
  const data = new Uint8ClampedArray(width * height * 4);
  const a = Math.round(255 * alpha);
  for (let i = 0; i < mask.length; i++) {
    const c = mask[i];
    if (c === 0) continue;
    const [r, g, b] = classColor(c);
    data[i * 4] = r;
    data[i * 4 + 1] = g;
    data[i * 4 + 2] = b;
    data[i * 4 + 3] = a;
  }
  return new ImageData(data, width, height);
}

export class Renderer {
  private readonly canvas: HTMLCanvasElement;
  private readonly ctx: CanvasRenderingContext2D;
  private labelLayer: HTMLCanvasElement;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    this.labelLayer = document.createElement("canvas");
  }

  render(
    view: ViewState,
    image: HTMLImageElement | null,
    labels: Int32Array | null,
    prediction: HTMLImageElement | null,
  ): void {
    const { ctx, canvas } = this;
    ctx.save();
    ctx.fillStyle = "#202228";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.imageSmoothingEnabled = false;
    if (image) {
      ctx.setTransform(view.zoom, 0, 0, view.zoom, view.panX, view.panY);
      ctx.drawImage(image, 0, 0);
      if (view.overlay === "prediction" && prediction) {
        ctx.globalAlpha = view.overlayAlpha;
        ctx.drawImage(prediction, 0, 0);
        ctx.globalAlpha = 1;
      }
      if (view.overlay === "labels" && labels) {
        this.labelLayer.width = image.naturalWidth;
        this.labelLayer.height = image.naturalHeight;
        const layerCtx = this.labelLayer.getContext("2d");
        if (layerCtx) {
          layerCtx.putImageData(
            labelsToImageData(labels, image.naturalWidth, image.naturalHeight, view.overlayAlpha),
            0,
            0,
          );
          ctx.drawImage(this.labelLayer, 0, 0);
        }
      }
    }
    ctx.restore();
  }
}
