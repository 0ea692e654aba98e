// The single affine transform between image pixel space and view (screen)
// space. Every rendered box corner maps through this one transform, so
// overlays stay pixel-registered to the displayed image at any zoom.

import type { BBox } from "./types.js";

export interface Affine {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Letterbox fit: uniform scale, centered. */
export function fitTransform(
  imageW: number,
  imageH: number,
  viewW: number,
  viewH: number,
): Affine {
  const scale = Math.min(viewW / imageW, viewH / imageH);
  return {
    scale,
    offsetX: (viewW - imageW * scale) / 2,
    offsetY: (viewH - imageH * scale) / 2,
  };
}

export function zoomed(t: Affine, factor: number, pivotX: number, pivotY: number): Affine {
  // keep the view point (pivotX, pivotY) fixed while scaling
  return {
    scale: t.scale * factor,
    offsetX: pivotX - (pivotX - t.offsetX) * factor,
    offsetY: pivotY - (pivotY - t.offsetY) * factor,
  };
}

export function imageToView(t: Affine, x: number, y: number): [number, number] {
  return [x * t.scale + t.offsetX, y * t.scale + t.offsetY];
}

export function viewToImage(t: Affine, vx: number, vy: number): [number, number] {
  return [(vx - t.offsetX) / t.scale, (vy - t.offsetY) / t.scale];
}

export function boxToView(t: Affine, box: BBox): BBox {
  const [x, y] = imageToView(t, box.x, box.y);
  return { x, y, width: box.width * t.scale, height: box.height * t.scale };
}

export function viewToBox(t: Affine, viewBox: BBox): BBox {
  const [x, y] = viewToImage(t, viewBox.x, viewBox.y);
  return { x, y, width: viewBox.width / t.scale, height: viewBox.height / t.scale };
}

/** Normalize a drag from any two corners into a positive-size box. */
export function dragToBox(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): BBox {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    width: Math.abs(x1 - x0),
    height: Math.abs(y1 - y0),
  };
}
