/** Screen/image coordinate transforms and box normalization.
 *
 * The stage renders the image scaled by a zoom factor; all boxes are
 * stored in image pixels, so every pointer event goes through these
 * helpers. Round-trips stay well under a pixel for zooms in [0.25, 4].
 */

export interface Pt {
  x: number;
  y: number;
}

export interface BoxPx {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

/** Viewport state: zoom factor plus the stage's top-left screen corner. */
export interface View {
  zoom: number;
  originX: number;
  originY: number;
}

export function screenToImage(p: Pt, view: View): Pt {
  return {
    x: (p.x - view.originX) / view.zoom,
    y: (p.y - view.originY) / view.zoom,
  };
}

export function imageToScreen(p: Pt, view: View): Pt {
  return {
    x: p.x * view.zoom + view.originX,
    y: p.y * view.zoom + view.originY,
  };
}

/** Sort corners so x1 < x2 and y1 < y2. */
export function normalizeBox(a: Pt, b: Pt): BoxPx {
  return {
    x1: Math.min(a.x, b.x),
    y1: Math.min(a.y, b.y),
    x2: Math.max(a.x, b.x),
    y2: Math.max(a.y, b.y),
  };
}

/** Clamp a box to the image frame. */
export function clampBox(box: BoxPx, width: number, height: number): BoxPx {
  return {
    x1: Math.max(0, Math.min(box.x1, width)),
    y1: Math.max(0, Math.min(box.y1, height)),
    x2: Math.max(0, Math.min(box.x2, width)),
    y2: Math.max(0, Math.min(box.y2, height)),
  };
}

export const MIN_DRAG_PX = 3;

/**
 * Convert a screen-space drag to an image-space box.
 * Returns null for degenerate drags (either side shorter than
 * MIN_DRAG_PX measured on screen).
 */
export function dragToBox(
  start: Pt,
  end: Pt,
  view: View,
  imageWidth: number,
  imageHeight: number,
): BoxPx | null {
  if (
    Math.abs(end.x - start.x) < MIN_DRAG_PX ||
    Math.abs(end.y - start.y) < MIN_DRAG_PX
  ) {
    return null;
  }
  const a = screenToImage(start, view);
  const b = screenToImage(end, view);
  const box = clampBox(normalizeBox(a, b), imageWidth, imageHeight);
  if (box.x2 - box.x1 <= 0 || box.y2 - box.y1 <= 0) {
    return null;
  }
  return box;
}
