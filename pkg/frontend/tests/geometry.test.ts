import { describe, expect, it } from "vitest";
import {
  clampBox,
  dragToBox,
  imageToScreen,
  normalizeBox,
  screenToImage,
  MIN_DRAG_PX,
} from "../src/geometry.js";
import type { Pt, View } from "../src/geometry.js";

const ZOOMS = [0.25, 0.5, 1, 1.5, 2, 3, 4];

describe("coordinate transforms", () => {
  it("round-trips screen -> image -> screen within 1px at every zoom", () => {
    for (const zoom of ZOOMS) {
      const view: View = { zoom, originX: 13, originY: 7 };
      for (let i = 0; i < 200; i += 1) {
        const p: Pt = { x: (i * 37.3) % 997, y: (i * 53.7) % 761 };
        const back = imageToScreen(screenToImage(p, view), view);
        expect(Math.abs(back.x - p.x)).toBeLessThanOrEqual(1);
        expect(Math.abs(back.y - p.y)).toBeLessThanOrEqual(1);
      }
    }
  });

  it("round-trips image -> screen -> image within 1px at zoom 2", () => {
    const view: View = { zoom: 2, originX: 0, originY: 0 };
    for (let x = 0; x <= 640; x += 7) {
      const p: Pt = { x, y: (x * 0.61) % 480 };
      const back = screenToImage(imageToScreen(p, view), view);
      expect(Math.abs(back.x - p.x)).toBeLessThanOrEqual(1);
      expect(Math.abs(back.y - p.y)).toBeLessThanOrEqual(1);
    }
  });

  it("applies zoom and origin", () => {
    const view: View = { zoom: 2, originX: 10, originY: 20 };
    expect(imageToScreen({ x: 5, y: 5 }, view)).toEqual({ x: 20, y: 30 });
    expect(screenToImage({ x: 20, y: 30 }, view)).toEqual({ x: 5, y: 5 });
  });
});

describe("normalizeBox", () => {
  it("sorts corners regardless of drag direction", () => {
    const want = { x1: 1, y1: 2, x2: 6, y2: 9 };
    expect(normalizeBox({ x: 1, y: 2 }, { x: 6, y: 9 })).toEqual(want);
    expect(normalizeBox({ x: 6, y: 9 }, { x: 1, y: 2 })).toEqual(want);
    expect(normalizeBox({ x: 6, y: 2 }, { x: 1, y: 9 })).toEqual(want);
    expect(normalizeBox({ x: 1, y: 9 }, { x: 6, y: 2 })).toEqual(want);
  });
});

describe("clampBox", () => {
  it("clips to the image frame", () => {
    expect(clampBox({ x1: -5, y1: -5, x2: 700, y2: 500 }, 640, 480)).toEqual({
      x1: 0,
      y1: 0,
      x2: 640,
      y2: 480,
    });
  });

  it("leaves interior boxes alone", () => {
    const box = { x1: 10, y1: 20, x2: 30, y2: 40 };
    expect(clampBox(box, 640, 480)).toEqual(box);
  });
});

describe("dragToBox", () => {
  const view: View = { zoom: 1, originX: 0, originY: 0 };

  it("builds a corner-sorted image-space box", () => {
    const box = dragToBox({ x: 50, y: 60 }, { x: 10, y: 20 }, view, 640, 480);
    expect(box).toEqual({ x1: 10, y1: 20, x2: 50, y2: 60 });
  });

  it("discards drags shorter than the threshold on either axis", () => {
    expect(dragToBox({ x: 10, y: 10 }, { x: 12, y: 40 }, view, 640, 480)).toBeNull();
    expect(dragToBox({ x: 10, y: 10 }, { x: 40, y: 12 }, view, 640, 480)).toBeNull();
    expect(dragToBox({ x: 10, y: 10 }, { x: 10, y: 10 }, view, 640, 480)).toBeNull();
  });

  it("measures the threshold on screen, not in image pixels", () => {
    // 4px screen drag at zoom 4 is a 1px image box: accepted, since the
    // screen gesture cleared MIN_DRAG_PX.
    expect(MIN_DRAG_PX).toBeLessThanOrEqual(4);
    const zoomed: View = { zoom: 4, originX: 0, originY: 0 };
    const box = dragToBox({ x: 0, y: 0 }, { x: 4, y: 4 }, zoomed, 640, 480);
    expect(box).toEqual({ x1: 0, y1: 0, x2: 1, y2: 1 });
  });

  it("rejects drags that clamp to nothing", () => {
    // Entirely left of the frame.
    const view2: View = { zoom: 1, originX: 100, originY: 0 };
    expect(dragToBox({ x: 0, y: 0 }, { x: 50, y: 50 }, view2, 640, 480)).toBeNull();
  });

  it("clamps a drag that leaves the frame", () => {
    const box = dragToBox({ x: 600, y: 400 }, { x: 700, y: 500 }, view, 640, 480);
    expect(box).toEqual({ x1: 600, y1: 400, x2: 640, y2: 480 });
  });
});
