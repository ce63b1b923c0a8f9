/** Session model: loaded image, drawn boxes, toggles, last two results. */

import type { BoxPx } from "./geometry.js";
import type { CountResponse } from "./api.js";

export const MAX_BOXES = 3;
export const MAX_STEPS = 1000;

export interface StoredResult {
  response: CountResponse;
  adapt: boolean;
  steps: number;
  boxes: BoxPx[];
}

export type StateListener = (state: SessionState) => void;

export class SessionState {
  imageId: string | null = null;
  imageWidth = 0;
  imageHeight = 0;
  boxes: BoxPx[] = [];
  adapt = false;
  steps = 100;
  current: StoredResult | null = null;
  previous: StoredResult | null = null;
  message: string | null = null;

  private listeners: StateListener[] = [];

  subscribe(fn: StateListener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this);
  }

  setImage(imageId: string, width: number, height: number): void {
    this.imageId = imageId;
    this.imageWidth = width;
    this.imageHeight = height;
    this.boxes = [];
    this.current = null;
    this.previous = null;
    this.message = null;
    this.emit();
  }

  /** Append a drawn box; a 4th box is rejected with an inline message. */
  addBox(box: BoxPx): boolean {
    if (this.boxes.length >= MAX_BOXES) {
      this.message = `at most ${MAX_BOXES} exemplar boxes; delete one first`;
      this.emit();
      return false;
    }
    this.boxes = [...this.boxes, box];
    this.message = null;
    this.emit();
    return true;
  }

  removeBox(index: number): void {
    if (index < 0 || index >= this.boxes.length) return;
    this.boxes = this.boxes.filter((_, i) => i !== index);
    this.emit();
  }

  setAdapt(on: boolean): void {
    this.adapt = on;
    this.emit();
  }

  setSteps(steps: number): void {
    this.steps = Math.max(0, Math.min(MAX_STEPS, Math.round(steps)));
    this.emit();
  }

  setMessage(text: string | null): void {
    this.message = text;
    this.emit();
  }

  /** Record a count result, keeping the prior one for comparison. */
  pushResult(result: StoredResult): void {
    this.previous = this.current;
    this.current = result;
    this.message = null;
    this.emit();
  }

  get canRun(): boolean {
    return this.imageId !== null && this.boxes.length >= 1;
  }
}
