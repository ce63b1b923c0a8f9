/** DOM wiring for the exemplar-box counting UI. */

import { ApiClient, ApiError } from "./api.js";
import type { CountResponse } from "./api.js";
import { dragToBox, imageToScreen } from "./geometry.js";
import type { BoxPx, Pt, View } from "./geometry.js";
import { SessionState, MAX_STEPS } from "./state.js";
import type { StoredResult } from "./state.js";

export interface AppHandles {
  state: SessionState;
  client: ApiClient;
  root: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmtCount(x: number): string {
  return x.toFixed(2);
}

function fmtLoss(x: number): string {
  return x.toExponential(3);
}

function resultCard(title: string, r: StoredResult): HTMLElement {
  const card = el("div", "result-card");
  card.appendChild(el("h3", undefined, title));
  const count = el("p", "result-count", fmtCount(r.response.count));
  count.dataset.role = "count";
  card.appendChild(count);
  const meta = el("p", "result-meta");
  meta.textContent = `${r.boxes.length} boxes, ${r.response.timing_ms.toFixed(0)} ms`;
  card.appendChild(meta);
  if (r.response.trace) {
    const t = r.response.trace;
    const init = t.initial_loss === null ? "n/a" : fmtLoss(t.initial_loss);
    const fin = t.final_loss === null ? "n/a" : fmtLoss(t.final_loss);
    const line = el(
      "p",
      "result-trace",
      `adaptation: ${init} → ${fin} over ${t.steps} steps` +
        (t.diverged ? " (diverged, kept last finite state)" : ""),
    );
    line.dataset.role = "trace";
    card.appendChild(line);
  }
  return card;
}

export function createApp(root: HTMLElement, client?: ApiClient): AppHandles {
  const state = new SessionState();
  const api = client ?? new ApiClient("");

  let zoom = 1.0;
  let heatmapOpacity = 0.5;
  let dragStart: Pt | null = null;
  let inFlight: AbortController | null = null;

  const view = (): View => ({ zoom, originX: 0, originY: 0 });

  // --- controls row ---
  const controls = el("div", "controls");

  const fileInput = el("input") as HTMLInputElement;
  fileInput.type = "file";
  fileInput.accept = "image/png,image/jpeg";
  fileInput.id = "file-input";
  controls.appendChild(fileInput);

  const zoomLabel = el("label", undefined, "zoom ");
  const zoomInput = el("input") as HTMLInputElement;
  zoomInput.type = "range";
  zoomInput.min = "0.25";
  zoomInput.max = "4";
  zoomInput.step = "0.25";
  zoomInput.value = "1";
  zoomInput.id = "zoom-input";
  const zoomValue = el("span", "zoom-value", "1.00x");
  zoomLabel.appendChild(zoomInput);
  zoomLabel.appendChild(zoomValue);
  controls.appendChild(zoomLabel);

  const adaptLabel = el("label", undefined, "adapt ");
  const adaptInput = el("input") as HTMLInputElement;
  adaptInput.type = "checkbox";
  adaptInput.id = "adapt-input";
  adaptLabel.appendChild(adaptInput);
  controls.appendChild(adaptLabel);

  const stepsLabel = el("label", undefined, "steps ");
  const stepsInput = el("input") as HTMLInputElement;
  stepsInput.type = "range";
  stepsInput.min = "0";
  stepsInput.max = String(MAX_STEPS);
  stepsInput.step = "1";
  stepsInput.value = "100";
  stepsInput.id = "steps-input";
  stepsInput.disabled = true;
  const stepsValue = el("span", "steps-value", "100");
  stepsLabel.appendChild(stepsInput);
  stepsLabel.appendChild(stepsValue);
  controls.appendChild(stepsLabel);

  const opacityLabel = el("label", undefined, "heatmap ");
  const opacityInput = el("input") as HTMLInputElement;
  opacityInput.type = "range";
  opacityInput.min = "0";
  opacityInput.max = "1";
  opacityInput.step = "0.05";
  opacityInput.value = "0.5";
  opacityInput.id = "opacity-input";
  opacityLabel.appendChild(opacityInput);
  controls.appendChild(opacityLabel);

  const runButton = el("button", undefined, "Count") as HTMLButtonElement;
  runButton.id = "run-button";
  runButton.disabled = true;
  controls.appendChild(runButton);

  const cancelButton = el("button", undefined, "Cancel") as HTMLButtonElement;
  cancelButton.id = "cancel-button";
  cancelButton.disabled = true;
  controls.appendChild(cancelButton);

  const clearButton = el("button", undefined, "Clear boxes") as HTMLButtonElement;
  clearButton.id = "clear-button";
  controls.appendChild(clearButton);

  // --- message banner ---
  const banner = el("div", "banner");
  banner.id = "banner";
  banner.hidden = true;

  // --- stage ---
  const stage = el("div", "stage");
  stage.id = "stage";
  stage.style.position = "relative";

  const photo = el("img", "photo") as HTMLImageElement;
  photo.id = "photo";
  photo.draggable = false;
  stage.appendChild(photo);

  const heatmap = el("img", "heatmap") as HTMLImageElement;
  heatmap.id = "heatmap";
  heatmap.style.position = "absolute";
  heatmap.style.left = "0";
  heatmap.style.top = "0";
  heatmap.style.pointerEvents = "none";
  heatmap.hidden = true;
  stage.appendChild(heatmap);

  const boxLayer = el("div", "box-layer");
  boxLayer.id = "box-layer";
  boxLayer.style.position = "absolute";
  boxLayer.style.left = "0";
  boxLayer.style.top = "0";
  stage.appendChild(boxLayer);

  const rubber = el("div", "rubber-band");
  rubber.style.position = "absolute";
  rubber.style.display = "none";
  rubber.style.pointerEvents = "none";
  stage.appendChild(rubber);

  // --- results panel ---
  const results = el("div", "results");
  results.id = "results";

  root.appendChild(controls);
  root.appendChild(banner);
  root.appendChild(stage);
  root.appendChild(results);

  function placeOverlay(node: HTMLElement, box: BoxPx): void {
    const v = view();
    const tl = imageToScreen({ x: box.x1, y: box.y1 }, v);
    const br = imageToScreen({ x: box.x2, y: box.y2 }, v);
    node.style.left = `${tl.x}px`;
    node.style.top = `${tl.y}px`;
    node.style.width = `${br.x - tl.x}px`;
    node.style.height = `${br.y - tl.y}px`;
  }

  function render(): void {
    const haveImage = state.imageId !== null;
    photo.style.width = `${state.imageWidth * zoom}px`;
    photo.style.height = `${state.imageHeight * zoom}px`;
    heatmap.style.width = photo.style.width;
    heatmap.style.height = photo.style.height;
    heatmap.style.opacity = String(heatmapOpacity);

    boxLayer.textContent = "";
    state.boxes.forEach((box, i) => {
      const node = el("div", "box");
      node.dataset.index = String(i);
      node.style.position = "absolute";
      placeOverlay(node, box);
      const del = el("button", "box-delete", "×") as HTMLButtonElement;
      del.title = "delete this box";
      del.addEventListener("click", (ev) => {
        ev.stopPropagation();
        state.removeBox(i);
      });
      node.appendChild(del);
      boxLayer.appendChild(node);
    });

    const heat = state.current?.response.heatmap ?? null;
    if (heat) {
      heatmap.src = `data:image/png;base64,${heat}`;
      heatmap.hidden = false;
    } else {
      heatmap.hidden = true;
    }

    banner.hidden = state.message === null;
    banner.textContent = state.message ?? "";

    runButton.disabled = !haveImage || !state.canRun || inFlight !== null;
    cancelButton.disabled = inFlight === null;
    stepsInput.disabled = !state.adapt;

    results.textContent = "";
    if (state.current) {
      results.appendChild(resultCard("latest", state.current));
    }
    if (state.previous) {
      results.appendChild(resultCard("previous", state.previous));
    }
  }

  state.subscribe(render);

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    api
      .uploadImage(file, file.name)
      .then((resp) => {
        photo.src = URL.createObjectURL(file);
        state.setImage(resp.image_id, resp.width, resp.height);
      })
      .catch((err) => {
        state.setMessage(describeError(err));
      });
  });

  zoomInput.addEventListener("input", () => {
    zoom = Number(zoomInput.value);
    zoomValue.textContent = `${zoom.toFixed(2)}x`;
    render();
  });

  adaptInput.addEventListener("change", () => {
    state.setAdapt(adaptInput.checked);
  });

  stepsInput.addEventListener("input", () => {
    stepsValue.textContent = stepsInput.value;
    state.setSteps(Number(stepsInput.value));
  });

  opacityInput.addEventListener("input", () => {
    heatmapOpacity = Number(opacityInput.value);
    heatmap.style.opacity = String(heatmapOpacity);
  });

  clearButton.addEventListener("click", () => {
    while (state.boxes.length > 0) state.removeBox(state.boxes.length - 1);
  });

  function stagePoint(ev: MouseEvent): Pt {
    const rect = stage.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  stage.addEventListener("mousedown", (ev) => {
    if (state.imageId === null) return;
    dragStart = stagePoint(ev as MouseEvent);
    rubber.style.display = "block";
    rubber.style.left = `${dragStart.x}px`;
    rubber.style.top = `${dragStart.y}px`;
    rubber.style.width = "0px";
    rubber.style.height = "0px";
  });

  stage.addEventListener("mousemove", (ev) => {
    if (!dragStart) return;
    const p = stagePoint(ev as MouseEvent);
    rubber.style.left = `${Math.min(dragStart.x, p.x)}px`;
    rubber.style.top = `${Math.min(dragStart.y, p.y)}px`;
    rubber.style.width = `${Math.abs(p.x - dragStart.x)}px`;
    rubber.style.height = `${Math.abs(p.y - dragStart.y)}px`;
  });

  stage.addEventListener("mouseup", (ev) => {
    if (!dragStart) return;
    const start = dragStart;
    dragStart = null;
    rubber.style.display = "none";
    const end = stagePoint(ev as MouseEvent);
    const box = dragToBox(start, end, view(), state.imageWidth, state.imageHeight);
    if (box === null) return; // too small a drag, not a box
    state.addBox(box);
  });

  function describeError(err: unknown): string {
    if (err instanceof ApiError) {
      return `server error ${err.status}: ${err.message}`;
    }
    if (err instanceof DOMException && err.name === "AbortError") {
      return "request cancelled";
    }
    return `request failed: ${String(err)}`;
  }

  runButton.addEventListener("click", () => {
    if (!state.canRun || state.imageId === null || inFlight !== null) return;
    // client-side mirror of the service's validation rules
    for (const b of state.boxes) {
      if (b.x1 < 0 || b.y1 < 0 || b.x2 > state.imageWidth || b.y2 > state.imageHeight) {
        state.setMessage("a box falls outside the image");
        return;
      }
      if (b.x2 <= b.x1 || b.y2 <= b.y1) {
        state.setMessage("a box has zero area");
        return;
      }
    }
    const controller = new AbortController();
    inFlight = controller;
    const boxes = state.boxes.map((b) => ({ ...b }));
    const adapt = state.adapt;
    const steps = state.steps;
    render();
    api
      .runCount(
        {
          image_id: state.imageId,
          boxes,
          adapt,
          steps,
          return_heatmap: true,
        },
        controller.signal,
      )
      .then((resp: CountResponse) => {
        inFlight = null;
        state.pushResult({ response: resp, adapt, steps, boxes });
      })
      .catch((err) => {
        inFlight = null;
        state.setMessage(describeError(err));
      });
  });

  cancelButton.addEventListener("click", () => {
    if (inFlight) {
      inFlight.abort();
      inFlight = null;
      render();
    }
  });

  render();
  return { state, client: api, root };
}
