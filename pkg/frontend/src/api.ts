/** Typed client for the counting service endpoints. */

import type { BoxPx } from "./geometry.js";

export interface UploadResponse {
  image_id: string;
  width: number;
  height: number;
}

export interface TraceSummary {
  initial_loss: number | null;
  final_loss: number | null;
  steps: number;
  diverged: boolean;
}

export interface CountResponse {
  count: number;
  density_sum: number;
  trace: TraceSummary | null;
  heatmap: string | null;
  timing_ms: number;
}

export interface CountRequest {
  image_id: string;
  boxes: BoxPx[];
  adapt: boolean;
  steps: number;
  return_heatmap: boolean;
}

export interface HealthResponse {
  status: string;
  model_checkpoint: string | null;
  fingerprint: Record<string, unknown> | null;
}

/** HTTP failure carrying the status code and the server's detail text. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function readDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return resp.statusText || `HTTP ${resp.status}`;
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async uploadImage(file: Blob, name = "upload.png"): Promise<UploadResponse> {
    const form = new FormData();
    form.append("file", file, name);
    const resp = await fetch(`${this.baseUrl}/api/images`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) throw new ApiError(resp.status, await readDetail(resp));
    return resp.json();
  }

  async runCount(req: CountRequest, signal?: AbortSignal): Promise<CountResponse> {
    const resp = await fetch(`${this.baseUrl}/api/count`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    if (!resp.ok) throw new ApiError(resp.status, await readDetail(resp));
    return resp.json();
  }

  async health(): Promise<HealthResponse> {
    const resp = await fetch(`${this.baseUrl}/api/health`);
    if (!resp.ok) throw new ApiError(resp.status, await readDetail(resp));
    return resp.json();
  }
}
