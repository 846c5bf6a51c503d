// Thin fetch wrapper around the scene service. Search and synthesize are
// single-flight: a newer submission aborts the one still in the air.

import {
  ClassesResponse,
  CompositionRequest,
  CropResponse,
  HealthResponse,
  SceneResponse,
  SearchResponse,
  SynthesizeResponse,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  fields: { field: string; message: string }[];

  constructor(status: number, message: string, fields: { field: string; message: string }[] = []) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

async function raiseFor(res: Response): Promise<void> {
  if (res.ok) return;
  let message = `${res.status} ${res.statusText}`;
  let fields: { field: string; message: string }[] = [];
  try {
    const body = await res.json();
    if (typeof body.detail === "string") {
      message = body.detail;
    } else if (Array.isArray(body.detail)) {
      fields = body.detail;
      message = fields.map((f) => `${f.field}: ${f.message}`).join("; ");
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(res.status, message, fields);
}

export class ApiClient {
  base: string;
  private inFlight: AbortController | null = null;

  constructor(base: string) {
    this.base = base.replace(/\/$/, "");
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    await raiseFor(res);
    return res.json() as Promise<T>;
  }

  /** POST that cancels whichever search/synthesize is still pending. */
  private async postExclusive<T>(path: string, body: unknown): Promise<T> {
    if (this.inFlight) this.inFlight.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    try {
      const res = await fetch(this.base + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal: controller.signal,
      });
      await raiseFor(res);
      return (await res.json()) as T;
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }

  health(): Promise<HealthResponse> {
    return this.getJson("/healthz");
  }

  classes(): Promise<ClassesResponse> {
    return this.getJson("/dataset/classes");
  }

  scene(sceneId: string): Promise<SceneResponse> {
    return this.getJson(`/dataset/scenes/${encodeURIComponent(sceneId)}`);
  }

  crop(ref: string): Promise<CropResponse> {
    return this.getJson(`/dataset/crops/${encodeURIComponent(ref)}`);
  }

  search(request: CompositionRequest): Promise<SearchResponse> {
    return this.postExclusive("/search", request);
  }

  synthesize(request: CompositionRequest): Promise<SynthesizeResponse> {
    return this.postExclusive("/synthesize", request);
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
