import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, ApiError, isAbort } from "../src/api.js";
import { CompositionRequest } from "../src/types.js";

const REQ: CompositionRequest = {
  objects: [{ class_id: 0, domain: "sketch", bbox: [0.1, 0.1, 0.3, 0.3], raster: "UDU=" }],
};

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => vi.unstubAllGlobals());

describe("api client", () => {
  it("a newer search aborts the one in flight", async () => {
    const signals: AbortSignal[] = [];
    let call = 0;
    vi.stubGlobal("fetch", (_url: string, init: RequestInit) => {
      signals.push(init.signal as AbortSignal);
      const mine = ++call;
      return new Promise<Response>((resolve, reject) => {
        (init.signal as AbortSignal).addEventListener("abort", () =>
          reject(new DOMException("aborted", "AbortError")));
        if (mine === 2) resolve(jsonResponse(200, { results: [], checkpoint: "x" }));
      });
    });

    const client = new ApiClient("http://service");
    const first = client.search(REQ);
    const second = client.search(REQ);

    await expect(second).resolves.toEqual({ results: [], checkpoint: "x" });
    await expect(first).rejects.toSatisfy(isAbort);
    expect(signals[0].aborted).toBe(true);
    expect(signals[1].aborted).toBe(false);
  });

  it("search and synthesize share the single-flight slot", async () => {
    const signals: AbortSignal[] = [];
    vi.stubGlobal("fetch", (_url: string, init: RequestInit) => {
      signals.push(init.signal as AbortSignal);
      return new Promise<Response>((resolve, reject) => {
        (init.signal as AbortSignal).addEventListener("abort", () =>
          reject(new DOMException("aborted", "AbortError")));
        if (signals.length === 2) {
          resolve(jsonResponse(200, { boxes: [], class_ids: [], layout_pgm: "",
                                      layout_ppm: "", checkpoint: "x" }));
        }
      });
    });

    const client = new ApiClient("http://service");
    const search = client.search(REQ);
    await client.synthesize(REQ);
    await expect(search).rejects.toSatisfy(isAbort);
  });

  it("surfaces validation errors with field paths", async () => {
    vi.stubGlobal("fetch", async () =>
      jsonResponse(400, { detail: [{ field: "objects.0.bbox", message: "must be normalized" }] }));
    const client = new ApiClient("http://service");
    const err = await client.search(REQ).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.fields[0].field).toBe("objects.0.bbox");
    expect(err.message).toContain("objects.0.bbox");
  });

  it("surfaces plain detail strings (503 before load)", async () => {
    vi.stubGlobal("fetch", async () => jsonResponse(503, { detail: "model not loaded" }));
    const client = new ApiClient("http://service");
    const err = await client.health().catch((e) => e);
    expect(err.status).toBe(503);
    expect(err.message).toBe("model not loaded");
  });

  it("strips trailing slashes from the base url", async () => {
    const urls: string[] = [];
    vi.stubGlobal("fetch", async (url: string) => {
      urls.push(url);
      return jsonResponse(200, { status: "ok" });
    });
    await new ApiClient("http://service:8008/").health();
    expect(urls[0]).toBe("http://service:8008/healthz");
  });
});
