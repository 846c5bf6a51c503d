// Scripted walk through the composer workflow against a live service.
// Drives the same state + client modules the buttons call, and inspects
// the outgoing request bodies. Needs API_BASE_URL pointing at a running
// server (see run_e2e.sh).

import { beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { glyphRasterBase64 } from "../src/glyphs.js";
import { decodeBase64, parsePgm, parsePpm } from "../src/pgm.js";
import {
  addCropObject,
  addSketchObject,
  emptyState,
  serialize,
  validate,
} from "../src/state.js";
import { CompositionRequest, SearchResponse } from "../src/types.js";

const BASE = process.env.API_BASE_URL;
const suite = BASE ? describe : describe.skip;

const sent: { url: string; body: CompositionRequest }[] = [];

suite("composer workflow", () => {
  const api = new ApiClient(BASE ?? "");
  let classes: { class_id: number; name: string }[] = [];

  beforeAll(async () => {
    const raw = globalThis.fetch;
    globalThis.fetch = ((url: RequestInfo | URL, init?: RequestInit) => {
      if (init?.method === "POST" && typeof init.body === "string") {
        sent.push({ url: String(url), body: JSON.parse(init.body) });
      }
      return raw(url, init);
    }) as typeof fetch;

    const health = await api.health();
    expect(health.status).toBe("ok");
    classes = (await api.classes()).classes;
    expect(classes.length).toBe(8);
  });

  it("walks place -> search -> drag crop -> search -> synthesize", async () => {
    const state = emptyState();

    // (1) place two glyphs from the palette
    const star = classes.find((c) => c.name === "star")!;
    const house = classes.find((c) => c.name === "house")!;
    addSketchObject(state, star.class_id, star.name, glyphRasterBase64(star.name),
                    { x0: 0.15, y0: 0.2, x1: 0.4, y1: 0.45 });
    addSketchObject(state, house.class_id, house.name, glyphRasterBase64(house.name),
                    { x0: 0.55, y0: 0.5, x1: 0.85, y1: 0.85 });
    expect(validate(state)).toBeNull();

    // (2) search returns k ranked results
    const k = 5;
    const found: SearchResponse = await api.search(serialize(state, k));
    expect(found.results.length).toBe(k);
    const dists = found.results.map((r) => r.distance);
    expect([...dists].sort((a, b) => a - b)).toEqual(dists);
    for (const r of found.results) {
      expect(r.crops.length).toBe(r.class_ids.length);
    }

    // (3) drag a crop from the top result into the composition
    const top = found.results[0];
    const slot = top.class_ids.findIndex((c) => c === star.class_id);
    const idx = slot >= 0 ? slot : 0;
    const cropRef = top.crops[idx];
    const crop = await api.crop(cropRef);
    expect(crop.domain).toBe("photo");
    addCropObject(state, cropRef, crop.class_id,
                  classes[crop.class_id].name,
                  { x0: 0.1, y0: 0.6, x1: 0.35, y1: 0.9 });

    // (4) the next search body carries the photo-domain crop reference
    sent.length = 0;
    const mixed = await api.search(serialize(state, k));
    expect(mixed.results.length).toBe(k);
    expect(sent).toHaveLength(1);
    const body = sent[0].body;
    expect(sent[0].url).toContain("/search");
    const carried = body.objects.find((o) => o.crop_ref === cropRef);
    expect(carried).toBeDefined();
    expect(carried!.domain).toBe("photo");
    expect(carried!.raster).toBeUndefined();

    // (5) synthesize renders a layout image
    const out = await api.synthesize(serialize(state));
    expect(out.boxes.length).toBe(state.objects.length);
    const layout = parsePgm(decodeBase64(out.layout_pgm));
    expect(layout.width).toBe(64);
    expect(layout.height).toBe(64);
    expect([...new Set(layout.pixels)].every((v) => v >= 0 && v <= 9)).toBe(true);
    const preview = parsePpm(decodeBase64(out.layout_ppm));
    expect(preview.width).toBe(64);
    expect(preview.pixels.length).toBe(64 * 64 * 3);
  });

  it("keeps every displayed number service-sourced", async () => {
    // the UI renders distances, boxes, and layouts straight off these
    // payloads; this checks the payloads actually carry them
    const state = emptyState();
    addSketchObject(state, 0, "circle", glyphRasterBase64("circle"),
                    { x0: 0.3, y0: 0.3, x1: 0.6, y1: 0.6 });
    const resp = await api.search(serialize(state, 3));
    for (const r of resp.results) {
      expect(typeof r.distance).toBe("number");
      expect(r.boxes.length).toBe(r.class_ids.length);
    }
    expect(resp.checkpoint.length).toBeGreaterThan(0);
  });

  it("empty compositions are blocked client-side", () => {
    const state = emptyState();
    expect(validate(state)).toMatch(/at least one/);
    expect(() => serialize(state)).toThrow();
    expect(sent.filter((s) => s.body.objects?.length === 0)).toHaveLength(0);
  });
});
