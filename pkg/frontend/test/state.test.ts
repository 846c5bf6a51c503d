import { describe, expect, it } from "vitest";
import { decodeBase64, flipHorizontal, parsePgm } from "../src/pgm.js";
import { glyphRasterBase64 } from "../src/glyphs.js";
import {
  addCropObject,
  addSketchObject,
  emptyState,
  flipObject,
  gridCell,
  moveObject,
  resizeObject,
  serialize,
  validate,
} from "../src/state.js";

const STAR = glyphRasterBase64("star");

describe("composer state", () => {
  it("serialization preserves classes, domains, and boxes to 3 decimals", () => {
    const state = emptyState();
    addSketchObject(state, 4, "star", STAR, { x0: 0.12345, y0: 0.2, x1: 0.45678, y1: 0.5 });
    addCropObject(state, "ph-000123:2", 1, "triangle", { x0: 0.6, y0: 0.6, x1: 0.9, y1: 0.9 });
    const req = serialize(state, 5);

    expect(req.objects).toHaveLength(2);
    expect(req.k).toBe(5);
    const [sketch, crop] = req.objects;
    expect(sketch.class_id).toBe(4);
    expect(sketch.domain).toBe("sketch");
    expect(sketch.raster).toBe(STAR);
    expect(sketch.crop_ref).toBeUndefined();
    expect(sketch.bbox[0]).toBeCloseTo(0.123, 3);
    expect(sketch.bbox[2]).toBeCloseTo(0.457, 3);
    for (const v of sketch.bbox) expect(v).toBe(Math.round(v * 1000) / 1000);

    expect(crop.domain).toBe("photo");
    expect(crop.crop_ref).toBe("ph-000123:2");
    expect(crop.raster).toBeUndefined();
  });

  it("round trips boxes within half a thousandth", () => {
    const state = emptyState();
    const box = { x0: 0.111111, y0: 0.222222, x1: 0.777777, y1: 0.888888 };
    addSketchObject(state, 0, "circle", STAR, box);
    const [spec] = serialize(state).objects;
    expect(Math.abs(spec.bbox[0] - box.x0)).toBeLessThan(5e-4);
    expect(Math.abs(spec.bbox[1] - box.y0)).toBeLessThan(5e-4);
    expect(Math.abs(spec.bbox[2] - box.x1)).toBeLessThan(5e-4);
    expect(Math.abs(spec.bbox[3] - box.y1)).toBeLessThan(5e-4);
  });

  it("blocks empty and oversized compositions", () => {
    const state = emptyState();
    expect(validate(state)).toMatch(/at least one/);
    expect(() => serialize(state)).toThrow(/at least one/);
    for (let i = 0; i < 9; i++) {
      addSketchObject(state, 0, "circle", STAR, { x0: 0.1, y0: 0.1, x1: 0.3, y1: 0.3 });
    }
    expect(validate(state)).toMatch(/at most 8/);
  });

  it("valid compositions pass", () => {
    const state = emptyState();
    addSketchObject(state, 2, "house", STAR, { x0: 0.1, y0: 0.1, x1: 0.4, y1: 0.4 });
    expect(validate(state)).toBeNull();
  });

  it("flip swaps the serialized raster and double flip restores it", () => {
    const state = emptyState();
    const obj = addSketchObject(state, 6, "arrow", glyphRasterBase64("arrow"),
                                { x0: 0.2, y0: 0.2, x1: 0.5, y1: 0.5 });
    const plain = serialize(state).objects[0].raster!;
    flipObject(state, obj.id);
    const flipped = serialize(state).objects[0].raster!;
    expect(flipped).not.toBe(plain);

    const mirrored = flipHorizontal(parsePgm(decodeBase64(plain)));
    expect(Array.from(parsePgm(decodeBase64(flipped)).pixels))
      .toEqual(Array.from(mirrored.pixels));

    flipObject(state, obj.id);
    expect(serialize(state).objects[0].raster).toBe(plain);
  });

  it("moves clamp to the unit square, resizes keep a minimum side", () => {
    const state = emptyState();
    const obj = addSketchObject(state, 0, "circle", STAR,
                                { x0: 0.4, y0: 0.4, x1: 0.6, y1: 0.6 });
    moveObject(state, obj.id, 5, -5);
    expect(obj.box.x1).toBeLessThanOrEqual(1);
    expect(obj.box.y0).toBeGreaterThanOrEqual(0);
    expect(obj.box.x1 - obj.box.x0).toBeCloseTo(0.2, 6);

    resizeObject(state, obj.id, obj.box.x0 - 1, obj.box.y0 - 1);
    expect(obj.box.x1).toBeGreaterThan(obj.box.x0);
    expect(obj.box.y1).toBeGreaterThan(obj.box.y0);
  });

  it("grid cells match the service layout: center cell is 12", () => {
    expect(gridCell({ x0: 0.45, y0: 0.45, x1: 0.55, y1: 0.55 })).toBe(12);
    expect(gridCell({ x0: 0.0, y0: 0.0, x1: 0.1, y1: 0.1 })).toBe(0);
    expect(gridCell({ x0: 0.9, y0: 0.9, x1: 1.0, y1: 1.0 })).toBe(24);
    expect(gridCell({ x0: 0.9, y0: 0.0, x1: 1.0, y1: 0.1 })).toBe(4);
  });
});
