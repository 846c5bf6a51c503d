// Canvas state and its serialization to API requests. Pure data; every
// number shown in the UI comes back from the service, never from here.

import { Box, CompositionRequest, Domain, ObjectSpec } from "./types.js";
import { decodeBase64, encodeBase64, encodePgm, flipHorizontal, parsePgm } from "./pgm.js";

export const MAX_OBJECTS = 8;
export const GRID_CELLS = 5;
const MIN_SIDE = 0.02;

export interface CanvasObject {
  id: number;
  classId: number;
  className: string;
  domain: Domain;
  box: Box;
  raster: string | null; // base64 PGM (sketch glyphs, hydrated crops)
  cropRef: string | null; // set when dragged out of a search result
  flipped: boolean;
}

export interface ComposerState {
  objects: CanvasObject[];
  backgroundClass: number | null;
  nextId: number;
}

export function emptyState(): ComposerState {
  return { objects: [], backgroundClass: null, nextId: 1 };
}

function clampBox(box: Box): Box {
  const x0 = Math.min(Math.max(box.x0, 0), 1 - MIN_SIDE);
  const y0 = Math.min(Math.max(box.y0, 0), 1 - MIN_SIDE);
  return {
    x0,
    y0,
    x1: Math.min(Math.max(box.x1, x0 + MIN_SIDE), 1),
    y1: Math.min(Math.max(box.y1, y0 + MIN_SIDE), 1),
  };
}

export function addSketchObject(state: ComposerState, classId: number,
                                className: string, raster: string,
                                box: Box): CanvasObject {
  const obj: CanvasObject = {
    id: state.nextId++,
    classId,
    className,
    domain: "sketch",
    box: clampBox(box),
    raster,
    cropRef: null,
    flipped: false,
  };
  state.objects.push(obj);
  return obj;
}

/** A photo crop dragged in from a search result. */
export function addCropObject(state: ComposerState, cropRef: string,
                              classId: number, className: string,
                              box: Box): CanvasObject {
  const obj: CanvasObject = {
    id: state.nextId++,
    classId,
    className,
    domain: "photo",
    box: clampBox(box),
    raster: null,
    cropRef,
    flipped: false,
  };
  state.objects.push(obj);
  return obj;
}

export function removeObject(state: ComposerState, id: number): void {
  state.objects = state.objects.filter((o) => o.id !== id);
}

export function moveObject(state: ComposerState, id: number, dx: number, dy: number): void {
  const obj = state.objects.find((o) => o.id === id);
  if (!obj) return;
  const w = obj.box.x1 - obj.box.x0;
  const h = obj.box.y1 - obj.box.y0;
  const x0 = Math.min(Math.max(obj.box.x0 + dx, 0), 1 - w);
  const y0 = Math.min(Math.max(obj.box.y0 + dy, 0), 1 - h);
  obj.box = { x0, y0, x1: x0 + w, y1: y0 + h };
}

export function resizeObject(state: ComposerState, id: number, x1: number, y1: number): void {
  const obj = state.objects.find((o) => o.id === id);
  if (!obj) return;
  obj.box = clampBox({ ...obj.box, x1, y1 });
}

export function flipObject(state: ComposerState, id: number): void {
  const obj = state.objects.find((o) => o.id === id);
  if (obj) obj.flipped = !obj.flipped;
}

/** Objects needing their crop raster fetched before serialization. */
export function pendingCropFetches(state: ComposerState): CanvasObject[] {
  return state.objects.filter((o) => o.flipped && o.raster === null && o.cropRef !== null);
}

export function validate(state: ComposerState): string | null {
  if (state.objects.length === 0) return "place at least one object";
  if (state.objects.length > MAX_OBJECTS) return `at most ${MAX_OBJECTS} objects`;
  return null;
}

const round3 = (v: number): number => Math.round(v * 1000) / 1000;

function flippedRaster(raster: string): string {
  return encodeBase64(encodePgm(flipHorizontal(parsePgm(decodeBase64(raster)))));
}

export function serialize(state: ComposerState, k?: number): CompositionRequest {
  const problem = validate(state);
  if (problem) throw new Error(problem);
  const objects: ObjectSpec[] = state.objects.map((o) => {
    const spec: ObjectSpec = {
      class_id: o.classId,
      domain: o.domain,
      bbox: [round3(o.box.x0), round3(o.box.y0), round3(o.box.x1), round3(o.box.y1)],
    };
    if (o.flipped && o.raster !== null) {
      spec.raster = flippedRaster(o.raster);
    } else if (o.cropRef !== null) {
      spec.crop_ref = o.cropRef;
    } else if (o.raster !== null) {
      spec.raster = o.raster;
    }
    return spec;
  });
  const request: CompositionRequest = { objects };
  if (state.backgroundClass !== null) request.background_class = state.backgroundClass;
  if (k !== undefined) request.k = k;
  return request;
}

/** Which 5x5 grid cell a box center falls in; mirrors the service's
 * positional layout so the canvas grid lines mean something. */
export function gridCell(box: Box): number {
  const cx = (box.x0 + box.x1) / 2;
  const cy = (box.y0 + box.y1) / 2;
  const col = Math.min(Math.floor(cx * GRID_CELLS), GRID_CELLS - 1);
  const row = Math.min(Math.floor(cy * GRID_CELLS), GRID_CELLS - 1);
  return row * GRID_CELLS + col;
}
