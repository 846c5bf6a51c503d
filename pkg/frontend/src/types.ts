// Wire types for the sketchscene HTTP API. Kept in one place so the
// request shape the server validates is visible at a glance.

export type Domain = "sketch" | "photo";

export interface Box {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface ObjectSpec {
  class_id: number;
  domain: Domain;
  bbox: [number, number, number, number];
  raster?: string; // base64 binary PGM
  crop_ref?: string; // "scene_id:object_index"
}

export interface CompositionRequest {
  objects: ObjectSpec[];
  background_class?: number;
  k?: number;
}

export interface SearchResult {
  scene_id: string;
  distance: number;
  class_ids: number[];
  boxes: number[][];
  thumbnail: string;
  crops: string[];
}

export interface SearchResponse {
  results: SearchResult[];
  checkpoint: string;
}

export interface SynthesizeResponse {
  boxes: number[][];
  class_ids: number[];
  layout_pgm: string;
  layout_ppm: string;
  checkpoint: string;
}

export interface ClassInfo {
  class_id: number;
  name: string;
  color: [number, number, number];
}

export interface ClassesResponse {
  classes: ClassInfo[];
  backgrounds: ClassInfo[];
  checkpoint: string;
}

export interface CropResponse {
  crop_ref: string;
  scene_id: string;
  object_index: number;
  class_id: number;
  domain: Domain;
  bbox: number[];
  raster: string;
  mask: string;
  checkpoint: string;
}

export interface SceneResponse {
  scene_id: string;
  kind: string;
  background_class: number;
  objects: {
    class_id: number;
    domain: Domain;
    bbox: number[];
    crop_ref: string;
    raster: string;
  }[];
  thumbnail_ppm: string;
  checkpoint: string;
}

export interface HealthResponse {
  status: string;
  checkpoint: string;
  stage: string;
  corpus_size: number;
}
