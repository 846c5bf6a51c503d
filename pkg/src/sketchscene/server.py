"""HTTP API over a trained checkpoint, an embedding index and the
dataset it was built from.

The loaded snapshot (model + index + corpus) is immutable, so requests
can be served concurrently. Every JSON response carries the checkpoint
hash so clients notice reloads.
"""

from __future__ import annotations

import base64
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator, model_validator

from .checkpoint import file_hash, load_model
from .dataset import (BACKGROUNDS, Composition, DatasetError, ObjectInstance,
                      background_classes, load_dataset, parse_pgm, pgm_bytes)
from .glyphs import FAMILIES, RASTER_SIZE
from .layout import PALETTE, colorize, compose_layout, ppm_bytes
from .retrieval import EmbeddingIndex

MEADOW_ID = len(FAMILIES)  # default background class


class ObjectSpec(BaseModel):
    class_id: int = Field(ge=0, lt=len(FAMILIES))
    domain: str = Field(pattern="^(sketch|photo)$")
    bbox: tuple[float, float, float, float]
    raster: Optional[str] = None  # base64 binary PGM
    crop_ref: Optional[str] = None  # "scene_id:object_index"

    @field_validator("bbox")
    @classmethod
    def _normalized(cls, box):
        x0, y0, x1, y1 = box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValueError(f"bbox {box} not a normalized corner box")
        return box

    @model_validator(mode="after")
    def _one_source(self):
        if (self.raster is None) == (self.crop_ref is None):
            raise ValueError("exactly one of raster, crop_ref required")
        return self


class CompositionRequest(BaseModel):
    objects: list[ObjectSpec] = Field(min_length=1, max_length=8)
    background_class: int = Field(default=MEADOW_ID, ge=len(FAMILIES),
                                  lt=len(FAMILIES) + len(BACKGROUNDS))
    k: int = Field(default=10, ge=1)


class Snapshot:
    def __init__(self, ckpt_path, index_path, data_dir):
        self.model, self.header = load_model(ckpt_path)
        self.checkpoint_hash = file_hash(ckpt_path)
        self.index = EmbeddingIndex.load(index_path)
        self.scenes = {c.scene_id: c for c in load_dataset(data_dir)}

    def crop(self, ref: str) -> tuple[str, int, ObjectInstance]:
        scene_id, _, idx = ref.rpartition(":")
        comp = self.scenes.get(scene_id)
        if comp is None or not idx.isdigit() or int(idx) >= len(comp.objects):
            raise HTTPException(404, f"crop reference {ref!r} does not resolve")
        return scene_id, int(idx), comp.objects[int(idx)]


def _b64_pgm(arr) -> str:
    return base64.b64encode(pgm_bytes(arr)).decode()


def _query_composition(snap: Snapshot, req: CompositionRequest) -> Composition:
    objects = []
    for i, spec in enumerate(req.objects):
        if spec.crop_ref is not None:
            _, _, source = snap.crop(spec.crop_ref)
            raster = source.raster
        else:
            try:
                blob = base64.b64decode(spec.raster, validate=True)
                gray = parse_pgm(blob, name=f"objects[{i}].raster")
            except (ValueError, DatasetError) as e:
                raise HTTPException(400, f"objects[{i}].raster: {e}")
            if gray.shape != (RASTER_SIZE, RASTER_SIZE):
                raise HTTPException(
                    400, f"objects[{i}].raster: expected "
                    f"{RASTER_SIZE}x{RASTER_SIZE}, got {gray.shape}")
            raster = gray.astype(np.float32) / 255.0
        objects.append(ObjectInstance(
            class_id=spec.class_id, domain=spec.domain, raster=raster,
            mask=np.zeros(raster.shape, dtype=bool), bbox=tuple(spec.bbox)))
    return Composition(scene_id="<query>", split="query", kind="query",
                       background=req.background_class, objects=objects)


def _scene_payload(snap: Snapshot, comp: Composition) -> dict:
    gt_layout = compose_layout(comp.boxes, [o.mask for o in comp.objects],
                               comp.class_ids, comp.background)
    return {
        "scene_id": comp.scene_id,
        "split": comp.split,
        "kind": comp.kind,
        "background_class": comp.background,
        "paired_scene_id": comp.paired_scene_id,
        "objects": [{
            "class_id": o.class_id,
            "domain": o.domain,
            "bbox": list(o.bbox),
            "crop_ref": f"{comp.scene_id}:{i}",
            "raster": _b64_pgm(o.raster),
            "mask": _b64_pgm(o.mask),
        } for i, o in enumerate(comp.objects)],
        "thumbnail_ppm": base64.b64encode(ppm_bytes(colorize(gt_layout))).decode(),
        "checkpoint": snap.checkpoint_hash,
    }


def create_app(ckpt_path=None, index_path=None, data_dir=None,
               cors_origin=None) -> FastAPI:
    app = FastAPI(title="sketchscene")
    snapshot = None
    if ckpt_path is not None:
        snapshot = Snapshot(ckpt_path, index_path, data_dir)
    app.state.snapshot = snapshot

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware
        app.add_middleware(CORSMiddleware, allow_origins=[cors_origin],
                           allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        errors = [{"field": ".".join(str(p) for p in err["loc"] if p != "body"),
                   "message": err["msg"]} for err in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": errors})

    def snap() -> Snapshot:
        if app.state.snapshot is None:
            raise HTTPException(503, "model not loaded")
        return app.state.snapshot

    @app.get("/healthz")
    def healthz():
        s = snap()
        return {"status": "ok", "checkpoint": s.checkpoint_hash,
                "stage": s.header["stage"], "corpus_size": len(s.index),
                "num_scenes": len(s.scenes)}

    @app.post("/embed")
    def embed(req: CompositionRequest):
        s = snap()
        sr = s.model.scene_embedding(_query_composition(s, req))
        return {"sr": [float(v) for v in sr], "checkpoint": s.checkpoint_hash}

    @app.post("/search")
    def search(req: CompositionRequest):
        s = snap()
        sr = s.model.scene_embedding(_query_composition(s, req))
        k = min(req.k, len(s.index))
        results = []
        for scene_id, dist in s.index.search(sr, k):
            comp = s.scenes[scene_id]
            results.append({
                "scene_id": scene_id,
                "distance": float(dist),
                "class_ids": comp.class_ids,
                "boxes": [list(b) for b in comp.boxes],
                "thumbnail": f"/dataset/scenes/{scene_id}",
                "crops": [f"{scene_id}:{i}" for i in range(len(comp.objects))],
            })
        return {"results": results, "checkpoint": s.checkpoint_hash}

    @app.post("/synthesize")
    def synthesize(req: CompositionRequest):
        s = snap()
        out = s.model.synthesize(_query_composition(s, req))
        layout = compose_layout(out["boxes"], list(out["masks"]),
                                out["class_ids"], req.background_class)
        return {
            "boxes": [list(b) for b in out["boxes"]],
            "class_ids": out["class_ids"],
            "layout_pgm": base64.b64encode(pgm_bytes(layout.astype(np.uint8))).decode(),
            "layout_ppm": base64.b64encode(ppm_bytes(colorize(layout))).decode(),
            "checkpoint": s.checkpoint_hash,
        }

    @app.get("/dataset/scenes/{scene_id}")
    def scene(scene_id: str):
        s = snap()
        comp = s.scenes.get(scene_id)
        if comp is None:
            raise HTTPException(404, f"scene {scene_id!r} not in dataset")
        return _scene_payload(s, comp)

    @app.get("/dataset/crops/{ref}")
    def crop(ref: str):
        s = snap()
        scene_id, idx, obj = s.crop(ref)
        return {
            "crop_ref": ref,
            "scene_id": scene_id,
            "object_index": idx,
            "class_id": obj.class_id,
            "domain": obj.domain,
            "bbox": list(obj.bbox),
            "raster": _b64_pgm(obj.raster),
            "mask": _b64_pgm(obj.mask),
            "checkpoint": s.checkpoint_hash,
        }

    @app.get("/dataset/classes")
    def classes():
        s = snap()
        return {
            "classes": [{"class_id": i, "name": name,
                         "color": [int(v) for v in PALETTE[i]]}
                        for i, name in enumerate(FAMILIES)],
            "backgrounds": [{"class_id": g.class_id, "name": g.name,
                             "color": [int(v) for v in PALETTE[g.class_id]]}
                            for g in background_classes()],
            "checkpoint": s.checkpoint_hash,
        }

    return app
