"""
The interactive loop over the HTTP API
======================================

Drives the service the way the browser UI does, in process via the test
client: embed a sketch composition, search, pull a photo crop out of the
top hit into the query (mixed domain), and synthesize a layout. Reuses
demo 02's checkpoint and index.
"""

import base64
from pathlib import Path

from fastapi.testclient import TestClient

from sketchscene.dataset import load_dataset, pgm_bytes
from sketchscene.server import create_app

base = Path(__file__).parent / "out" / "train"
if not (base / "run" / "stage2.ckpt").exists():
    raise SystemExit("run demos/02_train_and_search.py first")

app = create_app(base / "run" / "stage2.ckpt", base / "test.idx", base / "data")
client = TestClient(app)

health = client.get("/healthz").json()
print(f"service up: stage={health['stage']} corpus={health['corpus_size']} "
      f"checkpoint={health['checkpoint'][:12]}...")

# Borrow real sketch strokes from the corpus as our "drawing".
sketch = next(load_dataset(base / "data", split="test", kind="sketch_soft"))
objects = [{
    "class_id": o.class_id, "domain": "sketch", "bbox": list(o.bbox),
    "raster": base64.b64encode(pgm_bytes(o.raster)).decode(),
} for o in sketch.objects]

r = client.post("/search", json={"objects": objects, "k": 5}).json()
print(f"\nsearch with {len(objects)} sketched objects:")
for i, hit in enumerate(r["results"], 1):
    print(f"  {i}. {hit['scene_id']} d={hit['distance']:.3f} "
          f"classes={hit['class_ids']}")

# "Drag" the first crop of the top result onto the canvas.
top = r["results"][0]
ref = top["crops"][0]
crop = client.get(f"/dataset/crops/{ref}").json()
objects[0] = {"class_id": crop["class_id"], "domain": "photo",
              "bbox": objects[0]["bbox"], "crop_ref": ref}
r2 = client.post("/search", json={"objects": objects, "k": 5}).json()
print(f"\nafter swapping in photo crop {ref}:")
for i, hit in enumerate(r2["results"], 1):
    print(f"  {i}. {hit['scene_id']} d={hit['distance']:.3f}")

syn = client.post("/synthesize", json={"objects": objects}).json()
out = Path(__file__).parent / "out" / "api_layout.ppm"
out.write_bytes(base64.b64decode(syn["layout_ppm"]))
print(f"\nsynthesized layout (classes {syn['class_ids']}) -> {out}")
