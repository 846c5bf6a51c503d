import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sketchscene.dataset import load_dataset, parse_pgm, pgm_bytes
from sketchscene.retrieval import build_index
from sketchscene.server import create_app
from sketchscene.checkpoint import load_model


@pytest.fixture(scope="module")
def client(tiny_run, tmp_path_factory):
    model, _ = load_model(tiny_run["stage2"])
    index_path = tmp_path_factory.mktemp("idx") / "test.idx"
    corpus = load_dataset(tiny_run["data"], split="test", kind="photo")
    build_index(corpus, model).save(index_path)
    app = create_app(tiny_run["stage2"], index_path, tiny_run["data"])
    return TestClient(app)


def _sketch_body(seed=0, k=None):
    rng = np.random.default_rng(seed)
    raster = base64.b64encode(pgm_bytes(rng.random((32, 32)))).decode()
    body = {"objects": [
        {"class_id": 1, "domain": "sketch", "bbox": [0.1, 0.2, 0.45, 0.6],
         "raster": raster},
        {"class_id": 4, "domain": "sketch", "bbox": [0.5, 0.5, 0.9, 0.95],
         "raster": raster},
    ]}
    if k is not None:
        body["k"] = k
    return body


def test_healthz_reports_checkpoint(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert len(body["checkpoint"]) == 64
    assert body["corpus_size"] == 6


def test_embed_deterministic(client):
    a = client.post("/embed", json=_sketch_body())
    b = client.post("/embed", json=_sketch_body())
    assert a.status_code == 200
    assert len(a.json()["sr"]) == 128
    assert a.json()["sr"] == b.json()["sr"]


def test_search_respects_k_and_orders_distances(client):
    r = client.post("/search", json=_sketch_body(k=5))
    assert r.status_code == 200
    results = r.json()["results"]
    assert 0 < len(results) <= 5
    dists = [row["distance"] for row in results]
    assert dists == sorted(dists)
    assert all(row["crops"] for row in results)


def test_crop_refs_resolve_and_drive_mixed_queries(client):
    top = client.post("/search", json=_sketch_body(k=1)).json()["results"][0]
    ref = top["crops"][0]
    crop = client.get(f"/dataset/crops/{ref}")
    assert crop.status_code == 200
    meta = crop.json()
    parsed = parse_pgm(base64.b64decode(meta["raster"]))
    assert parsed.shape == (32, 32)

    body = _sketch_body(k=3)
    body["objects"][0] = {"class_id": meta["class_id"], "domain": "photo",
                          "bbox": meta["bbox"], "crop_ref": ref}
    r = client.post("/search", json=body)
    assert r.status_code == 200
    assert r.json()["results"]


def test_synthesize_returns_layout_rasters(client):
    r = client.post("/synthesize", json=_sketch_body())
    assert r.status_code == 200
    body = r.json()
    layout = parse_pgm(base64.b64decode(body["layout_pgm"]))
    assert layout.shape == (64, 64)
    assert set(np.unique(layout)) <= set(range(10))
    ppm = base64.b64decode(body["layout_ppm"])
    assert ppm.startswith(b"P6\n64 64\n255\n")
    assert len(body["boxes"]) == 2 and len(body["class_ids"]) == 2


def test_scene_lookup(client):
    r = client.get("/dataset/scenes/test_000000")
    assert r.status_code == 200
    body = r.json()
    assert body["kind"] == "photo"
    assert body["objects"][0]["crop_ref"] == "test_000000:0"
    assert base64.b64decode(body["thumbnail_ppm"]).startswith(b"P6")
    assert client.get("/dataset/scenes/nope").status_code == 404


def test_classes_listing(client):
    body = client.get("/dataset/classes").json()
    assert len(body["classes"]) == 8
    assert {c["name"] for c in body["backgrounds"]} == {"meadow", "sky"}


def test_every_response_carries_checkpoint_hash(client):
    ck = client.get("/healthz").json()["checkpoint"]
    assert client.post("/embed", json=_sketch_body()).json()["checkpoint"] == ck
    assert client.post("/search", json=_sketch_body()).json()["checkpoint"] == ck
    assert client.post("/synthesize", json=_sketch_body()).json()["checkpoint"] == ck
    assert client.get("/dataset/classes").json()["checkpoint"] == ck
    assert client.get("/dataset/scenes/test_000000").json()["checkpoint"] == ck


def test_malformed_body_gives_400_with_field_path(client):
    body = _sketch_body()
    body["objects"][0]["bbox"] = [0.9, 0.2, 0.1, 0.6]  # x1 < x0
    r = client.post("/embed", json=body)
    assert r.status_code == 400
    assert r.json()["detail"][0]["field"] == "objects.0.bbox"

    r = client.post("/embed", json={"objects": []})
    assert r.status_code == 400
    assert "objects" in r.json()["detail"][0]["field"]

    both = _sketch_body()
    both["objects"][0]["crop_ref"] = "test_000000:0"
    r = client.post("/embed", json=both)
    assert r.status_code == 400


def test_unresolvable_crop_ref_gives_404(client):
    assert client.get("/dataset/crops/ghost:0").status_code == 404
    assert client.get("/dataset/crops/test_000000:99").status_code == 404
    body = _sketch_body()
    body["objects"][0] = {"class_id": 0, "domain": "photo",
                          "bbox": [0.1, 0.1, 0.5, 0.5], "crop_ref": "ghost:1"}
    assert client.post("/search", json=body).status_code == 404


def test_unloaded_service_returns_503():
    bare = TestClient(create_app())
    assert bare.get("/healthz").status_code == 503
    assert bare.post("/embed", json=_sketch_body()).status_code == 503
