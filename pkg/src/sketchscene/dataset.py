"""Scene corpus synthesis, on-disk layout, and loading.

A dataset directory holds `manifest.json` plus a flat `rasters/` folder
of 32x32 binary PGMs (P5, maxval 255). Every photo scene is emitted
with three soft-paired sketch scenes (same classes and boxes, freshly
drawn instances) and one hard-paired sketch (stroke rendering of the
exact same instances). Generation is a pure function of (seed, config):
the same pair produces byte-identical directories.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import glyphs

SPLITS = ("train", "val", "test")
KINDS = ("photo", "sketch_soft", "sketch_hard")
BACKGROUNDS = ("meadow", "sky")
MASK_THRESHOLD = 128


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class GlyphClass:
    class_id: int
    name: str


@dataclass
class ObjectInstance:
    class_id: int
    domain: str  # sketch | photo
    raster: np.ndarray  # 32x32 float32 in [0,1]
    mask: np.ndarray  # 32x32 bool
    bbox: tuple  # (x0, y0, x1, y1) normalized
    paired_scene_id: Optional[str] = None


@dataclass
class Composition:
    scene_id: str
    split: str
    kind: str
    background: int
    objects: list
    paired_scene_id: Optional[str] = None

    @property
    def class_ids(self):
        return [o.class_id for o in self.objects]

    @property
    def boxes(self):
        return [o.bbox for o in self.objects]


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int = 8
    train_scenes: int = 600
    val_scenes: int = 100
    test_scenes: int = 200
    min_objects: int = 2
    max_objects: int = 5
    soft_pairs: int = 3
    min_class_instances: int = 40

    def validate(self):
        if self.num_classes != len(glyphs.FAMILIES):
            raise DatasetError(
                f"num_classes={self.num_classes} unsupported: exactly "
                f"{len(glyphs.FAMILIES)} procedural families exist")
        if min(self.train_scenes, self.val_scenes, self.test_scenes) < 1:
            raise DatasetError("every split needs at least one scene")
        if not (1 <= self.min_objects <= self.max_objects <= 8):
            raise DatasetError(
                f"object count range [{self.min_objects}, {self.max_objects}] invalid")
        if self.soft_pairs < 1:
            raise DatasetError("soft_pairs must be >= 1")
        for split, count in (("train", self.train_scenes), ("val", self.val_scenes),
                             ("test", self.test_scenes)):
            if count * self.max_objects < self.num_classes * self.min_class_instances:
                raise DatasetError(
                    f"{split} split too small: {count} scenes cannot hold "
                    f"{self.min_class_instances} instances of each of "
                    f"{self.num_classes} classes")


def classes():
    return [GlyphClass(i, name) for i, name in enumerate(glyphs.FAMILIES)]


def background_classes(num_classes=8):
    return [GlyphClass(num_classes + i, name) for i, name in enumerate(BACKGROUNDS)]


# -- PGM ---------------------------------------------------------------


def pgm_bytes(values) -> bytes:
    """Serialize a 2-D array as binary PGM. Floats in [0,1] scale to 0..255."""
    arr = np.asarray(values)
    if arr.dtype == bool:
        data = np.where(arr, 255, 0).astype(np.uint8)
    elif np.issubdtype(arr.dtype, np.floating):
        data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    else:
        data = arr.astype(np.uint8)
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode() + data.tobytes()


def write_pgm(path, values):
    Path(path).write_bytes(pgm_bytes(values))


def parse_pgm(blob: bytes, name="<bytes>"):
    """Decode a binary PGM into a uint8 array."""
    path = name
    if not blob.startswith(b"P5"):
        raise DatasetError(f"{path}: not a binary PGM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise DatasetError(f"{path}: unsupported maxval {maxval}")
    if len(blob) - pos < w * h:
        raise DatasetError(f"{path}: truncated pixel data")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w)


def read_pgm(path):
    return parse_pgm(Path(path).read_bytes(), name=str(path))


def read_raster(path):
    return (read_pgm(path).astype(np.float32) / 255.0)


def read_mask(path):
    return read_pgm(path) >= MASK_THRESHOLD


# -- generation --------------------------------------------------------


def _box_iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / area


def _object_counts(config, n_scenes, rng):
    counts = rng.integers(config.min_objects, config.max_objects + 1, size=n_scenes)
    need = config.num_classes * config.min_class_instances
    i = 0
    while counts.sum() < need:
        if counts[i] < config.max_objects:
            counts[i] += 1
        i = (i + 1) % n_scenes
    return counts


def _class_deck(total, num_classes, rng):
    deck = []
    while len(deck) < total:
        deck.extend(rng.permutation(num_classes).tolist())
    return deck[:total]


def _sample_scene_layout(families, rng):
    boxes = []
    for fam in families:
        box = glyphs.sample_box(fam, rng)
        for _ in range(40):
            if all(_box_iou(box, other) <= 0.4 for other in boxes):
                break
            box = glyphs.sample_box(fam, rng)
        boxes.append(box)
    return boxes


def _canonical_order(boxes):
    # Largest first; ties broken left to right.
    def key(i):
        x0, y0, x1, y1 = boxes[i]
        return (-(x1 - x0) * (y1 - y0), x0)

    return sorted(range(len(boxes)), key=key)


def generate_dataset(seed, config, out_dir):
    """Synthesize the full corpus under `out_dir`. Returns the manifest dict."""
    config.validate()
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    (out / "rasters").mkdir(parents=True, exist_ok=True)

    manifest = {
        "version": 1,
        "seed": int(seed),
        "config": dataclasses.asdict(config),
        "classes": [dataclasses.asdict(c) for c in classes()],
        "backgrounds": [dataclasses.asdict(c) for c in background_classes(config.num_classes)],
        "scenes": [],
    }

    def emit(scene_id, split, kind, background, class_ids, boxes, rendered, paired):
        objects = []
        for j, (cid, box, (raster, mask)) in enumerate(zip(class_ids, boxes, rendered)):
            img_file = f"rasters/{scene_id}.o{j}.img.pgm"
            msk_file = f"rasters/{scene_id}.o{j}.msk.pgm"
            write_pgm(out / img_file, raster)
            write_pgm(out / msk_file, mask)
            objects.append({
                "class_id": int(cid),
                "bbox": [float(v) for v in box],
                "domain": "photo" if kind == "photo" else "sketch",
                "raster_file": img_file,
                "mask_file": msk_file,
                "paired_scene_id": paired,
            })
        manifest["scenes"].append({
            "id": scene_id,
            "split": split,
            "kind": kind,
            "background": background,
            "paired_scene_id": paired,
            "objects": objects,
        })

    split_sizes = {"train": config.train_scenes, "val": config.val_scenes,
                   "test": config.test_scenes}
    for split in SPLITS:
        n_scenes = split_sizes[split]
        counts = _object_counts(config, n_scenes, rng)
        deck = _class_deck(int(counts.sum()), config.num_classes, rng)
        cursor = 0
        for i in range(n_scenes):
            n = int(counts[i])
            class_ids = deck[cursor:cursor + n]
            cursor += n
            families = [glyphs.FAMILIES[c] for c in class_ids]
            boxes = _sample_scene_layout(families, rng)
            order = _canonical_order(boxes)
            class_ids = [class_ids[k] for k in order]
            families = [families[k] for k in order]
            boxes = [boxes[k] for k in order]
            background = config.num_classes + int(rng.integers(0, len(BACKGROUNDS)))

            scene_id = f"{split}_{i:06d}"
            geoms = [glyphs.sample_geometry(f, rng) for f in families]
            photo = [glyphs.render_photo(g, rng) for g in geoms]
            emit(scene_id, split, "photo", background, class_ids, boxes, photo, None)
            for k in range(config.soft_pairs):
                fresh = [glyphs.sample_geometry(f, rng) for f in families]
                sketches = [glyphs.render_sketch(g, rng) for g in fresh]
                emit(f"{scene_id}.s{k}", split, "sketch_soft", background,
                     class_ids, boxes, sketches, scene_id)
            hard = [glyphs.render_sketch(g, rng) for g in geoms]
            emit(f"{scene_id}.h", split, "sketch_hard", background,
                 class_ids, boxes, hard, scene_id)

    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


def synthesize_swap_negative(scene, rng, num_classes=8):
    """Same boxes, every class swapped for a different one.

    Replacement instances are drawn fresh and rendered in the scene's
    own domain, so the negative is visually coherent.
    """
    if num_classes < 2:
        raise DatasetError("swap negatives need at least 2 classes")
    if not scene.objects:
        raise DatasetError(f"scene {scene.scene_id}: no objects to swap")
    swapped = []
    for obj in scene.objects:
        offset = int(rng.integers(1, num_classes))
        new_class = (obj.class_id + offset) % num_classes
        geom = glyphs.sample_geometry(glyphs.FAMILIES[new_class], rng)
        if obj.domain == "photo":
            raster, mask = glyphs.render_photo(geom, rng)
        else:
            raster, mask = glyphs.render_sketch(geom, rng)
        swapped.append(ObjectInstance(
            class_id=new_class, domain=obj.domain, raster=raster, mask=mask,
            bbox=obj.bbox, paired_scene_id=scene.scene_id))
    return Composition(
        scene_id=scene.scene_id + "~swap", split=scene.split, kind=scene.kind,
        background=scene.background, objects=swapped,
        paired_scene_id=scene.scene_id)


# -- loading -----------------------------------------------------------


def load_manifest(path):
    manifest_path = Path(path) / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no manifest.json under {path}")
    with open(manifest_path) as f:
        return json.load(f)


def _validate_scene(record, num_classes):
    sid = record.get("id", "<missing id>")
    objects = record.get("objects", [])
    if not 1 <= len(objects) <= 8:
        raise DatasetError(f"scene {sid}: object count {len(objects)} outside [1, 8]")
    if record.get("split") not in SPLITS:
        raise DatasetError(f"scene {sid}: unknown split {record.get('split')!r}")
    if record.get("kind") not in KINDS:
        raise DatasetError(f"scene {sid}: unknown kind {record.get('kind')!r}")
    for obj in objects:
        x0, y0, x1, y1 = obj["bbox"]
        if not (x0 < x1 and y0 < y1):
            raise DatasetError(f"scene {sid}: degenerate bbox {obj['bbox']}")
        if not (0.0 <= x0 and x1 <= 1.0 and 0.0 <= y0 and y1 <= 1.0):
            raise DatasetError(f"scene {sid}: bbox {obj['bbox']} outside unit square")
        if not 0 <= obj["class_id"] < num_classes:
            raise DatasetError(f"scene {sid}: class_id {obj['class_id']} out of range")


def load_dataset(path, split=None, kind=None) -> Iterator[Composition]:
    """Yield validated compositions, optionally filtered by split/kind."""
    root = Path(path)
    manifest = load_manifest(root)
    num_classes = len(manifest["classes"])
    for record in manifest["scenes"]:
        if split is not None and record["split"] != split:
            continue
        if kind is not None and record["kind"] != kind:
            continue
        _validate_scene(record, num_classes)
        objects = []
        for obj in record["objects"]:
            raster_path = root / obj["raster_file"]
            mask_path = root / obj["mask_file"]
            for p in (raster_path, mask_path):
                if not p.exists():
                    raise DatasetError(f"scene {record['id']}: missing raster file {p}")
            mask = read_mask(mask_path)
            if not mask.any():
                raise DatasetError(f"scene {record['id']}: empty mask {mask_path}")
            objects.append(ObjectInstance(
                class_id=int(obj["class_id"]),
                domain=obj["domain"],
                raster=read_raster(raster_path),
                mask=mask,
                bbox=tuple(float(v) for v in obj["bbox"]),
                paired_scene_id=obj.get("paired_scene_id")))
        yield Composition(
            scene_id=record["id"], split=record["split"], kind=record["kind"],
            background=int(record["background"]), objects=objects,
            paired_scene_id=record.get("paired_scene_id"))


def index_by_id(comps):
    return {c.scene_id: c for c in comps}


def dataset_hash(path):
    """SHA-256 over the manifest and every raster, in sorted file order."""
    root = Path(path)
    digest = hashlib.sha256()
    files = [root / "manifest.json"] + sorted((root / "rasters").glob("*.pgm"))
    for f in files:
        digest.update(f.name.encode())
        digest.update(f.read_bytes())
    return digest.hexdigest()
