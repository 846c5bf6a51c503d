"""
Build a glyph-scene corpus and look inside it
=============================================

Every scene exists four ways: one photo rendering plus three soft-paired
sketches (same classes and boxes, redrawn strokes) and one hard-paired
sketch (the exact same geometry, traced). This script writes a small
corpus and dumps a few rasters so you can eyeball the pairing.
"""

from pathlib import Path

from sketchscene.dataset import (DatasetConfig, dataset_hash, generate_dataset,
                                 load_dataset, write_pgm)
from sketchscene.layout import colorize, compose_layout, write_ppm

out = Path(__file__).parent / "out" / "corpus"
out.mkdir(parents=True, exist_ok=True)

config = DatasetConfig(train_scenes=30, val_scenes=8, test_scenes=10,
                       min_class_instances=4)
manifest = generate_dataset(seed=7, config=config, out_dir=out / "data")
print(f"wrote {len(manifest['scenes'])} scenes")
print("corpus hash:", dataset_hash(out / "data"))

# Pull one photo scene and its sketch partners.
scenes = {c.scene_id: c for c in load_dataset(out / "data", split="train")}
photo = scenes["train_000000"]
print(f"\ntrain_000000: {len(photo.objects)} objects, background class "
      f"{photo.background}")
for i, obj in enumerate(photo.objects):
    x0, y0, x1, y1 = obj.bbox
    print(f"  object {i}: class {obj.class_id} at "
          f"[{x0:.2f},{y0:.2f},{x1:.2f},{y1:.2f}]")

for suffix in ("", ".s0", ".s1", ".h"):
    comp = scenes[f"train_000000{suffix}"]
    tag = suffix.lstrip(".") or "photo"
    for i, obj in enumerate(comp.objects):
        write_pgm(out / f"train_000000_{tag}_o{i}.pgm", obj.raster)
    print(f"dumped {len(comp.objects)} crops for {comp.kind} ({tag})")

# The ground-truth semantic layout, colorized for humans.
layout = compose_layout(photo.boxes, [o.mask for o in photo.objects],
                        photo.class_ids, photo.background)
write_ppm(out / "train_000000_layout.ppm", colorize(layout))
print("\nground-truth layout ->", out / "train_000000_layout.ppm")
