"""
Train the model and search scenes with sketches
===============================================

Runs the two main training stages on a small corpus, indexes the photo
scenes, then retrieves with soft sketches. Even this demo-sized budget
separates a 30-scene corpus well; the TrainConfig defaults are what the
full evaluation gates use.
"""

import time
from pathlib import Path

from sketchscene.checkpoint import load_model
from sketchscene.config import TrainConfig
from sketchscene.dataset import DatasetConfig, generate_dataset, load_dataset
from sketchscene.evaluate import object_recall_report, retrieval_report
from sketchscene.retrieval import build_index
from sketchscene.train import train_stage1, train_stage2

out = Path(__file__).parent / "out" / "train"
out.mkdir(parents=True, exist_ok=True)
data = out / "data"
if not (data / "manifest.json").exists():
    generate_dataset(3, DatasetConfig(train_scenes=80, val_scenes=16,
                                      test_scenes=30, min_class_instances=8),
                     data)

config = TrainConfig(seed=1, stage1_iters=400, stage2_iters=400, save_every=200)
t0 = time.monotonic()
s1 = train_stage1(data, config, out / "run")
print(f"stage 1 done in {time.monotonic() - t0:.0f}s -> {s1}")
t0 = time.monotonic()
s2 = train_stage2(data, config, out / "run", olr_ckpt=s1)
print(f"stage 2 done in {time.monotonic() - t0:.0f}s -> {s2}")

model, header = load_model(s2)
print("\nobject-level check (nearest photo crop for each sketch crop):")
obj = object_recall_report(data, model, split="val")
print(f"  recall@1 = {obj['recall@1']:.2f} over {obj['num_queries']} crops "
      f"(chance 0.125)")

index = build_index(load_dataset(data, split="test", kind="photo"), model)
index.save(out / "test.idx")
print(f"\nindexed {len(index)} photo scenes")

report = retrieval_report(data, model, split="test")
for name in ("sketch", "mixed", "photo_self"):
    block = report[name]
    print(f"  {name:11s} recall@1={block['recall@1']:.2f} "
          f"recall@10={block['recall@10']:.2f} mean_rank={block['mean_rank']:.1f}")

# One concrete query, end to end.
query = next(load_dataset(data, split="test", kind="sketch_soft"))
print(f"\nquery {query.scene_id} (classes {query.class_ids}), "
      f"want {query.paired_scene_id}:")
for rank, (sid, dist) in enumerate(index.search(model.scene_embedding(query), 5), 1):
    marker = " <-- paired scene" if sid == query.paired_scene_id else ""
    print(f"  {rank}. {sid}  d={dist:.3f}{marker}")
