"""
Synthesize semantic layouts from scene embeddings
=================================================

Reuses the checkpoint from demo 02 (run that first). For a few test
scenes we predict boxes and masks from the per-object representations,
compose them into a class-id layout, and write colorized images next to
the ground truth for comparison. The 400-step demo checkpoint gets the
coarse geometry right but misses classes; the default training budget
is what the generation gates are scored on.
"""

from pathlib import Path

from sketchscene.checkpoint import load_model
from sketchscene.dataset import load_dataset
from sketchscene.evaluate import generation_report
from sketchscene.layout import colorize, compose_layout, giou, write_ppm

base = Path(__file__).parent / "out" / "train"
ckpt = base / "run" / "stage2.ckpt"
if not ckpt.exists():
    raise SystemExit("run demos/02_train_and_search.py first")
out = Path(__file__).parent / "out" / "layouts"
out.mkdir(parents=True, exist_ok=True)

model, _ = load_model(ckpt)
scenes = list(load_dataset(base / "data", split="test", kind="photo"))[:5]

for comp in scenes:
    pred = model.synthesize(comp)
    layout = compose_layout(pred["boxes"], list(pred["masks"]),
                            pred["class_ids"], comp.background)
    truth = compose_layout(comp.boxes, [o.mask for o in comp.objects],
                           comp.class_ids, comp.background)
    write_ppm(out / f"{comp.scene_id}_pred.ppm", colorize(layout))
    write_ppm(out / f"{comp.scene_id}_true.ppm", colorize(truth))
    overlaps = [giou(p, t) for p, t in zip(pred["boxes"], comp.boxes)]
    acc = (layout == truth).mean()
    print(f"{comp.scene_id}: classes pred={pred['class_ids']} "
          f"true={comp.class_ids}")
    print(f"  box giou per object: {[round(g, 2) for g in overlaps]}, "
          f"layout pixel acc {acc:.2f}")

report = generation_report(base / "data", model, split="test")
print(f"\ntest split means: box_giou={report['mean_box_giou']:.2f} "
      f"mask_iou={report['mean_mask_iou']:.2f} "
      f"layout_acc={report['mean_layout_acc']:.2f}")
print("images under", out)
