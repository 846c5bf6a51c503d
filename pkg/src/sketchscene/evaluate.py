"""Held-out evaluation: retrieval recall over an indexed corpus and
layout-generation quality against ground truth."""

from __future__ import annotations

import dataclasses

import numpy as np

from .dataset import load_dataset
from .layout import colorize, compose_layout, giou, uncolorize
from .retrieval import build_index, evaluate_class_precision, evaluate_retrieval


def object_recall_report(dataset_dir, model, split="val"):
    """Sketch→photo object class retrieval: for every sketch crop, does
    the nearest photo crop (by encoder embedding) share its class?"""
    gallery_rasters, gallery_classes = [], []
    for comp in load_dataset(dataset_dir, split=split, kind="photo"):
        for o in comp.objects:
            gallery_rasters.append(o.raster)
            gallery_classes.append(o.class_id)
    query_rasters, query_classes = [], []
    for comp in load_dataset(dataset_dir, split=split, kind="sketch_soft"):
        for o in comp.objects:
            query_rasters.append(o.raster)
            query_classes.append(o.class_id)
    if not gallery_rasters or not query_rasters:
        raise ValueError(f"split {split!r} holds no object crops")
    enc = model.encoder
    g = enc.encode_batch(np.stack(gallery_rasters),
                         np.zeros(len(gallery_rasters), dtype=bool)).values
    q = enc.encode_batch(np.stack(query_rasters),
                         np.ones(len(query_rasters), dtype=bool)).values
    d2 = (np.square(q).sum(1)[:, None] + np.square(g).sum(1)[None, :]
          - 2.0 * q @ g.T)
    nearest = d2.argmin(axis=1)
    hits = np.asarray(gallery_classes)[nearest] == np.asarray(query_classes)
    return {
        "split": split,
        "num_queries": len(query_classes),
        "gallery_size": len(gallery_classes),
        "recall@1": float(hits.mean()),
    }


def mixed_query(sketch, photo, rng):
    """Replace half the sketch objects (rounded down) with the paired
    photo crops, yielding a mixed-domain query."""
    n = len(sketch.objects)
    swap = set(rng.choice(n, size=n // 2, replace=False).tolist())
    objects = [photo.objects[i] if i in swap else o
               for i, o in enumerate(sketch.objects)]
    return dataclasses.replace(sketch, objects=objects)


def retrieval_report(dataset_dir, model, split="test", query_kind="sketch_soft",
                     ks=(1, 5, 10), seed=0):
    photos = list(load_dataset(dataset_dir, split=split, kind="photo"))
    index = build_index(photos, model)
    queries = list(load_dataset(dataset_dir, split=split, kind=query_kind))
    rng = np.random.default_rng(seed)

    by_id = {c.scene_id: c for c in photos}
    mixed = [mixed_query(q, by_id[q.paired_scene_id], rng)
             for q in queries if q.paired_scene_id in by_id]
    self_queries = [dataclasses.replace(c, paired_scene_id=c.scene_id)
                    for c in photos]

    sketch_rep = evaluate_retrieval(index, queries, model, ks)
    mixed_rep = evaluate_retrieval(index, mixed, model, ks)
    photo_rep = evaluate_retrieval(index, self_queries, model, ks)
    precision = evaluate_class_precision(index, queries, photos, model, ks)

    report = {
        "split": split,
        "query_kind": query_kind,
        "corpus_size": len(index),
        "num_queries": sketch_rep["num_queries"],
        "skipped": sketch_rep["skipped"],
        "sketch": sketch_rep,
        "mixed": mixed_rep,
        "photo_self": photo_rep,
        "class_precision": precision,
    }
    for k in ks:
        report[f"recall@{k}"] = sketch_rep[f"recall@{k}"]
    return report


def _mask_iou(pred, gt):
    p = np.asarray(pred) >= 0.5
    g = np.asarray(gt).astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def generation_report(dataset_dir, model, split="test", layout_size=64):
    photos = list(load_dataset(dataset_dir, split=split, kind="photo"))
    per_scene = {}
    gious, ious, accs = [], [], []
    colorization_ok = True
    for comp in photos:
        out = model.synthesize(comp)
        gt_boxes = comp.boxes
        scene_gious = [giou(b, g) for b, g in zip(out["boxes"], gt_boxes)]
        scene_ious = [_mask_iou(m, o.mask)
                      for m, o in zip(out["masks"], comp.objects)]
        gt_masks = [o.mask for o in comp.objects]
        gt_layout = compose_layout(gt_boxes, gt_masks, comp.class_ids,
                                   comp.background, size=layout_size)
        pred_layout = compose_layout(out["boxes"], list(out["masks"]),
                                     out["class_ids"], comp.background,
                                     size=layout_size)
        acc = float((pred_layout == gt_layout).mean())
        if not np.array_equal(uncolorize(colorize(gt_layout)), gt_layout):
            colorization_ok = False
        gious.extend(scene_gious)
        ious.extend(scene_ious)
        accs.append(acc)
        per_scene[comp.scene_id] = {
            "box_giou": float(np.mean(scene_gious)),
            "mask_iou": float(np.mean(scene_ious)),
            "layout_acc": acc,
        }
    return {
        "split": split,
        "num_scenes": len(photos),
        "mean_box_giou": float(np.mean(gious)),
        "mean_mask_iou": float(np.mean(ious)),
        "mean_layout_acc": float(np.mean(accs)),
        "gt_colorization_acc": 1.0 if colorization_ok else 0.0,
        "per_scene": per_scene,
    }
