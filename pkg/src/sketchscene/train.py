"""Three-stage training: object encoder first, then the full model on
soft pairs, then a short finetune on hard pairs.

A lock file makes the checkpoint directory single-writer. Losses land
in a newline-delimited JSON log per stage. Any non-finite loss aborts
the stage; the last periodic checkpoint stays on disk.
"""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .dataset import load_dataset, synthesize_swap_negative
from .layout import box_loss, fcr_cce, mask_gan_losses
from .model import SceneModel
from .objects import triplet_loss
from .retrieval import contrastive_loss


class TrainError(RuntimeError):
    pass


@contextmanager
def checkpoint_lock(directory):
    """Exclusive ownership of a checkpoint directory via a lock file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise TrainError(
            f"{directory} is locked by another training process "
            f"(remove {path} if that process is gone)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        path.unlink(missing_ok=True)


class Corpus:
    """In-memory train-split view with the pairings pre-indexed."""

    def __init__(self, dataset_dir, split="train"):
        scenes = list(load_dataset(dataset_dir, split=split))
        if not scenes:
            raise TrainError(f"no {split} scenes under {dataset_dir}")
        self.photos = [c for c in scenes if c.kind == "photo"]
        self.soft = {}
        self.hard = {}
        for c in scenes:
            if c.kind == "sketch_soft":
                self.soft.setdefault(c.paired_scene_id, []).append(c)
            elif c.kind == "sketch_hard":
                self.hard[c.paired_scene_id] = c
        for pairs in self.soft.values():
            pairs.sort(key=lambda c: c.scene_id)
        # Crop pools for stage 1 and for non-synthesized negatives.
        self.photo_crops = {}
        for c in self.photos:
            for o in c.objects:
                self.photo_crops.setdefault(o.class_id, []).append(o.raster)
        self.sketch_crops = [(o.raster, o.class_id)
                             for c in scenes if c.kind == "sketch_soft"
                             for o in c.objects]

    def num_classes(self):
        return len(self.photo_crops)


class _Log:
    def __init__(self, path):
        self.f = open(path, "w")
        self.t0 = time.monotonic()

    def write(self, step, losses):
        row = {"step": step, "wall_time": round(time.monotonic() - self.t0, 3)}
        row.update({k: float(v) for k, v in losses.items()})
        self.f.write(json.dumps(row) + "\n")

    def close(self):
        self.f.flush()
        self.f.close()


def _check_finite(losses, stage, step):
    for name, value in losses.items():
        if not np.isfinite(value):
            raise TrainError(
                f"{stage}: non-finite {name} at step {step}; "
                f"last periodic checkpoint retained")


def train_stage1(dataset_dir, config: TrainConfig, out_dir):
    """Train the object encoder on class-level triplets."""
    config.validate()
    corpus = Corpus(dataset_dir)
    out = Path(out_dir)
    model = SceneModel(config)
    rng = np.random.default_rng(config.seed + 1)
    opt = ad.Adam(model.encoder.params, lr=config.stage1_lr)
    classes = sorted(corpus.photo_crops)
    ckpt_path = out / "stage1.ckpt"
    with checkpoint_lock(out):
        log = _Log(out / "stage1_log.ndjson")
        try:
            for step in range(1, config.stage1_iters + 1):
                b = config.stage1_batch
                picks = rng.integers(0, len(corpus.sketch_crops), size=b)
                anchors = [corpus.sketch_crops[i] for i in picks]
                pos, neg, neg_labels = [], [], []
                for _, cls in anchors:
                    pool = corpus.photo_crops[cls]
                    pos.append(pool[rng.integers(0, len(pool))])
                    other = classes[(cls + 1 + rng.integers(0, len(classes) - 1))
                                    % len(classes)]
                    neg_pool = corpus.photo_crops[other]
                    neg.append(neg_pool[rng.integers(0, len(neg_pool))])
                    neg_labels.append(other)
                rasters = np.stack([a[0] for a in anchors] + pos + neg)
                is_sketch = np.array([True] * b + [False] * (2 * b))
                emb = model.encoder.encode_batch(rasters, is_sketch)
                a, p, n = emb[:b], emb[b:2 * b], emb[2 * b:]
                a_labels = np.array([c for _, c in anchors])
                l_tri = triplet_loss(a, p, n, margin=config.margin)
                l_cce = model.encoder.cce_loss(
                    a, p, n, (a_labels, a_labels, np.array(neg_labels)))
                loss = l_tri + l_cce
                losses = {"triplet": l_tri.item(), "cce": l_cce.item(),
                          "total": loss.item()}
                _check_finite(losses, "stage1", step)
                opt.zero_grad()
                loss.backward()
                opt.step()
                log.write(step, losses)
                if step % config.save_every == 0:
                    save_checkpoint(ckpt_path, model, "stage1", step)
            save_checkpoint(ckpt_path, model, "stage1", config.stage1_iters)
        finally:
            log.close()
    return ckpt_path


def _scene_stage(stage, dataset_dir, config: TrainConfig, out_dir, start_ckpt,
                 iters, lr, hard_pairs):
    config.validate()
    corpus = Corpus(dataset_dir)
    out = Path(out_dir)
    model = SceneModel(config)
    if start_ckpt is not None:
        load_checkpoint(start_ckpt, model)
    rng = np.random.default_rng(config.seed + (3 if hard_pairs else 2))
    gen_opt = ad.Adam(model.generator_params(config.freeze_olr), lr=lr)
    disc_opt = ad.Adam(model.discriminator_params(), lr=lr * config.ttur_factor)
    b = min(config.batch_size, len(corpus.photos))
    classes = sorted(corpus.photo_crops)
    ckpt_path = out / f"{stage}.ckpt"
    with checkpoint_lock(out):
        log = _Log(out / f"{stage}_log.ndjson")
        try:
            for step in range(1, iters + 1):
                photo_idx = rng.choice(len(corpus.photos), size=b, replace=False)
                photos = [corpus.photos[i] for i in photo_idx]
                if hard_pairs:
                    sketches = [corpus.hard[c.scene_id] for c in photos]
                else:
                    sketches = [corpus.soft[c.scene_id][rng.integers(0, 3) % len(corpus.soft[c.scene_id])]
                                for c in photos]
                comps = photos + sketches
                if not config.no_swap_negatives:
                    swaps = [synthesize_swap_negative(c, rng, corpus.num_classes())
                             for c in photos]
                    comps = comps + swaps
                batch = model.forward_scenes(comps)
                off = batch.offsets
                n_obj = int(off[b])  # objects per block are aligned across blocks

                photo_rows = np.arange(0, n_obj)
                sketch_rows = np.arange(n_obj, 2 * n_obj)
                a = ad.gather_rows(batch.olr, sketch_rows)
                p = ad.gather_rows(batch.olr, photo_rows)
                labels = np.concatenate([np.array(c.class_ids) for c in photos])
                if config.no_swap_negatives:
                    # Random different-class photo crops stand in as negatives.
                    neg_rasters, neg_labels = [], []
                    for cls in labels:
                        other = classes[(cls + 1 + rng.integers(0, len(classes) - 1))
                                        % len(classes)]
                        pool = corpus.photo_crops[other]
                        neg_rasters.append(pool[rng.integers(0, len(pool))])
                        neg_labels.append(other)
                    n_emb = model.encoder.encode_batch(
                        np.stack(neg_rasters), np.zeros(len(neg_rasters), dtype=bool))
                    neg_labels = np.array(neg_labels)
                    sr_swap = None
                else:
                    swap_rows = np.arange(2 * n_obj, 3 * n_obj)
                    n_emb = ad.gather_rows(batch.olr, swap_rows)
                    neg_labels = np.concatenate(
                        [np.array(c.class_ids) for c in comps[2 * b:]])
                    sr_swap = batch.sr[2 * b:]

                l_tri = triplet_loss(a, p, n_emb, margin=config.margin)
                l_cce = model.encoder.cce_loss(a, p, n_emb, (labels, labels, neg_labels))
                total = l_tri + l_cce
                losses = {"triplet": l_tri.item(), "cce": l_cce.item()}

                if not config.no_generation_losses:
                    boxes = np.concatenate([np.asarray(c.boxes) for c in photos])
                    masks = np.concatenate(
                        [np.stack([o.mask for o in c.objects]).reshape(len(c.objects), -1)
                         for c in photos]).astype(np.float32)
                    l_box = l_gen = l_disc = l_fcr = None
                    for rows in (sketch_rows, photo_rows):
                        fcr = ad.gather_rows(batch.fcr, rows)
                        lb = box_loss(model.box_gen, fcr, boxes,
                                      config.lambda_giou, config.lambda_box_l2)
                        lg, ld = mask_gan_losses(
                            model.mask_gen, model.discriminator, fcr, masks, labels,
                            config.lambda_mask_mse, config.lambda_mask_adv,
                            config.lambda_mask_fm)
                        lf = fcr_cce(model.fcr_clf, fcr, labels)
                        l_box = lb if l_box is None else l_box + lb
                        l_gen = lg if l_gen is None else l_gen + lg
                        l_disc = ld if l_disc is None else l_disc + ld
                        l_fcr = lf if l_fcr is None else l_fcr + lf
                    total = total + l_box + l_gen + l_fcr
                    losses.update({"box": l_box.item(), "mask_gen": l_gen.item(),
                                   "mask_disc": l_disc.item(), "fcr_cce": l_fcr.item()})
                else:
                    l_disc = None

                if not config.no_contrastive:
                    l_cont = contrastive_loss(batch.sr[b:2 * b], batch.sr[:b], sr_swap,
                                              unclamped=config.unclamped_contrastive)
                    total = total + l_cont
                    losses["contrastive"] = l_cont.item()

                losses["total"] = total.item()
                _check_finite(losses, stage, step)

                gen_opt.zero_grad()
                disc_opt.zero_grad()
                total.backward()
                gen_opt.step()
                if l_disc is not None:
                    gen_opt.zero_grad()
                    disc_opt.zero_grad()
                    l_disc.backward()
                    disc_opt.step()
                log.write(step, losses)
                if step % config.save_every == 0:
                    save_checkpoint(ckpt_path, model, stage, step)
            save_checkpoint(ckpt_path, model, stage, iters)
        finally:
            log.close()
    return ckpt_path


def train_stage2(dataset_dir, config: TrainConfig, out_dir, olr_ckpt=None):
    """End-to-end training on soft pairs, from the stage-1 encoder."""
    if olr_ckpt is None and not config.no_pretraining:
        raise TrainError("stage 2 needs a stage-1 checkpoint "
                         "(or set no_pretraining)")
    return _scene_stage("stage2", dataset_dir, config, out_dir, olr_ckpt,
                        config.stage2_iters, config.stage2_lr, hard_pairs=False)


def train_stage3(dataset_dir, config: TrainConfig, out_dir, stage2_ckpt):
    """Hard-pair finetune at the lower learning rate."""
    if stage2_ckpt is None or not Path(stage2_ckpt).exists():
        raise TrainError(f"stage 3 needs a stage-2 checkpoint, got {stage2_ckpt}")
    return _scene_stage("stage3", dataset_dir, config, out_dir, stage2_ckpt,
                        config.stage3_iters, config.stage3_lr, hard_pairs=True)
