"""The full model: object encoder, graph stage, attention stage, and
the layout generators, wired according to the config's ablation flags.

All forward passes are batched: objects from every scene in a call are
encoded in one tensor, graph edges from all scenes share one edge MLP
pass (edges never cross scenes), and attention groups scenes by object
count so each group is one stacked matmul.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import AttentionStack, GridPositionalEncoder, SR_SLOT_INDEX, grid_cell
from .config import TrainConfig
from .glyphs import FAMILIES
from .gnn import GnnStack
from .graph import relation_edges
from .layers import Linear, collect_params
from .layout import BoxGenerator, FcrClassifier, MaskDiscriminator, MaskGenerator
from .objects import ObjectEncoder

EMBED_DIM = 128


@dataclass
class SceneBatch:
    """Everything a training step or eval pass needs from one forward."""

    comps: list
    olr: ad.Tensor  # (N, 128), N = total objects, scene-major order
    fcr: ad.Tensor  # (N, 128)
    sr: ad.Tensor  # (B, 128)
    offsets: np.ndarray  # scene i owns rows offsets[i]:offsets[i+1]

    def scene_rows(self, i):
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))


class SceneModel:
    def __init__(self, config: TrainConfig, rng=None):
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.config = config
        self.encoder = ObjectEncoder(rng, num_classes=len(FAMILIES))
        if config.no_gnn:
            self.bridge = Linear(rng, EMBED_DIM, EMBED_DIM)
            self.gnn = None
        else:
            self.gnn = GnnStack(rng)
            self.bridge = None
        if config.no_transformer:
            self.attention = None
            self.positions = None
        else:
            self.attention = AttentionStack(rng, plain=config.plain_attention)
            self.positions = None if config.no_positional_encoding \
                else GridPositionalEncoder(rng)
        self.box_gen = BoxGenerator(rng)
        self.mask_gen = MaskGenerator(rng)
        self.discriminator = MaskDiscriminator(rng, num_classes=len(FAMILIES))
        self.fcr_clf = FcrClassifier(rng, num_classes=len(FAMILIES))

    # -- parameter bookkeeping ----------------------------------------

    def _blocks(self):
        blocks = [("encoder", self.encoder)]
        if self.gnn is not None:
            blocks.append(("gnn", self.gnn))
        if self.bridge is not None:
            blocks.append(("bridge", self.bridge))
        if self.attention is not None:
            blocks.append(("attention", self.attention))
        if self.positions is not None:
            blocks.append(("positions", self.positions))
        blocks += [("box_gen", self.box_gen), ("mask_gen", self.mask_gen),
                   ("discriminator", self.discriminator), ("fcr_clf", self.fcr_clf)]
        return blocks

    def named_params(self):
        out = {}
        for prefix, block in self._blocks():
            for i, p in enumerate(block.params):
                out[f"{prefix}.{i}"] = p
        return out

    @property
    def params(self):
        return list(self.named_params().values())

    def generator_params(self, freeze_olr=False):
        """Everything the generator-side optimizer updates."""
        skip = {"discriminator"}
        if freeze_olr:
            skip.add("encoder")
        return [p for prefix, block in self._blocks() if prefix not in skip
                for p in block.params]

    def discriminator_params(self):
        return self.discriminator.params

    # -- forward ---------------------------------------------------------

    def object_embeddings(self, comps):
        """(N, 128) OLR rows for every object, scene-major order."""
        rasters = np.stack([o.raster for c in comps for o in c.objects])
        is_sketch = np.array([o.domain == "sketch" for c in comps for o in c.objects])
        return self.encoder.encode_batch(rasters, is_sketch)

    def _ccr(self, comps, olr, offsets):
        if self.gnn is None:
            return ad.relu(self.bridge(olr))
        src, rel, tgt = [], [], []
        for i, c in enumerate(comps):
            s, r, t = relation_edges(c.boxes)
            src.append(s + offsets[i])
            rel.append(r)
            tgt.append(t + offsets[i])
        return self.gnn.forward_batch(
            olr, np.concatenate(src), np.concatenate(rel), np.concatenate(tgt))

    def _attend(self, comps, ccr, offsets):
        counts = [len(c.objects) for c in comps]
        b = len(comps)
        if self.attention is None:
            scene_of = np.repeat(np.arange(b), counts)
            mean = ad.segment_mean(ccr, scene_of, b)
            sizes = ad.Tensor(np.array(counts, dtype=np.float32)[:, None])
            return mean * sizes, ccr
        cells = [grid_cell(box) for c in comps for box in c.boxes]
        groups = {}
        for i, n in enumerate(counts):
            groups.setdefault(n, []).append(i)
        sr_parts, fcr_parts = [], []
        sr_order, fcr_order = [], []
        for n in sorted(groups):
            scenes = groups[n]
            g = len(scenes)
            obj_rows = np.concatenate(
                [np.arange(offsets[i], offsets[i] + n) for i in scenes])
            x = ad.reshape(ad.gather_rows(ccr, obj_rows), (g, n, EMBED_DIM))
            zeros = ad.Tensor(np.zeros((g, 1, EMBED_DIM), dtype=np.float32))
            q = ad.concat([zeros, x], axis=1)
            if self.positions is not None:
                pidx = np.concatenate(
                    [[SR_SLOT_INDEX] + [cells[j] for j in range(offsets[i], offsets[i] + n)]
                     for i in scenes])
                e = ad.reshape(ad.gather_rows(self.positions.table, pidx),
                               (g, n + 1, EMBED_DIM))
                q = q + e
            out = self.attention.forward_group(q)
            sr_parts.append(out[:, 0, :])
            fcr_parts.append(ad.reshape(out[:, 1:, :], (g * n, EMBED_DIM)))
            sr_order.extend(scenes)
            fcr_order.extend(obj_rows.tolist())
        sr = ad.gather_rows(ad.concat(sr_parts, axis=0), np.argsort(np.array(sr_order)))
        fcr = ad.gather_rows(ad.concat(fcr_parts, axis=0), np.argsort(np.array(fcr_order)))
        return sr, fcr

    def forward_scenes(self, comps) -> SceneBatch:
        comps = list(comps)
        if not comps:
            raise ValueError("forward_scenes: no scenes")
        counts = [len(c.objects) for c in comps]
        offsets = np.cumsum([0] + counts)
        olr = self.object_embeddings(comps)
        ccr = self._ccr(comps, olr, offsets)
        sr, fcr = self._attend(comps, ccr, offsets)
        return SceneBatch(comps=comps, olr=olr, fcr=fcr, sr=sr, offsets=offsets)

    def scene_embedding(self, comp):
        """128-D scene vector as a plain array (inference path)."""
        return self.forward_scenes([comp]).sr.values[0].copy()

    def synthesize(self, comp):
        """Predict boxes, masks and classes from the scene's FCR."""
        batch = self.forward_scenes([comp])
        boxes = self.box_gen.boxes(batch.fcr).values
        masks = self.mask_gen.masks(batch.fcr).values.reshape(-1, 32, 32)
        logits = self.fcr_clf(batch.fcr).values
        classes = logits.argmax(axis=1)
        return {
            "boxes": [tuple(float(v) for v in row) for row in boxes],
            "masks": masks,
            "class_ids": classes.tolist(),
            "sr": batch.sr.values[0].copy(),
        }
