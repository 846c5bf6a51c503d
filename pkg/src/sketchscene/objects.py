"""Object-level embedding: per-domain encoders with a shared head.

Sketch and photo crops take separate MLP branches (no shared weights),
then a shared two-layer head maps both into one 128-D space. A linear
classifier hangs off the head for the auxiliary class loss.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .layers import Linear, Mlp, collect_params

EMBED_DIM = 128
CROP_PIXELS = 32 * 32
NUM_CLASSES = 8
TRIPLET_MARGIN = 0.5


class ObjectEncoder:
    def __init__(self, rng, num_classes=NUM_CLASSES):
        self.f_s = Mlp(rng, [CROP_PIXELS, 256, EMBED_DIM],
                       hidden_act=ad.leaky_relu, final_act=ad.leaky_relu)
        self.f_i = Mlp(rng, [CROP_PIXELS, 256, EMBED_DIM],
                       hidden_act=ad.leaky_relu, final_act=ad.leaky_relu)
        self.head = Mlp(rng, [EMBED_DIM, EMBED_DIM, EMBED_DIM],
                        hidden_act=ad.leaky_relu, final_act=None)
        self.f_e = Linear(rng, EMBED_DIM, num_classes)
        self.num_classes = num_classes

    @property
    def params(self):
        return collect_params(self.f_s, self.f_i, self.head, self.f_e)

    def encode_batch(self, rasters, is_sketch):
        """Embed a stack of crops; `is_sketch` routes each row's branch."""
        flat = np.asarray(rasters, dtype=np.float32).reshape(len(rasters), -1)
        if flat.shape[1] != CROP_PIXELS:
            raise ad.ShapeError(
                f"encode_batch: crops must have {CROP_PIXELS} pixels, got {flat.shape[1]}")
        is_sketch = np.asarray(is_sketch, dtype=bool)
        sk = np.flatnonzero(is_sketch)
        ph = np.flatnonzero(~is_sketch)
        parts = []
        if sk.size:
            parts.append(self.f_s(ad.Tensor(flat[sk])))
        if ph.size:
            parts.append(self.f_i(ad.Tensor(flat[ph])))
        merged = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
        inverse = np.argsort(np.concatenate([sk, ph]))
        return self.head(ad.gather_rows(merged, inverse))

    def encode_object(self, obj):
        """128-D embedding of a single ObjectInstance."""
        batch = self.encode_batch(obj.raster[None], [obj.domain == "sketch"])
        return batch[0]

    def logits(self, embeddings):
        return self.f_e(embeddings)

    def cce_loss(self, a, p, n, labels):
        """Sum of the three classifier cross-entropies (batch-averaged)."""
        loss = None
        for emb, lab in zip((a, p, n), labels):
            if emb.ndim == 1:
                emb = ad.reshape(emb, (1, EMBED_DIM))
            term = ad.cross_entropy_logits(self.f_e(emb), np.atleast_1d(lab)).mean()
            loss = term if loss is None else loss + term
        return loss


def triplet_loss(a, p, n, margin=TRIPLET_MARGIN):
    """max(0, m + |a-p| - |a-n|), averaged over any batch dimension."""
    return ad.relu(margin + ad.l2_distance(a, p) - ad.l2_distance(a, n)).mean()
