"""Attention stage: scene representation and per-object freely
correlated representation.

The object sequence is prefixed with a zero vector; grid-cell
positional encodings (plus a dedicated index for the prefix slot) are
added once, before the first layer. After 3 layers of 16-head
attention, slot 0 is the scene embedding (SR) and the remaining slots
are the per-object FCR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import LayerNorm, Linear, Mlp, collect_params

NUM_LAYERS = 3
NUM_HEADS = 16
DIM = 128
HEAD_DIM = DIM // NUM_HEADS
GRID = 5
SR_SLOT_INDEX = GRID * GRID  # 25: positional index reserved for slot 0


def grid_cell(bbox):
    """Row-major 5x5 cell index of the box center, clamped to the grid."""
    x0, y0, x1, y1 = bbox
    col = min(max(int((x0 + x1) / 2 * GRID), 0), GRID - 1)
    row = min(max(int((y0 + y1) / 2 * GRID), 0), GRID - 1)
    return GRID * row + col


class GridPositionalEncoder:
    """Learnable table over the 25 grid cells plus the SR slot."""

    def __init__(self, rng, dim=DIM):
        self.table = ad.table_param(rng, GRID * GRID + 1, dim)

    def __call__(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() > SR_SLOT_INDEX):
            raise ValueError(f"positional index outside [0, {SR_SLOT_INDEX}]")
        return ad.gather_rows(self.table, idx)

    @property
    def params(self):
        return [self.table]


class _Layer:
    def __init__(self, rng, dim):
        self.fq = Linear(rng, dim, dim)
        self.fk = Linear(rng, dim, dim)
        self.fv = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ff = Mlp(rng, [dim, 2 * dim, dim], hidden_act=ad.relu)

    @property
    def params(self):
        return collect_params(self.fq, self.fk, self.fv, self.out,
                              self.norm1, self.norm2, self.ff)


@dataclass
class SceneEmbedding:
    sr: ad.Tensor  # (128,)
    fcr: ad.Tensor  # (n, 128)


class AttentionStack:
    """3 layers, 16 heads of width 8.

    `plain` drops the residual/normalization/feed-forward dressing and
    the 1/sqrt(d) score scaling, leaving only softmax(QK^T)V per head.
    """

    def __init__(self, rng, dim=DIM, plain=False):
        self.layers = [_Layer(rng, dim) for _ in range(NUM_LAYERS)]
        self.plain = plain
        self.dim = dim

    @property
    def params(self):
        return collect_params(*self.layers)

    def _heads(self, x, g, s):
        return ad.transpose(ad.reshape(x, (g, s, NUM_HEADS, HEAD_DIM)), (0, 2, 1, 3))

    def forward_group(self, x):
        """Attend over a (groups, slots, dim) tensor of same-length scenes."""
        g, s, _ = x.shape
        for layer in self.layers:
            qh = self._heads(layer.fq(x), g, s)
            kh = self._heads(layer.fk(x), g, s)
            vh = self._heads(layer.fv(x), g, s)
            scores = qh @ ad.transpose(kh, (0, 1, 3, 2))
            if not self.plain:
                scores = scores * (1.0 / np.sqrt(HEAD_DIM))
            ctx = ad.softmax(scores) @ vh
            merged = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (g, s, self.dim))
            if self.plain:
                x = merged
            else:
                x = layer.norm1(x + layer.out(merged))
                x = layer.norm2(x + layer.ff(x))
        return x


def scene_slots(ccr, cells, positions: GridPositionalEncoder, use_positions=True):
    """Prefix a zero slot and add positional encodings: input to layer 0."""
    n = ccr.shape[0]
    if len(cells) != n:
        raise ValueError(f"{n} objects but {len(cells)} grid cells")
    zero = ad.Tensor(np.zeros((1, ccr.shape[1]), dtype=np.float32))
    q = ad.concat([zero, ccr], axis=0)
    if not use_positions:
        return q
    e = positions(np.array([SR_SLOT_INDEX] + list(cells), dtype=np.int64))
    return q + e


def fcr_sr_forward(ccr, cells, stack: AttentionStack, positions: GridPositionalEncoder,
                   use_positions=True):
    """SceneEmbedding for one scene: slot 0 is SR, the rest FCR."""
    q = scene_slots(ccr, cells, positions, use_positions)
    out = stack.forward_group(ad.reshape(q, (1,) + q.shape))
    flat = ad.reshape(out, q.shape)
    return SceneEmbedding(sr=flat[0], fcr=flat[1:])
