"""Scene graphs: objects as nodes, pairwise spatial relations as edges.

Relations come from box geometry alone: containment wins, otherwise the
dominant center-offset axis decides. Every ordered pair (i, j), i != j,
gets exactly one edge, so n objects produce n(n-1) edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import autodiff as ad


class Relation(IntEnum):
    LEFT_OF = 0
    RIGHT_OF = 1
    ABOVE = 2
    BELOW = 3
    CONTAINS = 4
    INSIDE_OF = 5


def inverse(rel):
    # Pairs sit at (2k, 2k+1), so the inverse is one bit flip away.
    return Relation(rel ^ 1)


def infer_relation(bbox_i, bbox_j):
    """Relation of object i to object j."""
    ix0, iy0, ix1, iy1 = bbox_i
    jx0, jy0, jx1, jy1 = bbox_j
    if ix0 < jx0 and iy0 < jy0 and jx1 < ix1 and jy1 < iy1:
        return Relation.CONTAINS
    if jx0 < ix0 and jy0 < iy0 and ix1 < jx1 and iy1 < jy1:
        return Relation.INSIDE_OF
    dx = (jx0 + jx1) - (ix0 + ix1)
    dy = (jy0 + jy1) - (iy0 + iy1)
    if abs(dx) >= abs(dy):
        # Coincident centers (dx == dy == 0) land here deliberately.
        return Relation.LEFT_OF if dx >= 0 else Relation.RIGHT_OF
    return Relation.ABOVE if dy > 0 else Relation.BELOW


def relation_edges(boxes):
    """(src, rel, tgt) arrays over all ordered pairs, in scan order."""
    n = len(boxes)
    src, rel, tgt = [], [], []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            src.append(i)
            rel.append(int(infer_relation(boxes[i], boxes[j])))
            tgt.append(j)
    return (np.asarray(src, dtype=np.int64), np.asarray(rel, dtype=np.int64),
            np.asarray(tgt, dtype=np.int64))


class RelationEmbedder:
    """Learnable 6x128 table, one row per relation."""

    def __init__(self, rng, dim=128):
        self.table = ad.table_param(rng, len(Relation), dim)

    def __call__(self, rel_ids):
        return ad.gather_rows(self.table, rel_ids)

    @property
    def params(self):
        return [self.table]


@dataclass
class SceneGraph:
    nodes: ad.Tensor  # (n, 128)
    src: np.ndarray
    rel: np.ndarray
    tgt: np.ndarray

    @property
    def n(self):
        return self.nodes.shape[0]


def build_graph(comp, encoder):
    """Encode every object and wire up all ordered relation edges."""
    if not comp.objects:
        raise ValueError(f"scene {comp.scene_id}: cannot build a graph with no objects")
    rasters = np.stack([o.raster for o in comp.objects])
    is_sketch = [o.domain == "sketch" for o in comp.objects]
    nodes = encoder.encode_batch(rasters, is_sketch)
    src, rel, tgt = relation_edges(comp.boxes)
    return SceneGraph(nodes=nodes, src=src, rel=rel, tgt=tgt)
