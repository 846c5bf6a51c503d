"""Graph stage: per-edge MLPs with average pooling back onto objects.

Each layer concatenates <v_i, r_ij, v_j> per edge, maps it through one
384-wide fc layer, and splits the result into two candidate node
vectors plus the updated edge vector. All candidates describing the
same object (from either endpoint) are averaged and passed through a
node fc layer. Objects with no edges skip pooling and keep their own
vector. The stack is shared between sketch- and photo-derived graphs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .graph import RelationEmbedder, SceneGraph
from .layers import Linear, collect_params

NUM_LAYERS = 6
DIM = 128


class GnnStack:
    def __init__(self, rng, num_layers=NUM_LAYERS, dim=DIM):
        self.relations = RelationEmbedder(rng, dim)
        self.edge_fc = [Linear(rng, 3 * dim, 3 * dim) for _ in range(num_layers)]
        self.node_fc = [Linear(rng, dim, dim) for _ in range(num_layers)]
        self.dim = dim

    @property
    def params(self):
        return collect_params(self.relations, *self.edge_fc, *self.node_fc)

    def forward_batch(self, nodes, src, rel, tgt):
        """Run the stack over a flat node tensor with global edge indices.

        Multiple scenes can share one call: edges only ever connect
        nodes of the same scene, so pooling never mixes scenes.
        """
        if nodes.shape[0] == 0:
            raise ValueError("gnn: empty node list")
        n = nodes.shape[0]
        v = nodes
        if len(src) == 0:
            for k in range(len(self.node_fc)):
                v = ad.relu(self.node_fc[k](v))
            return v
        seg = np.concatenate([src, tgt])
        has_edge = (np.bincount(seg, minlength=n) > 0)
        keep = ad.Tensor(has_edge.astype(np.float32)[:, None])
        skip = ad.Tensor((~has_edge).astype(np.float32)[:, None])
        r = self.relations(rel)
        d = self.dim
        for k in range(len(self.edge_fc)):
            vs = ad.gather_rows(v, src)
            vt = ad.gather_rows(v, tgt)
            out = ad.relu(self.edge_fc[k](ad.concat([vs, r, vt], axis=1)))
            r = out[:, d:2 * d]
            candidates = ad.concat([out[:, :d], out[:, 2 * d:]], axis=0)
            pooled = ad.segment_mean(candidates, seg, n)
            h = pooled * keep + v * skip
            v = ad.relu(self.node_fc[k](h))
        return v

    def ccr_forward(self, g: SceneGraph):
        """Per-object CCR vectors for one scene graph."""
        return self.forward_batch(g.nodes, g.src, g.rel, g.tgt)
