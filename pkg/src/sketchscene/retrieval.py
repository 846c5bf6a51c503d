"""Scene-level contrastive loss, the embedding index, and recall@k.

The index is an exhaustive L2 scanner over one 128-D vector per corpus
scene; at desk scale (hundreds of scenes) nothing faster is warranted.
Ties in distance rank by scene id so results never depend on insertion
order.
"""

from __future__ import annotations

import json
import struct
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from . import autodiff as ad

EMBED_DIM = 128


def contrastive_loss(x_s, x_i, x_sn=None, unclamped=False):
    """Batch-pairwise scene contrastive loss.

    Matched pairs (the diagonal) are pulled together, unmatched pairs
    pushed toward distance 1, and swap-negative distances pushed up.
    Both negative terms are hinged at margin 1 by default; `unclamped`
    uses the raw linear forms, which reward pushing every non-pair
    apart without bound and eventually separate the two domains into
    disjoint clusters (scene recall decays toward chance with long
    training), so the hinge is the trained default.
    """
    if x_s.shape[0] == 0:
        raise ValueError("contrastive_loss: empty batch")
    if x_s.shape != x_i.shape:
        raise ad.ShapeError(f"contrastive_loss: {x_s.shape} vs {x_i.shape}")
    b = x_s.shape[0]
    d_si = ad.pairwise_l2(x_s, x_i)
    y = np.eye(b, dtype=np.float32)
    pos = ad.Tensor(y)
    neg = ad.Tensor(1.0 - y)
    gap = (1.0 - d_si) if unclamped else ad.relu(1.0 - d_si)
    loss = (0.5 * pos * d_si + 0.25 * neg * gap).mean()
    if x_sn is not None:
        d_sn = ad.pairwise_l2(x_s, x_sn)
        if unclamped:
            loss = loss - 0.25 * d_sn.mean()
        else:
            loss = loss + 0.25 * ad.relu(1.0 - d_sn).mean()
    return loss


class EmbeddingIndex:
    """Immutable scene-id -> 128-D vector table with exhaustive search."""

    def __init__(self, scene_ids, vectors):
        vectors = np.asarray(vectors, dtype=np.float32)
        if len(scene_ids) != len(vectors):
            raise ValueError(f"{len(scene_ids)} ids vs {len(vectors)} vectors")
        if len(scene_ids) == 0:
            raise ValueError("empty index")
        if vectors.ndim != 2 or vectors.shape[1] != EMBED_DIM:
            raise ValueError(f"vectors must be (n, {EMBED_DIM}), got {vectors.shape}")
        # Canonical id order: searches ignore insertion order entirely.
        order = sorted(range(len(scene_ids)), key=lambda i: scene_ids[i])
        self.scene_ids = [scene_ids[i] for i in order]
        self.vectors = vectors[order]

    def __len__(self):
        return len(self.scene_ids)

    def search(self, query_vec, k):
        """Top-k (scene_id, distance), ascending distance, ties by id."""
        if k > len(self):
            warnings.warn(f"k={k} exceeds corpus size {len(self)}; truncating")
            k = len(self)
        q = np.asarray(query_vec, dtype=np.float32)
        dists = np.sqrt(np.maximum(((self.vectors - q) ** 2).sum(axis=1), 0.0))
        # ids are pre-sorted, so a stable sort on distance ranks ties by id.
        order = np.argsort(dists, kind="stable")[:k]
        return [(self.scene_ids[i], float(dists[i])) for i in order]

    def rank_of(self, query_vec, scene_id):
        """1-based rank of `scene_id` in the full ranking for the query."""
        full = self.search(query_vec, len(self))
        for pos, (sid, _) in enumerate(full, start=1):
            if sid == scene_id:
                return pos
        raise KeyError(f"scene {scene_id} not in index")

    def save(self, path):
        ids_blob = json.dumps(self.scene_ids).encode()
        with open(path, "wb") as f:
            f.write(struct.pack("<II", len(self), EMBED_DIM))
            f.write(np.ascontiguousarray(self.vectors).tobytes())
            f.write(ids_blob)

    @classmethod
    def load(cls, path):
        blob = Path(path).read_bytes()
        if len(blob) < 8:
            raise ValueError(f"{path}: not an index file")
        count, dim = struct.unpack_from("<II", blob, 0)
        if dim != EMBED_DIM:
            raise ValueError(f"{path}: dim {dim}, expected {EMBED_DIM}")
        end = 8 + count * dim * 4
        vectors = np.frombuffer(blob[8:end], dtype="<f4").reshape(count, dim)
        scene_ids = json.loads(blob[end:].decode())
        return cls(scene_ids, vectors.copy())


def build_index(corpus, model):
    """Photo-domain SR per corpus scene."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("build_index: empty corpus")
    ids = [c.scene_id for c in corpus]
    vectors = np.stack([model.scene_embedding(c) for c in corpus])
    return EmbeddingIndex(ids, vectors)


def search(index: EmbeddingIndex, query, model, k=10):
    """Embed a query composition (any object domains) and scan the index."""
    return index.search(model.scene_embedding(query), k)


def evaluate_retrieval(index: EmbeddingIndex, queries, model, ks=(1, 5, 10)):
    """recall@k over queries whose paired scene lives in the index."""
    known = set(index.scene_ids)
    ranks = []
    skipped = 0
    for q in queries:
        if q.paired_scene_id is None or q.paired_scene_id not in known:
            skipped += 1
            continue
        ranks.append(index.rank_of(model.scene_embedding(q), q.paired_scene_id))
    report = {f"recall@{k}": (float(np.mean([r <= k for r in ranks])) if ranks else 0.0)
              for k in ks}
    report["num_queries"] = len(ranks)
    report["skipped"] = skipped
    report["mean_rank"] = float(np.mean(ranks)) if ranks else 0.0
    return report


def evaluate_class_precision(index: EmbeddingIndex, queries, corpus, model, ks=(1, 5, 10)):
    """Precision@k where a hit shares the query's exact class multiset."""
    multisets = {c.scene_id: Counter(c.class_ids) for c in corpus}
    per_k = {k: [] for k in ks}
    for q in queries:
        want = Counter(q.class_ids)
        results = index.search(model.scene_embedding(q), max(ks))
        for k in ks:
            top = results[:k]
            per_k[k].append(sum(multisets[sid] == want for sid, _ in top) / k)
    report = {f"precision@{k}": (float(np.mean(v)) if v else 0.0)
              for k, v in per_k.items()}
    report["num_queries"] = len(queries)
    return report
