import numpy as np
import pytest

from sketchscene import autodiff as ad
from sketchscene import graph as sg
from sketchscene.autodiff import Tensor
from sketchscene.dataset import Composition, ObjectInstance
from sketchscene.gnn import GnnStack
from sketchscene.objects import ObjectEncoder


def random_box(rng):
    x0, y0 = rng.uniform(0, 0.8, 2)
    w, h = rng.uniform(0.05, 0.2, 2)
    return (float(x0), float(y0), float(min(x0 + w, 1.0)), float(min(y0 + h, 1.0)))


def test_relation_examples():
    assert sg.infer_relation((0, 0, 0.2, 0.2), (0.8, 0, 1, 0.2)) == sg.Relation.LEFT_OF
    assert sg.infer_relation((0.8, 0, 1, 0.2), (0, 0, 0.2, 0.2)) == sg.Relation.RIGHT_OF
    assert sg.infer_relation((0, 0, 1, 1), (0.4, 0.4, 0.6, 0.6)) == sg.Relation.CONTAINS
    assert sg.infer_relation((0.4, 0.4, 0.6, 0.6), (0, 0, 1, 1)) == sg.Relation.INSIDE_OF
    assert sg.infer_relation((0.4, 0.0, 0.6, 0.2), (0.4, 0.7, 0.6, 0.9)) == sg.Relation.ABOVE
    # Tie |dx| == |dy| resolves to the horizontal pair.
    assert sg.infer_relation((0, 0, 0.1, 0.1), (0.5, 0.5, 0.6, 0.6)) == sg.Relation.LEFT_OF


def test_relations_come_in_inverse_pairs():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        a, b = random_box(rng), random_box(rng)
        assert sg.infer_relation(b, a) == sg.inverse(sg.infer_relation(a, b))


def test_relations_scale_invariant():
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b = random_box(rng), random_box(rng)
        s = rng.uniform(0.2, 0.9)

        def scaled(box):
            return tuple(0.5 + (v - 0.5) * s for v in box)

        assert sg.infer_relation(a, b) == sg.infer_relation(scaled(a), scaled(b))


def make_comp(rng, n, domain="photo"):
    objs = []
    for i in range(n):
        raster = rng.random((32, 32)).astype(np.float32)
        objs.append(ObjectInstance(class_id=int(rng.integers(0, 8)), domain=domain,
                                   raster=raster, mask=raster > 0.5, bbox=random_box(rng)))
    return Composition(scene_id="t", split="train", kind=domain, background=8, objects=objs)


@pytest.fixture(scope="module")
def encoder():
    return ObjectEncoder(np.random.default_rng(10))


@pytest.fixture(scope="module")
def stack():
    return GnnStack(np.random.default_rng(11))


def test_edge_count_is_n_times_n_minus_1(encoder):
    rng = np.random.default_rng(2)
    for n in (1, 2, 3, 5):
        g = sg.build_graph(make_comp(rng, n), encoder)
        assert g.nodes.shape == (n, 128)
        assert len(g.src) == n * (n - 1)
        pairs = set(zip(g.src.tolist(), g.tgt.tolist()))
        assert len(pairs) == n * (n - 1)
        assert all(i != j for i, j in pairs)


def test_relation_embedder_rows_distinct():
    emb = sg.RelationEmbedder(np.random.default_rng(3))
    rows = emb(np.arange(6)).values
    for i in range(6):
        for j in range(i + 1, 6):
            assert not np.array_equal(rows[i], rows[j])


def _naive_ccr(stack, node_values, boxes):
    """Loop reference for the layer equations, pooled in edge-scan order."""
    n = len(node_values)
    v = [row.astype(np.float64) for row in node_values]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    r = {(i, j): stack.relations.table.values[int(sg.infer_relation(boxes[i], boxes[j]))]
         .astype(np.float64) for i, j in pairs}
    for k in range(len(stack.edge_fc)):
        w1 = stack.edge_fc[k].weight.values.astype(np.float64)
        b1 = stack.edge_fc[k].bias.values.astype(np.float64)
        w2 = stack.node_fc[k].weight.values.astype(np.float64)
        b2 = stack.node_fc[k].bias.values.astype(np.float64)
        cand = {i: [] for i in range(n)}
        r_next = {}
        for i, j in pairs:
            out = np.maximum(np.concatenate([v[i], r[(i, j)], v[j]]) @ w1 + b1, 0)
            cand[i].append(out[:128])
            r_next[(i, j)] = out[128:256]
            cand[j].append(out[256:])
        r = r_next
        h = [np.mean(cand[i], axis=0) if cand[i] else v[i] for i in range(n)]
        v = [np.maximum(h[i] @ w2 + b2, 0) for i in range(n)]
    return np.stack(v)


def test_ccr_matches_loop_reference(encoder, stack):
    rng = np.random.default_rng(4)
    for n in (1, 2, 4):
        comp = make_comp(rng, n)
        g = sg.build_graph(comp, encoder)
        got = stack.ccr_forward(g).values
        want = _naive_ccr(stack, g.nodes.values, comp.boxes)
        assert got.shape == (n, 128)
        np.testing.assert_allclose(got, want, atol=2e-5)


def test_single_object_skips_edge_mlp(stack):
    x = Tensor(np.random.default_rng(5).standard_normal((1, 128)).astype(np.float32))
    out = stack.forward_batch(x, np.array([], dtype=np.int64),
                              np.array([], dtype=np.int64), np.array([], dtype=np.int64))
    v = x
    for k in range(6):
        v = ad.relu(stack.node_fc[k](v))
    np.testing.assert_array_equal(out.values, v.values)


def test_permutation_equivariance_is_bit_exact(encoder, stack):
    rng = np.random.default_rng(6)
    comp = make_comp(rng, 5)
    g = sg.build_graph(comp, encoder)
    base = stack.ccr_forward(g).values
    for _ in range(5):
        perm = rng.permutation(5)
        shuffled = Composition(scene_id="t", split="train", kind="photo", background=8,
                               objects=[comp.objects[k] for k in perm])
        got = stack.ccr_forward(sg.build_graph(shuffled, encoder)).values
        np.testing.assert_array_equal(got, base[perm])


def test_gradients_reach_inputs_and_relation_table(encoder, stack):
    rng = np.random.default_rng(7)
    g = sg.build_graph(make_comp(rng, 3), encoder)
    stack.relations.table.zero_grad()
    out = stack.ccr_forward(g)
    (out * out).mean().backward()
    assert np.linalg.norm(stack.relations.table.grad) > 0
    assert any(p.grad is not None and np.linalg.norm(p.grad) > 0
               for p in encoder.params)


def test_empty_graph_rejected(stack):
    with pytest.raises(ValueError):
        stack.forward_batch(Tensor(np.zeros((0, 128), dtype=np.float32)),
                            np.array([]), np.array([]), np.array([]))
