import numpy as np
import pytest

from sketchscene import attention as att
from sketchscene.autodiff import Tensor


def test_grid_cell_oracles():
    assert att.grid_cell((0.3, 0.3, 0.7, 0.7)) == 12
    assert att.grid_cell((0.0, 0.0, 0.1, 0.1)) == 0
    assert att.grid_cell((0.98, 0.98, 1.0, 1.0)) == 24
    assert att.grid_cell((0.9, 0.0, 1.0, 0.1)) == 4
    assert att.grid_cell((0.0, 0.9, 0.1, 1.0)) == 20


def test_grid_covers_all_25_cells():
    seen = set()
    for row in range(5):
        for col in range(5):
            cx, cy = (col + 0.5) / 5, (row + 0.5) / 5
            box = (cx - 0.01, cy - 0.01, cx + 0.01, cy + 0.01)
            seen.add(att.grid_cell(box))
    assert seen == set(range(25))


def test_grid_cell_constant_within_cell():
    rng = np.random.default_rng(0)
    for _ in range(200):
        row, col = rng.integers(0, 5, 2)
        cx = (col + rng.uniform(0.05, 0.95)) / 5
        cy = (row + rng.uniform(0.05, 0.95)) / 5
        w, h = rng.uniform(0.01, 0.04, 2)
        assert att.grid_cell((cx - w, cy - h, cx + w, cy + h)) == 5 * row + col


@pytest.fixture(scope="module")
def parts():
    rng = np.random.default_rng(1)
    return att.AttentionStack(rng), att.GridPositionalEncoder(rng)


def scene(rng, n):
    ccr = Tensor(rng.standard_normal((n, 128)).astype(np.float32))
    cells = rng.integers(0, 25, n).tolist()
    return ccr, cells


def test_output_shapes_and_finiteness(parts):
    stack, pos = parts
    rng = np.random.default_rng(2)
    for n in (1, 3, 5):
        ccr, cells = scene(rng, n)
        emb = att.fcr_sr_forward(ccr, cells, stack, pos)
        assert emb.sr.shape == (128,)
        assert emb.fcr.shape == (n, 128)
        assert np.isfinite(emb.sr.values).all()
        assert np.isfinite(emb.fcr.values).all()


def test_sr_invariant_fcr_equivariant_under_permutation(parts):
    stack, pos = parts
    rng = np.random.default_rng(3)
    ccr, cells = scene(rng, 5)
    base = att.fcr_sr_forward(ccr, cells, stack, pos)
    for _ in range(5):
        perm = rng.permutation(5)
        shuffled = att.fcr_sr_forward(Tensor(ccr.values[perm]),
                                      [cells[k] for k in perm], stack, pos)
        np.testing.assert_allclose(shuffled.sr.values, base.sr.values, atol=1e-5)
        np.testing.assert_allclose(shuffled.fcr.values, base.fcr.values[perm], atol=1e-5)


def test_identical_objects_in_same_cell_get_identical_fcr(parts):
    stack, pos = parts
    row = np.random.default_rng(4).standard_normal(128).astype(np.float32)
    ccr = Tensor(np.stack([row, row]))
    emb = att.fcr_sr_forward(ccr, [7, 7], stack, pos)
    np.testing.assert_array_equal(emb.fcr.values[0], emb.fcr.values[1])


def test_positions_matter_unless_disabled(parts):
    stack, pos = parts
    rng = np.random.default_rng(5)
    ccr, _ = scene(rng, 3)
    with_a = att.fcr_sr_forward(ccr, [0, 12, 24], stack, pos)
    with_b = att.fcr_sr_forward(ccr, [24, 12, 0], stack, pos)
    assert not np.allclose(with_a.sr.values, with_b.sr.values, atol=1e-6)
    off_a = att.fcr_sr_forward(ccr, [0, 12, 24], stack, pos, use_positions=False)
    off_b = att.fcr_sr_forward(ccr, [24, 12, 0], stack, pos, use_positions=False)
    np.testing.assert_array_equal(off_a.sr.values, off_b.sr.values)


def test_positional_index_range_checked(parts):
    _, pos = parts
    with pytest.raises(ValueError):
        pos(np.array([26]))


def test_cell_count_mismatch_rejected(parts):
    stack, pos = parts
    ccr, _ = scene(np.random.default_rng(6), 3)
    with pytest.raises(ValueError):
        att.fcr_sr_forward(ccr, [1, 2], stack, pos)


def _naive_plain(stack, x):
    """Per-head loop reference for the undecorated attention equation."""
    x = x.astype(np.float64)
    for layer in stack.layers:
        q = x @ layer.fq.weight.values.astype(np.float64) + layer.fq.bias.values
        k = x @ layer.fk.weight.values.astype(np.float64) + layer.fk.bias.values
        v = x @ layer.fv.weight.values.astype(np.float64) + layer.fv.bias.values
        outs = []
        for h in range(16):
            sl = slice(h * 8, (h + 1) * 8)
            scores = q[:, sl] @ k[:, sl].T
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            w = e / e.sum(axis=1, keepdims=True)
            outs.append(w @ v[:, sl])
        x = np.concatenate(outs, axis=1)
    return x


def test_plain_mode_matches_loop_reference():
    rng = np.random.default_rng(7)
    stack = att.AttentionStack(rng, plain=True)
    x = rng.standard_normal((4, 128)).astype(np.float32)
    got = stack.forward_group(Tensor(x.reshape(1, 4, 128))).values[0]
    np.testing.assert_allclose(got, _naive_plain(stack, x), atol=1e-4)


def test_gradients_reach_ccr_and_positional_table(parts):
    stack, pos = parts
    rng = np.random.default_rng(8)
    ccr = Tensor(rng.standard_normal((3, 128)).astype(np.float32), requires_grad=True)
    pos.table.zero_grad()
    emb = att.fcr_sr_forward(ccr, [1, 2, 3], stack, pos)
    ((emb.sr * emb.sr).mean() + (emb.fcr * emb.fcr).mean()).backward()
    assert ccr.grad is not None and np.linalg.norm(ccr.grad) > 0
    assert pos.table.grad is not None and np.linalg.norm(pos.table.grad) > 0
