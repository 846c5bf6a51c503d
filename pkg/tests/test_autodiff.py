import numpy as np
import pytest

from sketchscene import autodiff as ad
from sketchscene.autodiff import Tensor


def t64(arr, grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


def rand64(rng, shape):
    return t64(rng.standard_normal(shape))


# Each entry: name -> callable building a scalar from one float64 tensor.
PRIMITIVES = {
    "add": lambda x: (x + 1.5).sum(),
    "sub": lambda x: (2.0 - x).sum(),
    "mul": lambda x: (x * x).sum(),
    "div": lambda x: (x / (x * x + 2.0)).sum(),
    "neg": lambda x: (-x * 3.0).sum(),
    "pow": lambda x: ((x * x + 1.0) ** 1.5).sum(),
    "exp": lambda x: ad.exp(x * 0.5).sum(),
    "log": lambda x: ad.log(x * x + 1.0).sum(),
    "sqrt": lambda x: ad.sqrt(x * x + 1.0).sum(),
    "relu": lambda x: ad.relu(x).sum(),
    "leaky_relu": lambda x: ad.leaky_relu(x).sum(),
    "sigmoid": lambda x: ad.sigmoid(x).sum(),
    "tanh": lambda x: ad.tanh(x).sum(),
    "clamp_min": lambda x: ad.clamp_min(x, 0.25).sum(),
    "softmax": lambda x: (ad.softmax(x) * ad.softmax(x)).sum(),
    "matmul": lambda x: (x @ ad.transpose(x, (1, 0))).sum(),
    "sum_axis": lambda x: (x.sum(axis=0) * 2.0).sum(),
    "mean": lambda x: x.mean(),
    "reshape": lambda x: (x.reshape(-1) * x.reshape(-1)).sum(),
    "transpose": lambda x: (ad.transpose(x, (1, 0)) * 0.5).sum(),
    "narrow": lambda x: (x[1:, :2] * 3.0).sum(),
    "concat": lambda x: ad.concat([x, x * 2.0], axis=1).sum(),
    "squared_error": lambda x: ad.squared_error(x, x * 0.5 + 0.1).sum(),
    "maximum": lambda x: ad.maximum(x, x * -0.5 + 0.3).sum(),
    "minimum": lambda x: ad.minimum(x, x * -0.5 + 0.3).sum(),
    "absolute": lambda x: ad.absolute(x * 2.0 + 0.05).sum(),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_gradients_match_finite_differences(name):
    f = PRIMITIVES[name]
    rng = np.random.default_rng(hash(name) % (2**32))
    for trial in range(10):
        x = rand64(rng, (3, 4))
        if name in ("relu", "leaky_relu", "clamp_min"):
            # Keep probes away from the kink.
            x.values[np.abs(x.values) < 0.05] += 0.1
            x.values[np.abs(x.values - 0.25) < 0.05] += 0.1
        err = ad.grad_check(f, x)
        assert err < 1e-4, f"{name} trial {trial}: rel err {err}"


@pytest.mark.parametrize("name,f", [
    ("l2_distance", lambda x: ad.l2_distance(x, Tensor(np.linspace(0.5, 2.0, 12).reshape(3, 4))).sum()),
    ("l1_distance", lambda x: ad.l1_distance(x, Tensor(np.linspace(0.5, 2.0, 12).reshape(3, 4))).sum()),
    ("pairwise_l2", lambda x: ad.pairwise_l2(x, Tensor(np.linspace(-1.0, 1.0, 8).reshape(2, 4))).sum()),
])
def test_distance_gradients(name, f):
    rng = np.random.default_rng(99)
    for trial in range(10):
        x = rand64(rng, (3, 4))
        err = ad.grad_check(f, x)
        assert err < 1e-4, f"{name} trial {trial}: rel err {err}"


def test_gather_and_segment_gradients():
    rng = np.random.default_rng(7)
    idx = np.array([2, 0, 2, 1])
    seg = np.array([0, 0, 1, 2])

    def via_gather(x):
        return (ad.gather_rows(x, idx) * 1.5).sum()

    def via_segment(x):
        return (ad.segment_mean(x, seg, 4) * 2.0).sum()

    for _ in range(10):
        x = rand64(rng, (4, 3))
        assert ad.grad_check(via_gather, x) < 1e-4
        assert ad.grad_check(via_segment, x) < 1e-4


def test_cross_entropy_gradient():
    rng = np.random.default_rng(11)
    labels = np.array([0, 2, 1])

    def f(x):
        return ad.cross_entropy_logits(x, labels).mean()

    for _ in range(10):
        assert ad.grad_check(f, rand64(rng, (3, 4))) < 1e-4


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    s = ad.softmax(Tensor(rng.standard_normal((5, 7)).astype(np.float32) * 10))
    np.testing.assert_allclose(s.values.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_cce_uniform_gradient():
    # Three equal logits, true class 0: dL/dz = softmax - onehot.
    x = t64([[1.0, 1.0, 1.0]])
    loss = ad.cross_entropy_logits(x, np.array([0])).sum()
    loss.backward()
    np.testing.assert_allclose(x.grad, [[-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]], atol=1e-12)


def test_l2_distance_of_identical_vectors_is_exactly_zero():
    v = Tensor(np.array([[0.1, 0.2, 0.3]], dtype=np.float32))
    assert ad.l2_distance(v, Tensor(v.values.copy())).values[0] == 0.0


def test_matmul_ones_oracle():
    a = Tensor(np.ones((2, 3), dtype=np.float32), requires_grad=True)
    b = Tensor(np.ones((3, 2), dtype=np.float32), requires_grad=True)
    out = a @ b
    np.testing.assert_array_equal(out.values, np.full((2, 2), 3.0, dtype=np.float32))
    out.sum().backward()
    np.testing.assert_array_equal(a.grad, np.full((2, 3), 2.0))
    np.testing.assert_array_equal(b.grad, np.full((3, 2), 2.0))


def test_diamond_graph_accumulates_both_paths():
    # y = x*x + x*x at x=3: dy/dx = 12.
    x = t64(3.0)
    y = x * x + x * x
    y.backward()
    assert float(x.grad) == pytest.approx(12.0)


def test_deep_chain_does_not_hit_recursion_limit():
    x = t64(1.0)
    y = x
    for _ in range(20000):
        y = y * 1.0
    y.backward()
    assert float(x.grad) == pytest.approx(1.0)


def test_backward_requires_scalar_root():
    x = t64([1.0, 2.0])
    with pytest.raises(ad.ShapeError):
        (x * 2.0).backward()


def test_shape_errors_name_the_op_and_shapes():
    with pytest.raises(ad.ShapeError, match="matmul.*\\(2, 3\\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError, match="add"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_broadcast_unbroadcast_roundtrip():
    a = t64(np.ones((3, 1)))
    b = t64(np.ones((1, 4)))
    (a * b).sum().backward()
    np.testing.assert_array_equal(a.grad, np.full((3, 1), 4.0))
    np.testing.assert_array_equal(b.grad, np.full((1, 4), 3.0))


def test_segment_mean_empty_segment_is_zero():
    x = Tensor(np.ones((2, 3), dtype=np.float32))
    out = ad.segment_mean(x, np.array([0, 2]), 4)
    np.testing.assert_array_equal(out.values[1], 0.0)
    np.testing.assert_array_equal(out.values[3], 0.0)


def test_segment_mean_bit_stable_under_permutation():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((40, 16)).astype(np.float32)
    seg = rng.integers(0, 5, size=40)
    base = ad.segment_mean(Tensor(x), seg, 5).values
    for _ in range(20):
        perm = rng.permutation(40)
        got = ad.segment_mean(Tensor(x[perm]), seg[perm], 5).values
        np.testing.assert_array_equal(got, base)


def test_adam_hand_example():
    # One step from 1.0 with grad 1.0, lr 0.1: bias correction makes
    # m_hat=1, v_hat=1, so the update is lr/(1+eps) ~ 0.1.
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    opt = ad.Adam([p], lr=0.1)
    opt.step()
    assert p.values[0] == pytest.approx(0.9, abs=1e-6)


def test_adam_skips_nonfinite_step_but_counts_it():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.array([np.nan], dtype=np.float32)
    assert opt.step() is False
    assert opt.step_count == 1
    assert p.values[0] == 1.0
    np.testing.assert_array_equal(opt.m[0], 0.0)


def test_adam_defaults_match_training_configuration():
    opt = ad.Adam([Tensor(np.zeros(1), requires_grad=True)], lr=1e-4)
    assert (opt.beta1, opt.beta2, opt.eps) == (0.5, 0.999, 1e-9)


def test_default_dtype_is_float32():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    assert (Tensor([1.0]) + Tensor([2.0])).dtype == np.float32


def test_fixed_seed_init_is_bit_deterministic():
    a = ad.he_param(np.random.default_rng(42), 64, (64, 32)).values
    b = ad.he_param(np.random.default_rng(42), 64, (64, 32)).values
    np.testing.assert_array_equal(a, b)


def test_grad_check_rejects_bad_h():
    with pytest.raises(ValueError):
        ad.grad_check(lambda x: x.sum(), t64([1.0]), h=1e-6)
