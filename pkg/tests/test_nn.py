import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajcnn.errors import CheckpointError, ShapeError, TrainingError
from trajcnn.nn import (
    Adam, LayerSpec, adam_step, grad_check, layers as L, load_into, lr_scheduler_step, read_checkpoint,
    save_checkpoint,
)
from trajcnn.nn.functional import conv2d, conv_transpose2d
from trajcnn.nn.gradcheck import LAYER_KINDS, check_module


def naive_conv(x, w, b, stride, pad):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Ho, Wo = (H + 2 * pad - k) // stride + 1, (W + 2 * pad - k) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    s = b[o]
                    for c in range(C):
                        for u in range(k):
                            for v in range(k):
                                s += w[o, c, u, v] * xp[n, c, i * stride + u, j * stride + v]
                    out[n, o, i, j] = s
    return out


def test_conv_identity_and_sum():
    x = np.random.default_rng(0).random((2, 3, 4, 4))
    w = np.zeros((3, 3, 1, 1))
    w[np.arange(3), np.arange(3)] = 1
    np.testing.assert_array_equal(conv2d(x, w, np.zeros(3))[0], x)
    y, _ = conv2d(np.array([[[[1.0, 2], [3, 4]]]]), np.ones((1, 1, 2, 2)))
    assert y.shape == (1, 1, 1, 1) and y[0, 0, 0, 0] == 10


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1), (1, 1)])
def test_conv_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(1, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    np.testing.assert_allclose(conv2d(x, w, b, stride, pad)[0], naive_conv(x, w, b, stride, pad), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(3, 1, 0, 8), (3, 1, 1, 8), (4, 2, 1, 8), (3, 2, 0, 9), (3, 3, 0, 9)]))
def test_adjointness(seed, kspn):
    k, s, p, n = kspn
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 3, n, n))
    w = rng.normal(size=(4, 3, k, k))
    y_shape = conv2d(x, w, None, s, p)[0].shape
    y = rng.normal(size=y_shape)
    lhs = np.sum(conv2d(x, w, None, s, p)[0] * y)
    # conv_transpose weight layout is [Cin, Cout, k, k] = [4, 3, k, k]
    xt = conv_transpose2d(y, w, None, s, p)[0]
    assert abs(lhs - np.sum(x * xt)) < 1e-9 * max(1.0, abs(lhs))


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_grad_check_every_layer(kind):
    assert grad_check(LayerSpec(kind)) < 1e-4


def test_grad_check_documented_bounds():
    assert grad_check(LayerSpec("linear")) < 1e-6
    assert grad_check(LayerSpec("conv2d", {"stride": 2, "padding": 1})) < 1e-4
    assert grad_check(LayerSpec("sigmoid")) < 1e-7


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec("pool")
    with pytest.raises(ValueError):
        LayerSpec("conv2d", {"stride": 0})


def test_per_sample_grads_sum_to_batch_grad():
    rng = np.random.default_rng(2)
    net = L.Sequential(L.Conv2d(2, 3, 3, 2, 1, dtype=np.float64, rng=rng), L.GroupNorm(1, 3, dtype=np.float64),
                       L.LeakyReLU(0.2), L.ConvTranspose2d(3, 2, 4, 2, 1, dtype=np.float64, rng=rng))
    x = rng.normal(size=(5, 2, 7, 7))
    g = rng.normal(size=net.forward(x).shape)
    net.zero_grad()
    net.backward(g, "batch")
    batch = [p.grad.copy() for p in net.parameters()]
    net.forward(x)
    net.backward(g, "per_sample")
    for p, ref in zip(net.parameters(), batch):
        np.testing.assert_allclose(p.grad_sample.sum(axis=0), ref, atol=1e-12)


def test_leaky_relu_and_batchnorm_constant():
    lr = L.LeakyReLU(0.2)
    assert lr.forward(np.array([-2.0]))[0] == pytest.approx(-0.4)
    assert lr.backward(np.array([1.0]))[0] == pytest.approx(0.2)
    bn = L.BatchNorm2d(2, dtype=np.float64)
    bn.bias.data[:] = [0.3, -0.1]
    out = bn.forward(np.full((4, 2, 3, 3), 5.0))
    np.testing.assert_allclose(out[:, 0], 0.3)
    np.testing.assert_allclose(out[:, 1], -0.1)


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(3)
    bn = L.BatchNorm2d(3, dtype=np.float64)
    for _ in range(200):
        bn.forward(rng.normal(2.0, 3.0, (16, 3, 4, 4)))
    bn.eval()
    x = rng.normal(2.0, 3.0, (2, 3, 4, 4))
    expected = (x - bn.running_mean.reshape(1, -1, 1, 1)) / np.sqrt(bn.running_var.reshape(1, -1, 1, 1) + bn.eps)
    np.testing.assert_allclose(bn.forward(x), expected, atol=1e-12)
    np.testing.assert_allclose(bn.running_mean, 2.0, atol=0.2)


def test_shape_errors():
    conv = L.Conv2d(3, 4, 3, dtype=np.float64)
    with pytest.raises(ShapeError, match="3"):
        conv.forward(np.zeros((1, 2, 5, 5)))
    with pytest.raises(ShapeError):
        L.Linear(4, 2, dtype=np.float64).forward(np.zeros((3, 5)))


def test_adam_zero_grad_and_first_step():
    p = np.array([1.0, -2.0, 3.0])
    state = {}
    adam_step([p], [np.zeros(3)], state, lr=0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])
    p = np.array([1.0, -2.0, 3.0])
    adam_step([p], [np.array([0.5, -3.0, 1e-3])], {}, lr=0.1)
    np.testing.assert_allclose(p, [0.9, -1.9, 2.9], atol=1e-4)
    with pytest.raises(TrainingError):
        adam_step([p], [np.array([np.nan, 0, 0])], {}, lr=0.1)


def test_adam_quadratic():
    x = np.array([1.0])
    state = {}
    traj = []
    for _ in range(100):
        adam_step([x], [2 * x], state, lr=0.1)
        traj.append(abs(x[0]))
    # after burn-in the iterate oscillates with a shrinking envelope
    peaks = [max(traj[i:i + 10]) for i in range(20, 90, 10)]
    assert all(b <= a for a, b in zip(peaks, peaks[1:]))
    assert traj[-1] < 0.1


def test_adam_class_uses_grad():
    t = L.Tensor(np.array([1.0, 1.0]))
    opt = Adam([t], lr=0.01)
    t.grad = np.array([1.0, -1.0])
    opt.step()
    np.testing.assert_allclose(t.data, [0.99, 1.01], atol=1e-6)
    opt.zero_grad()
    assert t.grad is None or np.all(t.grad == 0)


def test_lr_scheduler():
    assert lr_scheduler_step(2e-4, 3999, [4000], 0.1) == 2e-4
    assert lr_scheduler_step(2e-4, 4000, [4000], 0.1) == pytest.approx(2e-5)
    assert lr_scheduler_step(2e-4, 10**6, [], 0.1) == 2e-4
    assert lr_scheduler_step(1.0, 25, [10, 20], 0.5) == 0.25
    with pytest.raises(ValueError):
        lr_scheduler_step(1.0, 1, [20, 10], 0.5)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    net = L.Sequential(L.Conv2d(4, 8, 3, rng=rng), L.BatchNorm2d(8), L.ReLU())
    net.forward(rng.normal(size=(3, 4, 5, 5)).astype(np.float32))
    save_checkpoint(tmp_path / "m.ckpt", net, {"note": "x"})
    meta, arrays = read_checkpoint(tmp_path / "m.ckpt")
    assert meta == {"note": "x"}
    other = L.Sequential(L.Conv2d(4, 8, 3, rng=np.random.default_rng(9)), L.BatchNorm2d(8), L.ReLU())
    load_into(other, arrays)
    for (n1, a), (n2, b) in zip(net.named_parameters(), other.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(a.data, b.data)
    for (_, a), (_, b) in zip(net.named_buffers(), other.named_buffers()):
        np.testing.assert_array_equal(a, b)
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[4] = 99
    (tmp_path / "v.ckpt").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(tmp_path / "v.ckpt")


def test_tangent_pass_matches_finite_difference_of_input_gradient():
    # d/dtheta <v, grad_x f(x)> via the tangent pass, against central differences
    rng = np.random.default_rng(5)
    net = L.Sequential(L.Conv2d(2, 3, 3, 2, 1, dtype=np.float64, rng=rng), L.LeakyReLU(0.2),
                       L.Conv2d(3, 1, 3, 1, 0, dtype=np.float64, rng=rng), L.Reshape(1))
    x = rng.normal(size=(2, 2, 5, 5))
    v = rng.normal(size=x.shape)

    def inner():
        out = net.forward(x)
        return float(np.sum(v * net.backward(np.ones_like(out), None)))

    net.zero_grad()
    inner()
    t = net.tangent_forward(v)
    net.tangent_backward(np.ones_like(t))
    for p in net.parameters():
        # biases do not influence the input gradient, so they receive nothing
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        for i in range(p.data.size):
            old = p.data.flat[i]
            p.data.flat[i] = old + 1e-6
            up = inner()
            p.data.flat[i] = old - 1e-6
            down = inner()
            p.data.flat[i] = old
            numeric.flat[i] = (up - down) / 2e-6
        np.testing.assert_allclose(analytic, numeric, atol=1e-6)


def test_check_module_on_stack():
    rng = np.random.default_rng(6)
    net = L.Sequential(L.ConvTranspose2d(3, 2, 4, 2, 1, dtype=np.float64, rng=rng), L.GroupNorm(1, 2, dtype=np.float64),
                       L.Tanh())
    errs = check_module(net, rng.normal(size=(2, 3, 3, 3)), rng)
    assert max(errs.values()) < 1e-6
