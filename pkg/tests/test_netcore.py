import numpy as np
import pytest

from lagdecomp.instances import random_net, tiny_abs_net
from lagdecomp.netcore import (
    Network, ShapeError, adjoint_affine, conv2d, dense, forward_affine, network_eval, pre_activations,
)


def test_dense_forward_examples():
    assert np.array_equal(forward_affine(dense([[1.0, -1.0]], [0.0]), [1.0, 1.0]), [0.0])
    assert np.array_equal(forward_affine(dense(np.eye(2)), [3.0, 4.0]), [3.0, 4.0])


def test_conv_scalar_kernel():
    layer = conv2d(np.full((1, 1, 1, 1), 2.0), [0.0], (1, 2, 2))
    out = forward_affine(layer, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(out.reshape(2, 2), [[2, 4], [6, 8]])


def test_adjoint_examples():
    assert np.array_equal(adjoint_affine(dense([[1.0, -1.0]]), [2.0]), [2.0, -2.0])
    assert np.array_equal(adjoint_affine(dense(np.eye(2)), [5.0, 6.0]), [5.0, 6.0])


def test_dense_adjoint_identity(rng):
    layer = dense(rng.standard_normal((3, 4)), rng.standard_normal(3))
    for _ in range(20):
        v, x = rng.standard_normal(3), rng.standard_normal(4)
        lhs = v @ (forward_affine(layer, x) - layer.bias)
        assert abs(lhs - adjoint_affine(layer, v) @ x) <= 1e-12


@pytest.mark.parametrize("k,stride,pad", [(1, 1, 0), (3, 1, 1), (3, 2, 0), (2, 2, 1), (3, 3, 2)])
def test_conv_matches_dense_and_adjoint(rng, k, stride, pad):
    w = rng.standard_normal((3, 2, k, k))
    b = rng.standard_normal(3)
    layer = conv2d(w, b, (2, 6, 5), stride=stride, padding=pad)
    M = layer.as_dense()
    x = rng.standard_normal((4, layer.in_dim))
    assert np.max(np.abs(forward_affine(layer, x) - (x @ M.T + layer.full_bias()))) <= 1e-12
    v = rng.standard_normal((4, layer.out_dim))
    lhs = np.sum(v * (forward_affine(layer, x) - layer.full_bias()), axis=1)
    rhs = np.sum(adjoint_affine(layer, v) * x, axis=1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_conv_direct_loop(rng):
    # independent reference: naive nested loops
    w = rng.standard_normal((2, 1, 2, 2))
    b = rng.standard_normal(2)
    img = rng.standard_normal((1, 4, 4))
    layer = conv2d(w, b, (1, 4, 4), stride=2, padding=1)
    pad = np.pad(img, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 3, 3))
    for o in range(2):
        for i in range(3):
            for j in range(3):
                ref[o, i, j] = np.sum(w[o] * pad[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2]) + b[o]
    assert np.allclose(forward_affine(layer, img.ravel()).reshape(2, 3, 3), ref, atol=1e-12)


def test_network_eval_examples():
    net = tiny_abs_net()
    assert network_eval(net, [0.5]) == pytest.approx([0.5])
    assert network_eval(net, [0.0]) == pytest.approx([0.0])
    assert network_eval(net, [-1.0]) == pytest.approx([1.0])


def test_shape_errors():
    layer = dense([[1.0, 2.0]])
    with pytest.raises(ShapeError):
        forward_affine(layer, [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        adjoint_affine(layer, [1.0, 2.0])
    with pytest.raises(ShapeError):
        dense([[1.0, 2.0]], [0.0, 0.0])
    with pytest.raises(ShapeError):
        Network((dense(np.ones((2, 3))), dense(np.ones((1, 3)))), ("relu",))
    with pytest.raises(ShapeError):
        network_eval(tiny_abs_net(), [1.0, 2.0])


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        dense([[np.nan]])


def test_network_is_immutable():
    net = tiny_abs_net()
    with pytest.raises(ValueError):
        net.affine[0].weight[0, 0] = 3.0


def test_batch_rows_bit_identical(rng):
    net = random_net(rng, [5, 17, 9, 3])
    x = rng.standard_normal((32, 5))
    batch = network_eval(net, x)
    for i in range(32):
        assert np.array_equal(batch[i], network_eval(net, x[i]))


def test_pre_activations_consistent(rng):
    net = random_net(rng, [3, 4, 2])
    x = rng.standard_normal((5, 3))
    pre = pre_activations(net, x)
    assert np.allclose(pre[-1], network_eval(net, x))
