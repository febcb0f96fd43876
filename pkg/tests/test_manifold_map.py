import math

import numpy as np
import pytest

from almgp.errors import InvalidSpecError, ShapeError
from almgp.manifold_map import (MlpArch, MlpParams, backward, forward, init_params,
                                logsigmoid)

ARCHS = ["1-6-2", "2-10-3", "3-10-2", "8-30-4"]


def zero_params(arch):
    return MlpParams(tuple(np.zeros(s) for s in arch.shapes),
                     tuple(np.zeros(s[0]) for s in arch.shapes))


def naive_forward(arch, params, X):
    """Scalar loops over samples, units and inputs."""
    out = []
    for x in X:
        z = list(x)
        for W, b in zip(params.weights, params.biases):
            nxt = []
            for o in range(W.shape[0]):
                a = b[o] + sum(W[o, i] * z[i] for i in range(W.shape[1]))
                nxt.append(-math.log1p(math.exp(-a)))
            z = nxt
        out.append(z)
    return np.array(out)


def test_logsigmoid_is_stable():
    x = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    v = logsigmoid(x)
    assert np.all(np.isfinite(v))
    assert v[2] == pytest.approx(-math.log(2))
    assert v[0] == pytest.approx(-800.0)
    assert v[-1] == pytest.approx(0.0, abs=1e-300)


def test_zero_weights_give_minus_log2():
    arch = MlpArch.parse("2-4-3")
    out = forward(arch, zero_params(arch), np.random.default_rng(0).normal(size=(5, 2)))
    np.testing.assert_allclose(out, -math.log(2), rtol=1e-15)


def test_output_shape():
    arch = MlpArch.parse("1-6-2")
    assert forward(arch, init_params(arch, np.random.default_rng(0)), np.zeros((7, 1))).shape == (7, 2)


def test_forward_matches_naive_loop():
    arch = MlpArch.parse("3-5-2")
    p = init_params(arch, np.random.default_rng(1))
    X = np.random.default_rng(2).normal(size=(3, 3))
    np.testing.assert_allclose(forward(arch, p, X), naive_forward(arch, p, X), rtol=1e-13)


@pytest.mark.parametrize("text", ARCHS)
def test_param_counts_and_roundtrip(text):
    arch = MlpArch.parse(text)
    sizes = arch.layer_sizes
    assert arch.n_params == sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))
    p = init_params(arch, np.random.default_rng(3))
    v = p.flatten()
    assert v.size == arch.n_params
    np.testing.assert_array_equal(MlpParams.unflatten(arch, v).flatten(), v)


def test_init_bounds():
    arch = MlpArch.parse("8-30-4")
    p = init_params(arch, np.random.default_rng(4))
    assert np.abs(p.weights[0]).max() <= 1 / math.sqrt(8)
    assert np.abs(p.biases[1]).max() <= 1 / math.sqrt(30)


def test_zero_upstream_gives_zero_gradient():
    arch = MlpArch.parse("2-4-2")
    p = init_params(arch, np.random.default_rng(5))
    g = backward(arch, p, np.ones((3, 2)), np.zeros((3, 2)))
    np.testing.assert_array_equal(g, 0.0)


def test_single_unit_hand_derivative():
    arch = MlpArch((1, 1))
    w, b, x = 0.7, -0.3, 1.9
    p = MlpParams((np.array([[w]]),), (np.array([b]),))
    g = backward(arch, p, [[x]], [[1.0]])
    sig_neg = 1.0 / (1.0 + math.exp(w * x + b))
    np.testing.assert_allclose(g, [x * sig_neg, sig_neg], rtol=1e-14)


@pytest.mark.parametrize("text", ["2-4-2"] + ARCHS)
def test_backward_finite_difference(text):
    arch = MlpArch.parse(text)
    rng = np.random.default_rng(6)
    p = init_params(arch, rng)
    X = rng.normal(size=(5, arch.input_dim))
    U = rng.normal(size=(5, arch.latent_dim))
    v = p.flatten()

    def f(vec):
        return float(np.sum(U * forward(arch, MlpParams.unflatten(arch, vec), X)))

    h = 1e-5
    fd = np.array([(f(v + h * e) - f(v - h * e)) / (2 * h) for e in np.eye(v.size)])
    g = backward(arch, p, X, U)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_shape_errors():
    arch = MlpArch.parse("2-4-2")
    p = init_params(arch, np.random.default_rng(7))
    with pytest.raises(ShapeError):
        forward(arch, p, np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        backward(arch, p, np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        MlpParams.unflatten(arch, np.zeros(5))
    with pytest.raises(InvalidSpecError):
        MlpArch((3,))
