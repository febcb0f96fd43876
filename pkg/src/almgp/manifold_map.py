"""Fully connected LogSigmoid network used as the feature map into latent space.

Each layer computes ``Z_i = logsigmoid(Z_{i-1} @ W_i.T + b_i)``; the
activation is applied on the output layer too, so latent coordinates are
strictly negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidSpecError, ShapeError

__all__ = [
    "MlpArch",
    "MlpParams",
    "logsigmoid",
    "init_params",
    "forward",
    "forward_with_cache",
    "backward",
]


def logsigmoid(x):
    """``log(1 / (1 + exp(-x)))`` evaluated without overflow."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def _sigmoid_neg(x):
    # derivative of logsigmoid: sigmoid(-x) = 1 - sigmoid(x)
    return expit(-x)


@dataclass(frozen=True)
class MlpArch:
    layer_sizes: tuple[int, ...]
    activation: str = "logsigmoid"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise InvalidSpecError(f"bad layer sizes {sizes}")
        if self.activation != "logsigmoid":
            raise InvalidSpecError(f"unsupported activation {self.activation!r}")

    @classmethod
    def parse(cls, text: str) -> "MlpArch":
        """Build from the dash notation, e.g. ``"1-6-2"``."""
        return cls(tuple(int(t) for t in text.strip("[]").split("-")))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def latent_dim(self) -> int:
        return self.layer_sizes[-1]

    @cached_property
    def shapes(self) -> tuple[tuple[int, int], ...]:
        s = self.layer_sizes
        return tuple((s[i + 1], s[i]) for i in range(len(s) - 1))

    @cached_property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes)

    def __str__(self):
        return "-".join(str(s) for s in self.layer_sizes)


@dataclass(frozen=True)
class MlpParams:
    """Weights (``out x in``) and biases per layer.

    The flat vector stores, layer by layer, the row-major weights followed by
    that layer's biases.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts) if parts else np.empty(0)

    @classmethod
    def unflatten(cls, arch: MlpArch, vec) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != arch.n_params:
            raise ShapeError(f"expected {arch.n_params} parameters, got {vec.size}")
        weights, biases, k = [], [], 0
        for o, i in arch.shapes:
            weights.append(vec[k:k + o * i].reshape(o, i).copy())
            k += o * i
            biases.append(vec[k:k + o].copy())
            k += o
        return cls(tuple(weights), tuple(biases))

    def check(self, arch: MlpArch):
        if len(self.weights) != len(arch.shapes) or len(self.biases) != len(arch.shapes):
            raise ShapeError("layer count does not match architecture")
        for (o, i), W, b in zip(arch.shapes, self.weights, self.biases):
            if W.shape != (o, i) or b.shape != (o,):
                raise ShapeError(f"layer expects W {(o, i)}, b {(o,)}; got {W.shape}, {b.shape}")


def init_params(arch: MlpArch, rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike."""
    weights, biases = [], []
    for o, i in arch.shapes:
        bound = 1.0 / np.sqrt(i)
        weights.append(rng.uniform(-bound, bound, size=(o, i)))
        biases.append(rng.uniform(-bound, bound, size=o))
    return MlpParams(tuple(weights), tuple(biases))


def _check_input(arch, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.input_dim:
        raise ShapeError(f"input has {X.shape[1]} columns, network expects {arch.input_dim}")
    return X


def forward_with_cache(arch: MlpArch, params: MlpParams, X):
    """Forward pass returning the output and the per-layer (input, pre-activation) pairs."""
    params.check(arch)
    Z = _check_input(arch, X)
    cache = []
    for W, b in zip(params.weights, params.biases):
        A = Z @ W.T + b
        cache.append((Z, A))
        Z = logsigmoid(A)
    return Z, cache


def forward(arch: MlpArch, params: MlpParams, X) -> np.ndarray:
    """Map inputs (n, p) to latent features (n, Q)."""
    return forward_with_cache(arch, params, X)[0]


def backward(arch: MlpArch, params: MlpParams, X, upstream_grad, cache=None) -> np.ndarray:
    """Flat gradient over the network parameters given ``dL/dM(X)``."""
    if cache is None:
        _, cache = forward_with_cache(arch, params, X)
    delta = np.atleast_2d(np.asarray(upstream_grad, dtype=float))
    if delta.shape != (cache[0][0].shape[0], arch.latent_dim):
        raise ShapeError(f"upstream gradient has shape {delta.shape}")
    gW = [None] * len(cache)
    gb = [None] * len(cache)
    for k in range(len(cache) - 1, -1, -1):
        Zin, A = cache[k]
        dA = delta * _sigmoid_neg(A)
        gW[k] = dA.T @ Zin
        gb[k] = dA.sum(axis=0)
        if k > 0:
            delta = dA @ params.weights[k]
    return MlpParams(tuple(gW), tuple(gb)).flatten()
