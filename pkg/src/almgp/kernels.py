"""Stationary correlation functions with per-dimension length-scales.

The Gaussian family is

    k(a, b) = exp(-sum_l (a_l - b_l)**2 / theta_l)

(squared distance divided by theta, not 2*theta**2). The Matern family is
the product over dimensions of the normalized Matern correlation with
argument ``u = 2*sqrt(nu)*|a_l - b_l| / theta_l``; only ``nu`` in
{1/2, 3/2, 5/2} is supported, through closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidKernelError, ShapeError

__all__ = [
    "KernelSpec",
    "corr",
    "corr_matrix",
    "corr_vector",
    "corr_cross",
    "corr_matrix_grads",
]

_MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    lengthscales: np.ndarray = field(repr=True)
    nu: float | None = None

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", theta)
        if self.family not in ("gaussian", "matern"):
            raise InvalidKernelError(f"unknown kernel family {self.family!r}")
        if theta.ndim != 1 or theta.size == 0:
            raise InvalidKernelError("lengthscales must be a non-empty vector")
        if not (np.isfinite(theta).all() and (theta > 0).all()):
            raise InvalidKernelError("lengthscales must be finite and strictly positive")
        if self.family == "matern" and self.nu not in _MATERN_NUS:
            raise InvalidKernelError(f"matern nu must be one of {_MATERN_NUS}, got {self.nu}")

    @property
    def dim(self) -> int:
        return self.lengthscales.size


def _matern_profile(u, nu):
    """Per-dimension Matern factor g(u) and its log-derivative g'(u)/g(u)."""
    e = np.exp(-u)
    if nu == 0.5:
        return e, -np.ones_like(u)
    if nu == 1.5:
        return (1.0 + u) * e, -u / (1.0 + u)
    poly = 1.0 + u + u * u / 3.0
    return poly * e, -u * (1.0 + u) / (3.0 * poly)


def _check_dims(spec, *arrays):
    for a in arrays:
        if a.shape[-1] != spec.dim:
            raise ShapeError(
                f"input dimension {a.shape[-1]} does not match {spec.dim} lengthscales")


def _from_diffs(spec, diffs):
    # diffs has the kernel dimension on the last axis
    theta = spec.lengthscales
    if spec.family == "gaussian":
        return np.exp(-np.sum(diffs * diffs / theta, axis=-1))
    u = 2.0 * np.sqrt(spec.nu) * np.abs(diffs) / theta
    g, _ = _matern_profile(u, spec.nu)
    return np.prod(g, axis=-1)


def corr(spec: KernelSpec, x1, x2) -> float:
    """Correlation between two points."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape:
        raise ShapeError(f"point shapes differ: {x1.shape} vs {x2.shape}")
    _check_dims(spec, x1)
    return float(_from_diffs(spec, x1 - x2))


def corr_cross(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Cross-correlation matrix with entry (i, j) = corr(X1[i], X2[j])."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    _check_dims(spec, X1, X2)
    theta = spec.lengthscales
    if spec.family == "gaussian":
        # each pair is summed in the same order either way round, so K is exactly symmetric
        s = 1.0 / np.sqrt(theta)
        return np.exp(-cdist(X1 * s, X2 * s, "sqeuclidean"))
    # one 2-D difference per dimension keeps memory at O(n1 * n2)
    c = 2.0 * np.sqrt(spec.nu)
    K = np.ones((X1.shape[0], X2.shape[0]))
    for l in range(spec.dim):
        u = c * np.abs(X1[:, l, None] - X2[None, :, l]) / theta[l]
        K *= _matern_profile(u, spec.nu)[0]
    return K


def corr_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Correlation matrix of the rows of X.

    Entry (j, i) uses the negated difference of entry (i, j); squares and
    absolute values make the result exactly symmetric.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return corr_cross(spec, X, X)


def corr_vector(spec: KernelSpec, X, x) -> np.ndarray:
    """Correlations between each row of X and the point x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ShapeError("x must be a single point")
    return corr_cross(spec, X, x[None, :])[:, 0]


def corr_matrix_grads(spec: KernelSpec, X):
    """Correlation matrix with its derivatives.

    Returns
    -------
    K : (n, n) array
    dK_ddiff : (n, n, q) array
        Derivative of K[i, j] with respect to the difference X[i, l] - X[j, l].
    dK_dtheta : (n, n, q) array
        Derivative of K[i, j] with respect to lengthscale theta_l.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dims(spec, X)
    theta = spec.lengthscales
    D = X[:, None, :] - X[None, :, :]
    if spec.family == "gaussian":
        K = np.exp(-np.sum(D * D / theta, axis=-1))
        dK_ddiff = -2.0 * K[..., None] * D / theta
        dK_dtheta = K[..., None] * (D * D) / theta**2
        return K, dK_ddiff, dK_dtheta
    c = 2.0 * np.sqrt(spec.nu)
    u = c * np.abs(D) / theta
    g, dlog = _matern_profile(u, spec.nu)
    K = np.prod(g, axis=-1)
    dK_ddiff = K[..., None] * dlog * c * np.sign(D) / theta
    dK_dtheta = K[..., None] * dlog * (-u / theta)
    return K, dK_ddiff, dK_dtheta
