"""Zero-mean GP likelihood and prediction on a fixed feature representation.

The model is ``y ~ N(0, tau2 * (K + rho * I))`` with ``rho = sigma2 / tau2``.
All solves go through a jittered Cholesky factor of ``K + rho * I``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import IllConditionedError, ShapeError
from .kernels import KernelSpec, corr_cross, corr_matrix, corr_matrix_grads

logger = logging.getLogger(__name__)

__all__ = [
    "GpState",
    "jittered_cholesky",
    "nlml",
    "profile_tau2",
    "build_state",
    "predict",
    "predict_batch",
    "noise_free_variance",
    "nlml_and_grads",
    "nlml_grad_kernelparams",
    "clamp_count",
]

JITTER_START = 1e-8
JITTER_MAX = 1e-4

_clamped = 0


def clamp_count() -> int:
    """Number of predictive variances clamped at zero so far in this process."""
    return _clamped


def _clamp(var):
    global _clamped
    neg = var < 0
    if neg.any():
        _clamped += int(np.count_nonzero(neg))
        logger.debug("clamped %d negative predictive variances", np.count_nonzero(neg))
        var = np.where(neg, 0.0, var)
    return var


def jittered_cholesky(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter * I``.

    Jitter starts at 1e-8 and grows tenfold on failure up to 1e-4.
    """
    if not np.isfinite(A.sum()):
        raise IllConditionedError("matrix has non-finite entries")
    jitter = JITTER_START
    diag = np.diagonal(A)
    while jitter <= JITTER_MAX * (1 + 1e-12):
        B = A.copy()
        np.fill_diagonal(B, diag + jitter)
        L, info = lapack.dpotrf(B, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return L, jitter
        if info < 0:
            raise ValueError(f"dpotrf: illegal argument {-info}")
        jitter *= 10.0
    raise IllConditionedError(f"Cholesky failed with jitter up to {JITTER_MAX:g}")


def _chol_solve(L, b):
    x, info = lapack.dpotrs(L, b, lower=1)
    if info != 0:
        raise ValueError(f"dpotrs: illegal argument {-info}")
    return x


def _prepare(features, y):
    Z = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if Z.shape[0] != y.size:
        raise ShapeError(f"{Z.shape[0]} feature rows but {y.size} responses")
    if y.size < 1:
        raise ShapeError("need at least one observation")
    return Z, y


def _factor(kernel, Z, rho):
    K = corr_matrix(kernel, Z)
    K.flat[::K.shape[0] + 1] += rho
    return jittered_cholesky(K)


def nlml(kernel: KernelSpec, features, y, tau2: float, rho: float) -> float:
    """Minus twice the log-likelihood, dropping the ``n log 2 pi`` constant.

    ``n log tau2 + log det(K + rho I) + y' (K + rho I)^{-1} y / tau2``
    """
    if tau2 <= 0 or rho < 0:
        raise ValueError("need tau2 > 0 and rho >= 0")
    Z, y = _prepare(features, y)
    L, _ = _factor(kernel, Z, rho)
    w = solve_triangular(L, y, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(y.size * np.log(tau2) + logdet + w @ w / tau2)


def profile_tau2(kernel: KernelSpec, features, y, rho: float) -> float:
    """Maximum-likelihood process variance for fixed correlation parameters."""
    Z, y = _prepare(features, y)
    L, _ = _factor(kernel, Z, rho)
    w = solve_triangular(L, y, lower=True, check_finite=False)
    tau2 = float(w @ w / y.size)
    if tau2 == 0.0:
        logger.warning("profile tau2 is zero: the response vector is identically zero")
    return tau2


@dataclass(frozen=True)
class GpState:
    """A conditioned GP: cached factor of ``K + rho I`` and the solved weights."""

    kernel: KernelSpec
    chol: np.ndarray
    alpha: np.ndarray
    tau2: float
    rho: float
    train_features: np.ndarray
    train_y: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.train_y.size

    @property
    def sigma2(self) -> float:
        return self.rho * self.tau2


def build_state(kernel: KernelSpec, features, y, tau2: float | None = None,
                rho: float = 0.0) -> GpState:
    """Factorize and solve once; ``tau2=None`` uses the profile estimate."""
    Z, y = _prepare(features, y)
    L, jitter = _factor(kernel, Z, rho)
    alpha = _chol_solve(L, y)
    if tau2 is None:
        tau2 = float(y @ alpha / y.size)
    return GpState(kernel, L, alpha, float(tau2), float(rho), Z.copy(), y.copy(), jitter)


def _check_query(state, Xq):
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != state.train_features.shape[1]:
        raise ShapeError(
            f"query has {Xq.shape[1]} features, model has {state.train_features.shape[1]}")
    return Xq


def noise_free_variance(state: GpState, Xq) -> np.ndarray:
    """``1 - k(x)' (K + rho I)^{-1} k(x)`` for each query row (not clamped)."""
    Xq = _check_query(state, Xq)
    kq = corr_cross(state.kernel, state.train_features, Xq)
    V = solve_triangular(state.chol, kq, lower=True, check_finite=False)
    return 1.0 - np.sum(V * V, axis=0)


def predict_batch(state: GpState, Xq, kernel: KernelSpec | None = None):
    """Predictive means and variances (variance includes ``sigma2 = rho tau2``)."""
    if kernel is not None and kernel is not state.kernel:
        state = _with_kernel(state, kernel)
    Xq = _check_query(state, Xq)
    kq = corr_cross(state.kernel, state.train_features, Xq)
    mean = kq.T @ state.alpha
    V = solve_triangular(state.chol, kq, lower=True, check_finite=False)
    var = state.tau2 * (1.0 - np.sum(V * V, axis=0)) + state.sigma2
    return mean, _clamp(var)


def _with_kernel(state, kernel):
    if not (kernel.family == state.kernel.family
            and np.array_equal(kernel.lengthscales, state.kernel.lengthscales)
            and kernel.nu == state.kernel.nu):
        raise ValueError("kernel differs from the one the state was built with")
    return state


def predict(state: GpState, kernel: KernelSpec, x_feat) -> tuple[float, float]:
    """Predictive mean and variance at a single feature vector."""
    x = np.atleast_1d(np.asarray(x_feat, dtype=float))
    if x.ndim != 1:
        raise ShapeError("predict takes one point; use predict_batch for many")
    mean, var = predict_batch(state, x[None, :], kernel)
    return float(mean[0]), float(var[0])


def nlml_and_grads(kernel: KernelSpec, features, y, tau2: float, rho: float):
    """NLML with derivatives in natural parameters.

    Returns ``(value, grads)`` where ``grads`` has keys ``features`` (n, q),
    ``theta`` (q,), ``tau2`` and ``rho``.
    """
    Z, y = _prepare(features, y)
    n = y.size
    gaussian = kernel.family == "gaussian"
    if gaussian:
        K = corr_matrix(kernel, Z)
    else:
        K, dK_ddiff, dK_dtheta = corr_matrix_grads(kernel, Z)
    K_rho = K.copy()
    K_rho.flat[::K_rho.shape[0] + 1] += rho
    L, _ = jittered_cholesky(K_rho)
    alpha = _chol_solve(L, y)
    Ainv = _inverse_from_cholesky(L)
    quad = float(y @ alpha)
    value = n * np.log(tau2) + 2.0 * np.sum(np.log(np.diag(L))) + quad / tau2

    # G[i, j] = d value / d A[i, j], entries treated as independent
    G = Ainv - np.outer(alpha, alpha) / tau2
    grads = {"tau2": n / tau2 - quad / tau2**2, "rho": float(np.trace(G))}
    if gaussian:
        # sums over pairs of W_ij (z_i - z_j) and W_ij (z_i - z_j)**2, W symmetric
        theta = kernel.lengthscales
        W = G * K
        rows = W.sum(axis=1)
        WZ = W @ Z
        grads["features"] = -4.0 * (Z * rows[:, None] - WZ) / theta
        grads["theta"] = 2.0 * (rows @ (Z * Z) - np.sum(Z * WZ, axis=0)) / theta**2
    else:
        grads["features"] = 2.0 * np.einsum("ij,ijl->il", G, dK_ddiff)
        grads["theta"] = np.einsum("ij,ijl->l", G, dK_dtheta)
    return float(value), grads


def _inverse_from_cholesky(L):
    # dpotri fills the lower triangle only; L's upper triangle is zero
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise IllConditionedError(f"dpotri failed with info={info}")
    full = inv + inv.T
    full.flat[::inv.shape[0] + 1] *= 0.5
    return full


def nlml_grad_kernelparams(features, y, kernel_raw, tau2_raw: float, rho_raw: float,
                           family: str = "gaussian", nu: float | None = None):
    """NLML and its gradient over unconstrained ``[kernel_raw..., tau2_raw, rho_raw]``.

    Lengthscales, tau2 and rho are the squares of their raw counterparts.
    """
    kernel_raw = np.asarray(kernel_raw, dtype=float)
    kernel = KernelSpec(family, kernel_raw**2, nu)
    value, g = nlml_and_grads(kernel, features, y, tau2_raw**2, rho_raw**2)
    grad = np.concatenate([
        2.0 * kernel_raw * g["theta"],
        [2.0 * tau2_raw * g["tau2"], 2.0 * rho_raw * g["rho"]],
    ])
    return value, grad
