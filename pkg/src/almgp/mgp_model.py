"""Manifold GP: a GP on latent features produced by the LogSigmoid network.

All GP hyperparameters are optimized through raw values whose squares give
the lengthscales, ``tau2`` and ``rho``. Network weights are optimized as-is.
The flat parameter vector is ``[network..., kernel_raw..., tau2_raw, rho_raw]``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gp_core
from .errors import DivergenceError, FitFailureError, IllConditionedError, ShapeError
from .kernels import KernelSpec
from .lbfgs import MinimizeResult, OptimConfig, minimize
from .manifold_map import MlpArch, MlpParams, backward, forward, forward_with_cache, init_params

logger = logging.getLogger(__name__)

__all__ = [
    "MgpParams",
    "FittedMgp",
    "init_mgp_params",
    "joint_nlml",
    "joint_grad",
    "joint_value_and_grad",
    "condition",
    "fit",
    "fit_best",
    "predict_mgp",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "almgp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MgpParams:
    mlp: MlpParams
    kernel_raw: np.ndarray
    tau2_raw: float
    rho_raw: float
    family: str = "gaussian"
    nu: float | None = None

    @property
    def tau2(self) -> float:
        return self.tau2_raw**2

    @property
    def rho(self) -> float:
        return self.rho_raw**2

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.family, np.asarray(self.kernel_raw) ** 2, self.nu)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.mlp.flatten(), np.asarray(self.kernel_raw, dtype=float),
                               [self.tau2_raw, self.rho_raw]])

    @classmethod
    def unflatten(cls, arch: MlpArch, vec, family="gaussian", nu=None) -> "MgpParams":
        vec = np.asarray(vec, dtype=float)
        m, q = arch.n_params, arch.latent_dim
        if vec.size != m + q + 2:
            raise ShapeError(f"expected {m + q + 2} parameters, got {vec.size}")
        return cls(MlpParams.unflatten(arch, vec[:m]), vec[m:m + q].copy(),
                   float(vec[m + q]), float(vec[m + q + 1]), family, nu)


def init_mgp_params(arch: MlpArch, rng: np.random.Generator, *, rho_raw: float = 0.1,
                    family: str = "gaussian", nu: float | None = None) -> MgpParams:
    """Default network init, unit lengthscales and unit ``tau2``."""
    return MgpParams(init_params(arch, rng), np.ones(arch.latent_dim), 1.0, float(rho_raw),
                     family, nu)


def median_lengthscales(arch: MlpArch, params: MgpParams, X) -> MgpParams:
    """Copy of ``params`` with each lengthscale set to the median squared
    pairwise distance of the latent training features along that axis.

    Used for restart starts: with unit lengthscales a freshly initialized
    network maps all inputs to nearly the same correlation, which tends to
    send the fit into the everything-is-noise solution.
    """
    Z = forward(arch, params.mlp, np.atleast_2d(np.asarray(X, dtype=float)))
    iu = np.triu_indices(Z.shape[0], 1)
    theta = np.array([np.median((Z[:, l, None] - Z[None, :, l])[iu] ** 2)
                      for l in range(Z.shape[1])]) if iu[0].size else np.ones(Z.shape[1])
    theta = np.where(np.isfinite(theta) & (theta > 0), theta, 1.0)
    return replace(params, kernel_raw=np.sqrt(theta))


def _xy(arch, X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[1] != arch.input_dim:
        raise ShapeError(f"inputs have {X.shape[1]} columns, network expects {arch.input_dim}")
    if X.shape[0] != y.size:
        raise ShapeError(f"{X.shape[0]} inputs but {y.size} responses")
    return X, y


def joint_nlml(arch: MlpArch, params: MgpParams, X, y) -> float:
    X, y = _xy(arch, X, y)
    Z = forward(arch, params.mlp, X)
    return gp_core.nlml(params.kernel_spec(), Z, y, params.tau2, params.rho)


def joint_value_and_grad(arch: MlpArch, params: MgpParams, X, y):
    """NLML and its gradient over the flat raw parameter vector."""
    X, y = _xy(arch, X, y)
    Z, cache = forward_with_cache(arch, params.mlp, X)
    value, g = gp_core.nlml_and_grads(params.kernel_spec(), Z, y, params.tau2, params.rho)
    g_mlp = backward(arch, params.mlp, X, g["features"], cache=cache)
    kraw = np.asarray(params.kernel_raw, dtype=float)
    grad = np.concatenate([
        g_mlp,
        2.0 * kraw * g["theta"],
        [2.0 * params.tau2_raw * g["tau2"], 2.0 * params.rho_raw * g["rho"]],
    ])
    return value, grad


def joint_grad(arch: MlpArch, params: MgpParams, X, y) -> np.ndarray:
    return joint_value_and_grad(arch, params, X, y)[1]


@dataclass(frozen=True)
class FittedMgp:
    """Frozen parameters plus the GP conditioned on the latent training features.

    ``y_shift``/``y_scale`` record an optional affine standardization of the
    responses; the GP itself always sees ``(y - y_shift) / y_scale``.
    """

    arch: MlpArch
    params: MgpParams
    gp: gp_core.GpState
    train_X: np.ndarray
    train_y: np.ndarray
    y_shift: float = 0.0
    y_scale: float = 1.0
    result: MinimizeResult | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.train_y.size

    def latent(self, X) -> np.ndarray:
        return forward(self.arch, self.params.mlp, X)


def _standardization(y, standardize):
    if not standardize:
        return 0.0, 1.0
    scale = float(np.std(y))
    return float(np.mean(y)), scale if scale > 0 else 1.0


def condition(arch: MlpArch, params: MgpParams, X, y, *, y_shift: float = 0.0,
              y_scale: float = 1.0, result: MinimizeResult | None = None) -> FittedMgp:
    """Build the cached GP state for fixed parameters (no optimization)."""
    X, y = _xy(arch, X, y)
    Z = forward(arch, params.mlp, X)
    ys = (y - y_shift) / y_scale
    state = gp_core.build_state(params.kernel_spec(), Z, ys, tau2=params.tau2, rho=params.rho)
    return FittedMgp(arch, params, state, X.copy(), y.copy(), float(y_shift), float(y_scale),
                     result)


def fit(arch: MlpArch, init: MgpParams, X, y, opt: OptimConfig = OptimConfig(), *,
        standardize: bool = False, monitor=None) -> FittedMgp:
    """Minimize the joint NLML from ``init`` with L-BFGS.

    ``monitor``, if given, maps a candidate :class:`FittedMgp` to the scalar
    tracked by the early-stop rule in place of the NLML.
    """
    X, y = _xy(arch, X, y)
    if y.size < 2:
        raise ValueError("fit needs at least two observations")
    shift, scale = _standardization(y, standardize)
    ys = (y - shift) / scale
    family, nu = init.family, init.nu

    def objective(v):
        return joint_value_and_grad(arch, MgpParams.unflatten(arch, v, family, nu), X, ys)

    track = None
    if monitor is not None:
        def track(v):
            p = MgpParams.unflatten(arch, v, family, nu)
            return monitor(condition(arch, p, X, y, y_shift=shift, y_scale=scale))

    try:
        res = minimize(objective, init.flatten(), opt, monitor=track)
    except (DivergenceError, IllConditionedError) as exc:
        raise FitFailureError(f"fit failed at the initial point: {exc}", last_params=init) from exc
    params = MgpParams.unflatten(arch, res.x, family, nu)
    if not np.isfinite(res.fun):
        raise FitFailureError("optimizer returned a non-finite NLML", last_params=params)
    logger.debug("fit: n=%d nlml=%.6g iters=%d evals=%d status=%s",
                 y.size, res.fun, res.n_iter, res.n_eval, res.status)
    return condition(arch, params, X, y, y_shift=shift, y_scale=scale, result=res)


def fit_best(arch: MlpArch, inits, X, y, opt: OptimConfig = OptimConfig(), *,
             standardize: bool = False, monitor=None) -> FittedMgp:
    """Fit from each starting point and keep the lowest final NLML.

    Starts that fail are skipped; if all fail the last failure is raised.
    """
    best, failure = None, None
    for init in inits:
        try:
            model = fit(arch, init, X, y, opt, standardize=standardize, monitor=monitor)
        except FitFailureError as exc:
            failure = exc
            continue
        if best is None or model.result.fun < best.result.fun:
            best = model
    if best is None:
        raise failure
    return best


def predict_mgp(model: FittedMgp, X_query):
    """Predictive means and variances at input-space queries."""
    Z = model.latent(X_query)
    mean, var = gp_core.predict_batch(model.gp, Z)
    return model.y_shift + model.y_scale * mean, model.y_scale**2 * var


def save_checkpoint(model: FittedMgp, path) -> Path:
    """Write the model as JSON; raw parameters round-trip exactly."""
    p = model.params
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": list(model.arch.layer_sizes),
        "activation": model.arch.activation,
        "kernel": {"family": p.family, "nu": p.nu},
        "layout": ["mlp", "kernel_raw", "tau2_raw", "rho_raw"],
        "params": [float(v) for v in p.flatten()],
        "y_shift": model.y_shift,
        "y_scale": model.y_scale,
        "train_X": model.train_X.tolist(),
        "train_y": model.train_y.tolist(),
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path) -> FittedMgp:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    arch = MlpArch(tuple(doc["arch"]), doc["activation"])
    params = MgpParams.unflatten(arch, doc["params"], doc["kernel"]["family"],
                                 doc["kernel"]["nu"])
    return condition(arch, params, np.array(doc["train_X"], dtype=float),
                     np.array(doc["train_y"], dtype=float),
                     y_shift=doc["y_shift"], y_scale=doc["y_scale"])


def with_params(model: FittedMgp, params: MgpParams) -> FittedMgp:
    """Re-condition the same training data on new parameters."""
    return condition(model.arch, params, model.train_X, model.train_y,
                     y_shift=model.y_shift, y_scale=model.y_scale)
