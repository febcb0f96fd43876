"""ALC acquisition with variance pre-screening, and the sequential design loop.

For a candidate ``x_new`` the score is

    tau2 * sum_{x in ref} k_{n+1}(x)' (K_{n+1} + rho I)^{-1} k_{n+1}(x)

with all correlations taken between latent images. The augmented factor is
obtained by bordering the cached Cholesky factor of ``K_n + rho I``:
``L_{n+1} = [[L, 0], [l', d]]`` with ``l = L^{-1} k_n(x_new)`` and
``d**2 = 1 + rho + jitter - l'l``. The noise floor is left out of the score.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import IllConditionedError, InvalidSpecError, OracleError, ShapeError
from .gp_core import JITTER_MAX
from .kernels import corr_cross
from .lbfgs import OptimConfig
from .manifold_map import MlpArch
from .mgp_model import FittedMgp, MgpParams, fit_best, predict_mgp

logger = logging.getLogger(__name__)

__all__ = [
    "AlConfig",
    "Dataset",
    "PoolState",
    "RunRecord",
    "variance_screen",
    "alc_score",
    "alc_scores",
    "alc_variance_reduction",
    "select_batch",
    "run_loop",
    "rmse",
]

STOP_METRICS = ("train_mse", "test_rmse_change", "none")
STRATEGIES = ("alc", "random")


@dataclass(frozen=True)
class AlConfig:
    K: int = 20
    B: int = 1
    N_max: int = 50
    tol: float = 1e-5
    stop_metric: str = "train_mse"
    strategy: str = "alc"
    warm_start: bool = True

    def __post_init__(self):
        if not self.K > self.B >= 1:
            raise InvalidSpecError(f"need K > B >= 1, got K={self.K}, B={self.B}")
        if self.N_max < self.B:
            raise InvalidSpecError("N_max must be at least B")
        if self.stop_metric not in STOP_METRICS:
            raise InvalidSpecError(f"stop_metric must be one of {STOP_METRICS}")
        if self.strategy not in STRATEGIES:
            raise InvalidSpecError(f"strategy must be one of {STRATEGIES}")

    @property
    def n_rounds(self) -> int:
        return self.N_max // self.B


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ShapeError(f"{self.X.shape[0]} inputs but {self.y.size} responses")

    def __len__(self):
        return self.y.size

    def extended(self, X, y) -> "Dataset":
        return Dataset(np.vstack([self.X, X]), np.concatenate([self.y, y]))


@dataclass
class PoolState:
    """Candidate pool (rows indexed by their original position) and reference set."""

    pool: np.ndarray
    reference: np.ndarray
    remaining: np.ndarray = None
    selected_history: list = field(default_factory=list)

    def __post_init__(self):
        self.pool = np.atleast_2d(np.asarray(self.pool, dtype=float))
        self.reference = np.atleast_2d(np.asarray(self.reference, dtype=float))
        if self.remaining is None:
            self.remaining = np.arange(self.pool.shape[0])

    @property
    def candidates(self) -> np.ndarray:
        return self.pool[self.remaining]

    def __len__(self):
        return self.remaining.size

    def remove(self, indices, round_index: int):
        indices = np.asarray(indices, dtype=int)
        if not np.all(np.isin(indices, self.remaining)):
            raise ValueError("attempt to select a point that is no longer in the pool")
        self.remaining = self.remaining[~np.isin(self.remaining, indices)]
        self.selected_history.append((round_index, indices.tolist()))


@dataclass
class RunRecord:
    run_id: int
    strategy: str
    iteration: int
    n_train: int
    test_rmse: float
    wall_ms: float
    chosen: np.ndarray
    stopped: bool = False


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size != truth.size or pred.size == 0:
        raise ShapeError(f"rmse needs equal non-empty lengths, got {pred.size} and {truth.size}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _order(values, indices):
    # descending by value, then ascending by index
    return np.lexsort((indices, -np.asarray(values)))


def variance_screen(model: FittedMgp, pool: PoolState, K: int) -> np.ndarray:
    """Original indices of the ``K`` remaining candidates with the largest variance."""
    if len(pool) == 0:
        return np.empty(0, dtype=int)
    _, var = predict_mgp(model, pool.candidates)
    order = _order(var, pool.remaining)
    return pool.remaining[order[:K]]


def _alc_parts(model: FittedMgp, X_new, reference):
    gp = model.gp
    Zt = gp.train_features
    Zc = model.latent(X_new)
    Zr = model.latent(reference)
    Wr = solve_triangular(gp.chol, corr_cross(gp.kernel, Zt, Zr), lower=True, check_finite=False)
    Wc = solve_triangular(gp.chol, corr_cross(gp.kernel, Zt, Zc), lower=True, check_finite=False)
    d2 = 1.0 + gp.rho + gp.jitter - np.sum(Wc * Wc, axis=0)
    extra = gp.jitter
    while np.any(d2 <= 0):
        if extra > JITTER_MAX:
            raise IllConditionedError("augmented correlation matrix is not positive definite")
        d2 = np.where(d2 <= 0, d2 + extra, d2)
        extra *= 10.0
    cross = corr_cross(gp.kernel, Zr, Zc) - Wr.T @ Wc
    tau2 = gp.tau2 * model.y_scale**2
    base = tau2 * float(np.sum(Wr * Wr))
    gain = tau2 * np.sum(cross * cross, axis=0) / d2
    return base, gain


def alc_scores(model: FittedMgp, X_new, reference) -> np.ndarray:
    """ALC score of each row of ``X_new`` (input space) against ``reference``."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    reference = np.asarray(reference, dtype=float)
    if reference.size == 0:
        return np.zeros(X_new.shape[0])
    base, gain = _alc_parts(model, X_new, np.atleast_2d(reference))
    return base + gain


def alc_score(model: FittedMgp, x_new, reference) -> float:
    return float(alc_scores(model, np.atleast_1d(np.asarray(x_new, dtype=float))[None, :],
                            reference)[0])


def alc_variance_reduction(model: FittedMgp, X_new, reference) -> np.ndarray:
    """Summed drop in noise-free posterior variance over ``reference`` per candidate.

    Equals the ALC score minus the candidate-independent term.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    reference = np.asarray(reference, dtype=float)
    if reference.size == 0:
        return np.zeros(X_new.shape[0])
    return _alc_parts(model, X_new, np.atleast_2d(reference))[1]


def select_batch(model: FittedMgp, pool: PoolState, cfg: AlConfig,
                 rng: np.random.Generator | None = None, round_index: int = 0) -> np.ndarray:
    """Choose up to ``B`` pool indices and remove them from the pool."""
    if len(pool) == 0:
        return np.empty(0, dtype=int)
    B = min(cfg.B, len(pool))
    if cfg.strategy == "random":
        if rng is None:
            raise ValueError("random acquisition needs a generator")
        chosen = rng.choice(pool.remaining, size=B, replace=False)
    else:
        screened = variance_screen(model, pool, cfg.K)
        scores = alc_scores(model, pool.pool[screened], pool.reference)
        chosen = screened[_order(scores, screened)[:B]]
    pool.remove(chosen, round_index)
    return chosen


def _stop_check(cfg, model, data, rmse_now, rmse_prev, rmse_init):
    if cfg.stop_metric == "train_mse":
        mean, _ = predict_mgp(model, data.X)
        return float(np.mean((mean - data.y) ** 2)) < cfg.tol
    if cfg.stop_metric == "test_rmse_change":
        denom = rmse_now - rmse_init
        if denom == 0 or not np.isfinite(denom):
            return False
        return abs((rmse_now - rmse_prev) / denom) < cfg.tol
    return False


def run_loop(initial: Dataset, pool: PoolState, arch: MlpArch, cfg: AlConfig,
             opt: OptimConfig, oracle: Callable, init: MgpParams, *,
             test: Dataset | None = None, rng: np.random.Generator | None = None,
             refit_opt: OptimConfig | None = None, standardize: bool = False,
             fit_monitor: str | None = None, run_id: int = 0,
             record_wall_time: bool = True, initial_model: FittedMgp | None = None,
             restarts: Callable | None = None, n_restarts: int = 0,
             restart_every: int = 1):
    """Fit, then alternate screen / score / select / label / refit / stop-check.

    ``oracle(X) -> y`` labels the chosen inputs. ``fit_monitor="test_rmse"``
    makes the optimizer's early-stop rule track test RMSE instead of the NLML.
    With ``n_restarts > 0``, the initial fit and the refit of every
    ``restart_every``-th round also start from ``n_restarts`` fresh parameter
    draws ``restarts(X_train)``; the lowest-NLML result is kept.
    Returns the final model and one :class:`RunRecord` per completed round.
    """
    if len(initial) < 2:
        raise ValueError("the initial design needs at least two points")
    refit_opt = refit_opt or opt

    def test_rmse(model):
        if test is None:
            return float("nan")
        return rmse(predict_mgp(model, test.X)[0], test.y)

    monitor = test_rmse if fit_monitor == "test_rmse" else None

    def refit(start, data, options, extra=True):
        k = n_restarts if (restarts is not None and extra) else 0
        starts = [start] + [restarts(data.X) for _ in range(k)]
        return fit_best(arch, starts, data.X, data.y, options, standardize=standardize,
                        monitor=monitor)

    model = initial_model or refit(init, initial, opt)
    data = initial
    rmse_init = rmse_prev = test_rmse(model)
    records: list[RunRecord] = []
    for r in range(1, cfg.n_rounds + 1):
        t0 = time.perf_counter()
        chosen = select_batch(model, pool, cfg, rng, round_index=r)
        if chosen.size == 0:
            logger.info("candidate pool exhausted after %d rounds", r - 1)
            break
        X_new = pool.pool[chosen]
        try:
            y_new = np.asarray(oracle(X_new), dtype=float).ravel()
        except Exception as exc:
            err = OracleError(f"oracle failed in round {r}: {exc}")
            err.records = records
            err.model = model
            raise err from exc
        data = data.extended(X_new, y_new)
        start = model.params if cfg.warm_start else init
        model = refit(start, data, refit_opt, extra=(r % restart_every == 0))
        rmse_now = test_rmse(model)
        stop = _stop_check(cfg, model, data, rmse_now, rmse_prev, rmse_init)
        wall = (time.perf_counter() - t0) * 1000.0 if record_wall_time else 0.0
        records.append(RunRecord(run_id, cfg.strategy, r, len(data), rmse_now, wall, X_new, stop))
        logger.debug("run %d %s round %d: n=%d rmse=%.5g", run_id, cfg.strategy, r,
                     len(data), rmse_now)
        rmse_prev = rmse_now
        if stop:
            logger.info("stopping rule met in round %d", r)
            break
    return model, records
