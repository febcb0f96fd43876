"""The four test problems and their data-generation recipes."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.stats import norm

from .active_learning import AlConfig, Dataset
from .designs import DesignSpec, lhd_sample, scale_to_bounds, uniform_grid
from .errors import DomainError
from .lbfgs import OptimConfig
from .manifold_map import MlpArch

__all__ = [
    "Problem",
    "ProblemData",
    "PROBLEMS",
    "get_problem",
    "eval_trig1d",
    "trig1d",
    "rotate",
    "synthetic2d_unrotated",
    "eval_synthetic2d",
    "synthetic2d",
    "sphere_point",
    "sphere_f",
    "sphere_disk",
    "eval_sphere3d",
    "eval_borehole",
    "borehole",
    "BOREHOLE_BOUNDS",
    "make_problem_data",
]

# --- piecewise trigonometric ------------------------------------------------


def trig1d(x) -> np.ndarray:
    """Vectorized piecewise trigonometric function on [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise DomainError("trig1d is defined on [0, 1]")
    return np.where(x <= 0.33, 1.35 * np.cos(12 * np.pi * x),
                    np.where(x <= 0.66, 1.35, 1.35 * np.cos(6 * np.pi * x)))


def eval_trig1d(x: float) -> float:
    return float(trig1d(x))


# --- rotated two-dimensional function ----------------------------------------

SYNTH_CENTER = (5.0, 5.0)


def rotate(points, angle_deg: float, center=SYNTH_CENTER) -> np.ndarray:
    """Rotate points counter-clockwise by ``angle_deg`` about ``center``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.deg2rad(angle_deg)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    c = np.asarray(center, dtype=float)
    return (P - c) @ R.T + c


def synthetic2d_unrotated(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return 1.0 - norm.pdf(x2, 3.0, 0.5) - norm.pdf(x2, -3.0, 0.5) + x1 / 100.0


def synthetic2d(X) -> np.ndarray:
    """The unrotated surface turned by 45 degrees about (5, 5).

    The value at ``x`` is the unrotated surface evaluated at ``x`` rotated
    back by -45 degrees.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any((X < 0) | (X > 10)):
        raise DomainError("synthetic2d is defined on [0, 10]^2")
    U = rotate(X, -45.0)
    return synthetic2d_unrotated(U[:, 0], U[:, 1])


def eval_synthetic2d(x1: float, x2: float) -> float:
    return float(synthetic2d([[x1, x2]])[0])


# --- unit sphere -------------------------------------------------------------


def sphere_point(v, alpha) -> np.ndarray:
    """Map ``(v, alpha)`` in [-1, 1] x [0, 2 pi] onto the unit sphere."""
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r = np.sqrt(np.clip(1.0 - v * v, 0.0, None))
    return np.stack([r * np.cos(alpha), r * np.sin(alpha), v], axis=-1)


def sphere_f(P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return np.cos(P[:, 0]) + P[:, 1] ** 2 + np.exp(P[:, 2])


def sphere_disk(x, y):
    """The sphere function on the upper hemisphere, written over the unit disk.

    Uses ``z = sqrt(1 - x^2 - y^2)``; note ``exp(1 - x^2 - y^2)`` would be
    ``exp(z^2)``, a different surface.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if np.any(r2 > 1 + 1e-12):
        raise DomainError("sphere_disk is defined on the closed unit disk")
    return np.cos(x) + y * y + np.exp(np.sqrt(np.clip(1.0 - r2, 0.0, None)))


def eval_sphere3d(v: float, alpha: float):
    if not (-1 <= v <= 1 and 0 <= alpha <= 2 * np.pi):
        raise DomainError("need v in [-1, 1] and alpha in [0, 2 pi]")
    x, y, z = sphere_point(v, alpha)
    return float(x), float(y), float(z), float(sphere_f([[x, y, z]])[0])


# --- borehole ----------------------------------------------------------------

# r_w, r, T_u, H_u, T_l, H_l, L, K_w
BOREHOLE_BOUNDS = (
    (0.05, 0.15),
    (100.0, 50000.0),
    (63070.0, 115600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12045.0),
)
BOREHOLE_NAMES = ("r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w")


def borehole(U, check: bool = True) -> np.ndarray:
    """Water flow rate through a borehole, inputs in physical units (rows of 8)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != 8:
        raise DomainError("borehole takes 8 inputs")
    if check:
        lo = np.array([b[0] for b in BOREHOLE_BOUNDS])
        hi = np.array([b[1] for b in BOREHOLE_BOUNDS])
        tol = 1e-9 * (hi - lo)
        if np.any(U < lo - tol) or np.any(U > hi + tol):
            raise DomainError("borehole input outside the standard ranges")
    rw, r, Tu, Hu, Tl, Hl, L, Kw = U.T
    log_ratio = np.log(r / rw)
    denom = log_ratio * (1.0 + 2.0 * L * Tu / (log_ratio * rw**2 * Kw) + Tu / Tl)
    return 2.0 * np.pi * Tu * (Hu - Hl) / denom


def eval_borehole(u) -> float:
    return float(borehole(np.asarray(u, dtype=float)[None, :])[0])


def borehole_unit(X) -> np.ndarray:
    """Borehole evaluated on unit-cube coordinates."""
    return borehole(scale_to_bounds(np.clip(X, 0.0, 1.0), BOREHOLE_BOUNDS))


# --- problem registry --------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """A benchmark with its default experiment settings.

    ``truth`` maps model inputs (the coordinates fed to the network) to
    noise-free responses.
    """

    name: str
    input_dim: int
    arch: MlpArch
    truth: Callable
    noise_sd: float
    n0: int
    n_test: int
    n_cand: int
    n_ref: int
    al: AlConfig
    optim: OptimConfig
    refit_optim: OptimConfig
    standardize: bool = False
    fit_monitor: str | None = None
    n_restarts: int = 0
    restart_every: int = 10


@dataclass
class ProblemData:
    train: Dataset
    test: Dataset
    candidates: np.ndarray
    reference: np.ndarray
    oracle: Callable


def _trig_problem():
    opt = OptimConfig(history_size=20, learning_rate=0.001, max_iters_per_step=20,
                      max_total_iters=5000, early_stop_tol=1e-5)
    return Problem("trig1d", 1, MlpArch((1, 6, 2)), lambda X: trig1d(np.asarray(X)[:, 0]),
                   0.1, n0=10, n_test=500, n_cand=100, n_ref=100,
                   al=AlConfig(K=20, B=1, N_max=50, tol=1e-5, stop_metric="none"),
                   optim=opt, refit_optim=replace(opt, max_total_iters=8),
                   n_restarts=2, restart_every=5)


def _synthetic_problem():
    opt = OptimConfig(history_size=50, learning_rate=0.01, max_iters_per_step=50,
                      max_total_iters=5000, early_stop_tol=1e-5)
    return Problem("synthetic2d", 2, MlpArch((2, 10, 3)), synthetic2d, 0.0,
                   n0=50, n_test=500, n_cand=500, n_ref=500,
                   al=AlConfig(K=50, B=1, N_max=50, stop_metric="none"),
                   optim=opt, refit_optim=replace(opt, max_total_iters=20))


def _sphere_problem():
    opt = OptimConfig(history_size=50, learning_rate=0.01, max_iters_per_step=20,
                      max_total_iters=5000, early_stop_tol=1e-5)
    return Problem("sphere3d", 3, MlpArch((3, 10, 2)), sphere_f, 0.0,
                   n0=50, n_test=500, n_cand=500, n_ref=500,
                   al=AlConfig(K=50, B=1, N_max=100, stop_metric="none"),
                   optim=opt, refit_optim=opt)


def _borehole_problem():
    opt = OptimConfig(history_size=50, learning_rate=0.001, max_iters_per_step=100,
                      max_total_iters=10000, early_stop_tol=1e-8)
    return Problem("borehole8d", 8, MlpArch((8, 30, 4)), borehole_unit, 0.0,
                   n0=50, n_test=500, n_cand=500, n_ref=500,
                   al=AlConfig(K=50, B=1, N_max=150, stop_metric="none"),
                   optim=opt, refit_optim=replace(opt, max_total_iters=1),
                   fit_monitor="test_rmse")


PROBLEMS = {
    "trig1d": _trig_problem,
    "synthetic2d": _synthetic_problem,
    "sphere3d": _sphere_problem,
    "borehole8d": _borehole_problem,
}


def get_problem(name: str) -> Problem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    """Independent generator for one stochastic stage (design, noise, init, ...) of a seed."""
    return np.random.default_rng([int(seed), *stage.encode()])


def stage_seed(seed: int, stage: str) -> int:
    return int(stage_rng(seed, stage).integers(0, 2**63))


def _lhd(n, bounds, seed, stage):
    return lhd_sample(DesignSpec(n, len(bounds), tuple(bounds), "lhd", stage_seed(seed, stage)))


def _sphere_lhd(n, seed, stage):
    VA = _lhd(n, [(-1.0, 1.0), (0.0, 2 * np.pi)], seed, stage)
    return sphere_point(VA[:, 0], VA[:, 1])


def make_problem_data(problem: Problem, seed: int, *, n0: int | None = None,
                      n_test: int | None = None, n_cand: int | None = None,
                      n_ref: int | None = None) -> ProblemData:
    """Generate initial, test, candidate and reference sets for one repetition.

    Every set is drawn from its own stream derived from ``seed``. Noise is
    added to training labels only, including labels produced by the oracle.
    """
    n0 = n0 or problem.n0
    n_test = n_test or problem.n_test
    n_cand = n_cand or problem.n_cand
    n_ref = n_ref or problem.n_ref
    name = problem.name
    if name == "trig1d":
        box = [(0.0, 1.0)]
        X0 = _lhd(n0, box, seed, "train")
        Xt = uniform_grid(DesignSpec(n_test, 1, tuple(box), "uniform_grid"))
        Xc = uniform_grid(DesignSpec(n_cand, 1, tuple(box), "uniform_grid"))
        Xr = uniform_grid(DesignSpec(n_ref, 1, tuple(box), "uniform_grid"))
    elif name == "synthetic2d":
        box = [(0.0, 10.0)] * 2
        X0, Xt, Xc, Xr = (_lhd(n, box, seed, s) for n, s in
                          ((n0, "train"), (n_test, "test"), (n_cand, "cand"), (n_ref, "ref")))
    elif name == "sphere3d":
        X0, Xt, Xc, Xr = (_sphere_lhd(n, seed, s) for n, s in
                          ((n0, "train"), (n_test, "test"), (n_cand, "cand"), (n_ref, "ref")))
    elif name == "borehole8d":
        box = [(0.0, 1.0)] * 8
        X0, Xt, Xc, Xr = (_lhd(n, box, seed, s) for n, s in
                          ((n0, "train"), (n_test, "test"), (n_cand, "cand"), (n_ref, "ref")))
    else:
        raise ValueError(f"unknown problem {name!r}")

    noise_rng = stage_rng(seed, "noise")

    def oracle(X):
        y = problem.truth(X)
        if problem.noise_sd > 0:
            y = y + problem.noise_sd * noise_rng.standard_normal(y.shape)
        return y

    train = Dataset(X0, oracle(X0))
    test = Dataset(Xt, problem.truth(Xt))
    return ProblemData(train, test, Xc, Xr, oracle)
