"""L-BFGS with a strong Wolfe line search and relative-change early stopping."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, InvalidSpecError

logger = logging.getLogger(__name__)

__all__ = [
    "OptimConfig",
    "StopTracker",
    "early_stop",
    "strong_wolfe",
    "minimize",
    "MinimizeResult",
    "TraceEntry",
]

MAX_BRACKET_TRIALS = 25


@dataclass(frozen=True)
class OptimConfig:
    """Optimizer settings.

    Optimization proceeds in outer steps of up to ``max_iters_per_step``
    L-BFGS iterations each; at most ``max_total_iters`` steps are taken and
    the early-stop rule is checked after every step. The curvature history
    carries over between steps. ``learning_rate`` is the first trial step of
    every line search (scaled by ``min(1, 1/|g|_1)`` on the very first
    iteration). One line search uses at most ``max_line_search`` evaluations.
    """

    history_size: int = 20
    learning_rate: float = 1.0
    max_iters_per_step: int = 20
    max_total_iters: int = 5000
    early_stop_tol: float = 1e-5
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    grad_tol: float = 1e-10
    tolerance_change: float = 1e-12
    max_line_search: int = MAX_BRACKET_TRIALS

    def __post_init__(self):
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise InvalidSpecError("need 0 < c1 < c2 < 1")
        if min(self.history_size, self.max_iters_per_step, self.max_total_iters,
               self.max_line_search) < 1:
            raise InvalidSpecError("history and iteration limits must be positive")
        if self.learning_rate <= 0 or self.early_stop_tol < 0:
            raise InvalidSpecError("learning_rate must be positive and early_stop_tol >= 0")


@dataclass
class StopTracker:
    loss_initial: float
    loss_previous: float = math.nan
    loss_current: float = math.nan
    n_recorded: int = 1

    def record(self, loss: float):
        self.loss_previous = self.loss_current if self.n_recorded > 1 else self.loss_initial
        self.loss_current = float(loss)
        self.n_recorded += 1

    @property
    def relative_change(self) -> float:
        """``|(L_cur - L_prev) / (L_cur - L_init)|``; NaN when undefined."""
        denom = self.loss_current - self.loss_initial
        if self.n_recorded < 2 or denom == 0 or not math.isfinite(denom):
            return math.nan
        return abs((self.loss_current - self.loss_previous) / denom)


def early_stop(tracker: StopTracker, tol: float) -> bool:
    """True when the relative change is defined and below ``tol``."""
    r = tracker.relative_change
    return bool(math.isfinite(r) and r < tol)


@dataclass
class TraceEntry:
    iteration: int
    loss: float
    grad_norm: float
    step: float
    n_evals: int
    # line-search bookkeeping, kept so tests can re-check the Wolfe conditions
    f0: float = math.nan
    gtd0: float = math.nan
    gtd: float = math.nan
    wolfe: bool = True


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    status: str
    line_search_failed: bool = False
    trace: list[TraceEntry] = field(default_factory=list)


def _cubic_minimizer(t1, f1, g1, t2, f2, g2, lo, hi):
    """Minimizer of the cubic matching values and slopes at t1, t2, clipped to [lo, hi]."""
    if not all(math.isfinite(v) for v in (f1, g1, f2, g2)) or t1 == t2:
        return 0.5 * (lo + hi)
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (t1 - t2)
    disc = d1 * d1 - g1 * g2
    if disc < 0:
        return 0.5 * (lo + hi)
    d2 = math.copysign(math.sqrt(disc), t2 - t1)
    denom = g2 - g1 + 2.0 * d2
    if denom == 0:
        return 0.5 * (lo + hi)
    t = t2 - (t2 - t1) * (g2 + d2 - d1) / denom
    if not math.isfinite(t):
        return 0.5 * (lo + hi)
    return min(max(t, lo), hi)


@dataclass
class _Point:
    t: float
    f: float
    g: np.ndarray | None
    gtd: float


def strong_wolfe(phi: Callable, d: np.ndarray, f0: float, g0: np.ndarray, gtd0: float,
                 t: float, c1: float = 1e-4, c2: float = 0.9, max_evals: int = 25,
                 tolerance_change: float = 1e-12):
    """Bracketing-and-zoom search for a step satisfying the strong Wolfe conditions.

    ``phi(t)`` returns ``(f, g)`` at ``x + t d`` (``g`` may be None when
    ``f`` is not finite). Non-finite trial values are
    treated as overshoots. Returns ``(point, n_evals, ok)``; when ``ok`` is
    false the point is the best sufficient-decrease step found (possibly
    ``t = 0``).
    """
    d_norm = float(np.max(np.abs(d)))

    def evaluate(step):
        f, g = phi(step)
        gtd = float(g @ d) if g is not None else math.nan
        return _Point(step, f, g, gtd)

    start = _Point(0.0, f0, g0, gtd0)
    prev = start
    best = start
    evals = 0
    lo = hi = None

    def armijo(p):
        return math.isfinite(p.f) and p.f <= f0 + c1 * p.t * gtd0

    # bracketing phase
    while evals < min(max_evals, MAX_BRACKET_TRIALS):
        cur = evaluate(t)
        evals += 1
        if not math.isfinite(cur.f) or not armijo(cur) or (evals > 1 and cur.f >= prev.f):
            lo, hi = prev, cur
            break
        if cur.f < best.f:
            best = cur
        if abs(cur.gtd) <= -c2 * gtd0:
            return cur, evals, True
        if cur.gtd >= 0:
            lo, hi = cur, prev
            break
        t_next = _cubic_minimizer(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd,
                                  cur.t + 0.01 * (cur.t - prev.t), 10.0 * cur.t)
        prev, t = cur, t_next
    else:
        return best, evals, False

    # zoom phase: lo always satisfies sufficient decrease and has the lower value
    while evals < max_evals:
        a, b = sorted((lo.t, hi.t))
        width = b - a
        if width * d_norm < tolerance_change:
            break
        if math.isfinite(hi.f):
            t = _cubic_minimizer(lo.t, lo.f, lo.gtd, hi.t, hi.f, hi.gtd, a, b)
            # keep away from the bracket ends so the interval keeps shrinking
            if min(t - a, b - t) < 0.1 * width:
                t = 0.5 * (a + b)
        else:
            t = 0.5 * (a + b)
        cur = evaluate(t)
        evals += 1
        if not armijo(cur) or cur.f >= lo.f:
            hi = cur
            continue
        if abs(cur.gtd) <= -c2 * gtd0:
            return cur, evals, True
        if cur.gtd * (hi.t - lo.t) >= 0:
            hi = lo
        lo = cur
    best = lo if lo.f < best.f else best
    return best, evals, False


class _Phi:
    """Objective restricted to the ray ``x + t d``; failures become +inf."""

    def __init__(self, fun, x, direction):
        self.fun = fun
        self.x = x
        self.direction = direction

    def __call__(self, t):
        try:
            f, g = self.fun(self.x + t * self.direction)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            logger.debug("objective failed at trial step %g: %s", t, exc)
            return math.inf, None
        f = float(f)
        if not math.isfinite(f):
            return math.inf, None
        g = np.asarray(g, dtype=float)
        if not np.isfinite(g).all():
            return math.inf, None
        return f, g


def _two_loop(g, history, gamma):
    q = -g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    q *= gamma
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(fun: Callable, x0, cfg: OptimConfig = OptimConfig(),
             monitor: Callable | None = None) -> MinimizeResult:
    """Minimize ``fun(x) -> (value, gradient)`` from ``x0``.

    Stops after ``cfg.max_total_iters`` outer steps, when the gradient
    max-norm drops below ``cfg.grad_tol``, when a line search makes no
    progress, or when the early-stop rule fires on the loss (or on
    ``monitor(x)`` when given) at the end of a step.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not math.isfinite(f) or not np.isfinite(g).all():
        raise DivergenceError("objective is not finite at the starting point")

    history: deque = deque(maxlen=cfg.history_size)
    gamma = 1.0
    tracker = StopTracker(monitor(x) if monitor is not None else f)
    trace: list[TraceEntry] = []
    n_eval = 1
    status = "max_iter"
    ls_failed = False
    it = 0

    for _step in range(cfg.max_total_iters):
        for _ in range(cfg.max_iters_per_step):
            if np.max(np.abs(g)) < cfg.grad_tol:
                status = "converged"
                break
            it += 1
            d = _two_loop(g, history, gamma)
            gtd = float(g @ d)
            if not gtd < 0:
                history.clear()
                gamma = 1.0
                d = -g
                gtd = float(g @ d)
            t0 = cfg.learning_rate
            if it == 1:
                t0 *= min(1.0, 1.0 / np.sum(np.abs(g)))
            point, evals, ok = strong_wolfe(
                _Phi(fun, x, d), d, f, g, gtd, t0, cfg.wolfe_c1, cfg.wolfe_c2,
                cfg.max_line_search, tolerance_change=cfg.tolerance_change)
            n_eval += evals
            if not ok:
                ls_failed = True
                if point.t == 0.0 or point.g is None:
                    status = "line_search_failed"
                    break
            s = point.t * d
            y = point.g - g
            ys = float(y @ s)
            if ys > 1e-10:
                history.append((s, y, 1.0 / ys))
                gamma = ys / float(y @ y)
            f_old = f
            x, f, g = x + s, point.f, point.g
            trace.append(TraceEntry(it, f, float(np.linalg.norm(g)), point.t, evals,
                                    f0=f_old, gtd0=gtd, gtd=point.gtd, wolfe=ok))
            if abs(f - f_old) < cfg.tolerance_change:
                status = "no_progress"
                break
        if status != "max_iter":
            break
        tracker.record(monitor(x) if monitor is not None else f)
        if early_stop(tracker, cfg.early_stop_tol):
            status = "early_stop"
            break
    return MinimizeResult(x, f, g, len(trace), n_eval, status, ls_failed, trace)
