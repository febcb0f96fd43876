import math

import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from almgp.errors import DivergenceError, InvalidSpecError
from almgp.lbfgs import OptimConfig, StopTracker, early_stop, minimize, strong_wolfe

C1, C2 = 1e-4, 0.9


def sq(x):
    return float(x @ x), 2 * x


def rosenbrock(x):
    return float(rosen(x)), rosen_der(x)


def assert_wolfe(trace, c1=C1, c2=C2):
    assert trace
    for e in trace:
        assert e.wolfe
        assert e.loss <= e.f0 + c1 * e.step * e.gtd0 + 1e-12 * abs(e.f0)
        assert abs(e.gtd) <= c2 * abs(e.gtd0)


def test_quadratic():
    res = minimize(sq, [3.0, 4.0], OptimConfig(early_stop_tol=0.0))
    np.testing.assert_allclose(res.x, 0.0, atol=1e-8)
    assert res.n_iter <= 5
    assert_wolfe(res.trace)


def test_rosenbrock():
    res = minimize(rosenbrock, [-1.2, 1.0], OptimConfig(early_stop_tol=0.0))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)
    assert_wolfe(res.trace)


def test_near_exact_line_search_on_quadratic():
    # with (almost) exact line searches L-BFGS matches conjugate gradients:
    # an n-dimensional convex quadratic is solved in about n iterations
    rng = np.random.default_rng(0)
    n = 6
    M = rng.normal(size=(n, n))
    H = M @ M.T + n * np.eye(n)
    b = rng.normal(size=n)
    cfg = OptimConfig(wolfe_c1=1e-10, wolfe_c2=1e-8, early_stop_tol=0.0, grad_tol=1e-9)
    res = minimize(lambda x: (0.5 * x @ H @ x - b @ x, H @ x - b), np.zeros(n), cfg)
    np.testing.assert_allclose(res.x, np.linalg.solve(H, b), atol=1e-8)
    assert res.n_iter <= n + 1


def test_strong_wolfe_directly():
    x = np.array([-1.2, 1.0])
    f0, g0 = rosenbrock(x)
    d = -g0
    gtd0 = float(g0 @ d)

    def phi(t):
        return rosenbrock(x + t * d)

    p, evals, ok = strong_wolfe(phi, d, f0, g0, gtd0, 1.0, C1, C2, 25)
    assert ok and evals >= 1
    assert p.f <= f0 + C1 * p.t * gtd0
    assert abs(p.g @ d) <= C2 * abs(gtd0)


def test_non_finite_trials_are_overshoots():
    # the objective blows up beyond x = 2; the search must back off, not abort
    def f(x):
        if x[0] > 2:
            return math.inf, np.array([math.nan])
        return float((x[0] - 1.5) ** 2), np.array([2 * (x[0] - 1.5)])

    res = minimize(f, [0.0], OptimConfig(learning_rate=10.0, early_stop_tol=0.0))
    assert res.x[0] == pytest.approx(1.5, abs=1e-6)


def test_divergence_at_start():
    with pytest.raises(DivergenceError):
        minimize(lambda x: (math.nan, x), [1.0])


def test_line_search_budget_exhausted():
    # a linear objective is unbounded below, so no step satisfies the curvature rule
    res = minimize(lambda x: (float(-x[0]), np.array([-1.0])), [0.0],
                   OptimConfig(max_line_search=3, early_stop_tol=0.0, max_total_iters=1,
                               max_iters_per_step=2))
    assert res.line_search_failed
    assert res.fun < 0


def test_monitor_drives_early_stop():
    seen = []

    def monitor(x):
        seen.append(x.copy())
        return 1.0  # flat monitor: relative change undefined, never stops

    res = minimize(sq, [3.0, 4.0], OptimConfig(max_iters_per_step=1, max_total_iters=3,
                                               grad_tol=0.0), monitor=monitor)
    assert res.status != "early_stop"
    assert len(seen) >= 2


def test_early_stop_examples():
    t = StopTracker(10.0)
    t.record(5.0)
    t.record(5.0)
    assert t.relative_change == 0.0
    assert early_stop(t, 1e-300)

    t = StopTracker(10.0)
    t.record(10.0)
    assert math.isnan(t.relative_change)
    assert not early_stop(t, 1.0)

    t = StopTracker(10.0)
    t.record(2.0)
    t.record(1.0)
    assert t.relative_change == pytest.approx(1 / 9)
    assert early_stop(t, 0.2) and not early_stop(t, 0.1)


def test_config_validation():
    with pytest.raises(InvalidSpecError):
        OptimConfig(wolfe_c1=0.5, wolfe_c2=0.4)
    with pytest.raises(InvalidSpecError):
        OptimConfig(history_size=0)
    with pytest.raises(InvalidSpecError):
        OptimConfig(learning_rate=0.0)
