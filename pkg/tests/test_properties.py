"""Property-based checks of the structural invariants."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from almgp.active_learning import RunRecord, alc_variance_reduction, rmse
from almgp.benchmarks import rotate
from almgp.designs import DesignSpec, lhd_sample
from almgp.gp_core import build_state, noise_free_variance
from almgp.harness import aggregate
from almgp.kernels import KernelSpec, corr_matrix
from almgp.manifold_map import MlpArch
from almgp.mgp_model import MgpParams, condition, init_mgp_params

seeds = st.integers(0, 2**32 - 1)
SETTINGS = settings(max_examples=40, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])


@st.composite
def boxes(draw):
    dims = draw(st.integers(1, 8))
    lows = draw(st.lists(st.floats(-1e3, 1e3), min_size=dims, max_size=dims))
    widths = draw(st.lists(st.floats(1e-3, 1e3), min_size=dims, max_size=dims))
    return [(lo, lo + w) for lo, w in zip(lows, widths)]


@SETTINGS
@given(st.integers(1, 200), boxes(), seeds)
def test_lhd_one_point_per_stratum(n, bounds, seed):
    X = lhd_sample(DesignSpec(n, len(bounds), bounds, seed=seed))
    assert X.shape == (n, len(bounds))
    for j, (lo, hi) in enumerate(bounds):
        assert np.all((X[:, j] >= lo) & (X[:, j] <= hi))
        # n points, one per stratum  <=>  the k-th smallest lies in stratum k
        u = np.sort((X[:, j] - lo) / (hi - lo) * n)
        k = np.arange(n)
        assert np.all((u >= k - 1e-9 * n) & (u <= k + 1 + 1e-9 * n))


@SETTINGS
@given(st.integers(1, 19), st.integers(1, 3), st.floats(0.05, 5.0), st.floats(0.0, 0.5), seeds)
def test_adding_a_point_never_increases_variance(n, q, theta, rho, seed):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1, 1, size=(n, q))
    k = KernelSpec("gaussian", np.full(q, theta))
    x_new = rng.uniform(-1, 1, size=(1, q))
    Q = rng.uniform(-1.5, 1.5, size=(50, q))
    before = noise_free_variance(build_state(k, Z, np.zeros(n), tau2=1.0, rho=rho), Q)
    after = noise_free_variance(
        build_state(k, np.vstack([Z, x_new]), np.zeros(n + 1), tau2=1.0, rho=rho), Q)
    assert np.all(after <= before + 1e-9)


@SETTINGS
@given(st.integers(1, 12), st.integers(1, 4), seeds,
       st.sampled_from([("gaussian", None), ("matern", 0.5), ("matern", 1.5), ("matern", 2.5)]))
def test_correlation_matrix_structure(n, q, seed, kernel):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, q))
    K = corr_matrix(KernelSpec(kernel[0], rng.uniform(0.1, 3, q), kernel[1]), X)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.all((K > 0) & (K <= 1))
    assert np.linalg.eigvalsh(K).min() > -1e-10


@SETTINGS
@given(st.sampled_from(["1-6-2", "2-10-3", "3-10-2", "8-30-4", "2-3-3-1"]), seeds)
def test_params_roundtrip(text, seed):
    arch = MlpArch.parse(text)
    rng = np.random.default_rng(seed)
    p = init_mgp_params(arch, rng, rho_raw=rng.normal())
    v = p.flatten()
    assert v.size == arch.n_params + arch.latent_dim + 2
    assert np.array_equal(MgpParams.unflatten(arch, v).flatten(), v)


@SETTINGS
@given(st.integers(3, 10), seeds)
def test_alc_gains_are_non_negative(n, seed):
    rng = np.random.default_rng(seed)
    arch = MlpArch.parse("1-6-2")
    X = rng.uniform(size=(n, 1))
    m = condition(arch, init_mgp_params(arch, rng), X, np.sin(5 * X[:, 0]))
    gains = alc_variance_reduction(m, rng.uniform(size=(8, 1)), rng.uniform(size=(20, 1)))
    assert np.all(gains >= -1e-12)


@SETTINGS
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(0.01, 100))
def test_rmse_scales(values, c):
    a = np.array(values)
    b = np.zeros_like(a)
    assert rmse(a, b) >= 0
    assert np.isclose(rmse(c * a, b), c * rmse(a, b), rtol=1e-12, atol=1e-12)


@SETTINGS
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=20),
       st.floats(-360, 360))
def test_rotation_is_rigid(points, angle):
    P = np.array(points)
    R = rotate(P, angle)
    c = np.array([5.0, 5.0])
    np.testing.assert_allclose(np.linalg.norm(R - c, axis=1), np.linalg.norm(P - c, axis=1),
                               atol=1e-9)
    np.testing.assert_allclose(rotate(R, -angle), P, atol=1e-9)


@SETTINGS
@given(st.lists(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=6), min_size=1, max_size=5))
def test_aggregate_band_contains_mean(runs):
    records = [RunRecord(i, "alc", it + 1, 10 + it, v, 0.0, np.empty(0))
               for i, run in enumerate(runs) for it, v in enumerate(run)]
    rows = aggregate(records)
    assert len(rows) == max(len(r) for r in runs)
    for r in rows:
        assert r["min_rmse"] - 1e-12 <= r["mean_rmse"] <= r["max_rmse"] + 1e-12
        assert r["n_runs"] == len(runs)
    assert aggregate(records) == rows
