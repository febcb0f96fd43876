"""Fit a manifold GP to the 1-D trigonometric benchmark and run a few ALC rounds by hand.

Run with ``python demos/trig1d_walkthrough.py``; it takes well under a minute.
"""

import numpy as np

from almgp import (PoolState, alc_scores, fit, get_problem, init_mgp_params,
                   make_problem_data, predict_mgp, rmse, variance_screen)
from almgp.benchmarks import stage_rng
from almgp.harness import initial_fit

problem = get_problem("trig1d")
data = make_problem_data(problem, seed=3)
print(f"{problem.name}: {len(data.train)} initial points, arch {problem.arch}")

# joint fit of the network and the GP hyperparameters from the default start
init = init_mgp_params(problem.arch, stage_rng(3, "init"))
plain = fit(problem.arch, init, data.train.X, data.train.y, problem.optim)
mean, _ = predict_mgp(plain, data.test.X)
print(f"single start: rho = {plain.params.rho:.3g}, tau2 = {plain.params.tau2:.3g}, "
      f"test RMSE {rmse(mean, data.test.y):.4f}")
# with ten noisy points the likelihood also has an all-noise basin (large rho,
# flat mean); this seed falls into it, so add median-heuristic restarts
model = initial_fit(problem, data, seed=3)
res = model.result
print(f"best of {1 + problem.n_restarts} starts: {res.n_iter} iterations, status {res.status}")
print(f"tau2 = {model.params.tau2:.3g}, rho = {model.params.rho:.3g}, "
      "lengthscales = " + ", ".join(f"{v:.3g}" for v in model.params.kernel_spec().lengthscales))
mean, _ = predict_mgp(model, data.test.X)
print(f"test RMSE after the initial fit: {rmse(mean, data.test.y):.4f}")

# one acquisition round spelled out: screen by variance, then score by ALC
pool = PoolState(data.candidates.copy(), data.reference)
X, y = data.train.X, data.train.y
for round_ in range(1, 6):
    screened = variance_screen(model, pool, problem.al.K)
    scores = alc_scores(model, pool.pool[screened], pool.reference)
    pick = screened[int(np.argmax(scores))]
    x_new = pool.pool[pick][None, :]
    pool.remove([pick], round_)
    X = np.vstack([X, x_new])
    y = np.concatenate([y, data.oracle(x_new)])
    model = fit(problem.arch, model.params, X, y, problem.refit_optim)
    mean, _ = predict_mgp(model, data.test.X)
    print(f"round {round_}: picked x = {x_new[0, 0]:.3f} "
          f"(best of {screened.size} screened), test RMSE {rmse(mean, data.test.y):.4f}")
