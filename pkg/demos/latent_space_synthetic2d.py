"""Inspect the latent space learned on the rotated 2-D ridge.

The surface varies mostly along one direction (the ridge is a 1-D bump
rotated by 45 degrees). After fitting, the latent features should be
driven by that direction. We check this by regressing each latent
coordinate on the rotated inputs.

Run with ``python demos/latent_space_synthetic2d.py`` (about a minute).
"""

import numpy as np

from almgp import fit, get_problem, init_mgp_params, make_problem_data, predict_mgp, rmse
from almgp.benchmarks import rotate, stage_rng
from almgp.designs import grid_with_mesh

problem = get_problem("synthetic2d")
data = make_problem_data(problem, seed=0)
model = fit(problem.arch, init_mgp_params(problem.arch, stage_rng(0, "init")),
            data.train.X, data.train.y, problem.optim)
print(f"fit finished with status {model.result.status} after {model.result.n_iter} iterations")

grid = grid_with_mesh([(0.0, 10.0), (0.0, 10.0)], 0.2)
mean, var = predict_mgp(model, grid)
truth = problem.truth(grid)
print(f"grid RMSE on {len(grid)} points (mesh 0.2): {rmse(mean, truth):.4f}")
print(f"largest predictive sd on the grid: {np.sqrt(var.max()):.4f}")

# the unrotated coordinates: u2 carries the ridge, u1 only the small linear trend
U = rotate(grid, -45.0)
Z = model.latent(grid)
design = np.column_stack([np.ones(len(U)), U])
for k in range(Z.shape[1]):
    coef, *_ = np.linalg.lstsq(design, Z[:, k], rcond=None)
    fitted = design @ coef
    r2 = 1 - np.sum((Z[:, k] - fitted) ** 2) / np.sum((Z[:, k] - Z[:, k].mean()) ** 2)
    print(f"latent dim {k}: weight on u1 {coef[1]:+.3f}, on u2 {coef[2]:+.3f}, linear R^2 {r2:.2f}")
