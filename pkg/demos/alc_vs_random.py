"""Compare ALC and random acquisition through the experiment harness.

Runs a shortened trig1d experiment (3 repetitions, 20 acquisitions),
writes the usual result bundle under ``results/demo`` and prints the
averaged RMSE curve every few rounds. Takes about a minute and a half.
"""

import json

from almgp import ExperimentConfig, run_experiment
from almgp.harness import read_aggregate

cfg = ExperimentConfig(problem="trig1d", repetitions=3, output_dir="results/demo",
                       al={"N_max": 20}, save_checkpoints=False)
out = run_experiment(cfg)
rows = read_aggregate(out / "aggregate.csv")
curves = {}
for row in rows:
    curves.setdefault(row["strategy"], {})[int(row["iteration"])] = float(row["mean_rmse"])

print(f"bundle written to {out}")
print("round   alc       random")
for it in sorted(curves["alc"]):
    if it % 4 == 0 or it == 1:
        print(f"{it:5d}   {curves['alc'][it]:.4f}    {curves['random'][it]:.4f}")
summary = json.loads((out / "summary.json").read_text())
print("final means:", {k: round(v, 4) for k, v in summary["final_mean_rmse"].items()})
