"""Experiment orchestration: repetitions x strategies, CSV records, summaries, SVG plot."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .active_learning import AlConfig, PoolState, RunRecord, rmse, run_loop
from .benchmarks import Problem, ProblemData, get_problem, make_problem_data, stage_rng
from .manifold_map import MlpArch
from .mgp_model import (FittedMgp, fit_best, init_mgp_params, median_lengthscales,
                        predict_mgp, save_checkpoint)

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RECORD_HEADER",
    "run_experiment",
    "aggregate",
    "aggregate_dir",
    "plot_dir",
    "render_svg",
    "resolve_output_dir",
]

CONFIG_VERSION = 1
OUTPUT_ROOT_ENV = "ALMGP_OUTPUT_ROOT"
RECORD_HEADER = ["run_id", "strategy", "iteration", "n_train", "test_rmse", "wall_ms"]
AGGREGATE_HEADER = ["strategy", "iteration", "mean_rmse", "min_rmse", "max_rmse", "n_runs"]


@dataclass
class ExperimentConfig:
    """One experiment. Repetition ``i`` uses seed ``base_seed + i`` everywhere.

    ``al``, ``optim`` and ``refit_optim`` hold overrides on top of the
    problem defaults; ``data`` may override the set sizes ``n0``, ``n_test``,
    ``n_cand`` and ``n_ref``.
    """

    problem: str
    repetitions: int = 10
    base_seed: int = 0
    strategies: tuple = ("alc", "random")
    output_dir: str = ""
    arch: str | None = None
    al: dict = field(default_factory=dict)
    optim: dict = field(default_factory=dict)
    refit_optim: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    n_restarts: int | None = None
    restart_every: int | None = None
    standardize: bool | None = None
    fit_monitor: str | None = None
    workers: int = 1
    record_wall_time: bool = True
    save_checkpoints: bool = True
    version: int = CONFIG_VERSION

    def __post_init__(self):
        self.strategies = tuple(self.strategies)
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if not self.strategies:
            raise ValueError("need at least one strategy")
        if self.version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        get_problem(self.problem)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        return d

    def resolved_problem(self) -> Problem:
        pb = get_problem(self.problem)
        changes = {}
        if self.arch:
            changes["arch"] = MlpArch.parse(self.arch)
        if self.al:
            changes["al"] = replace(pb.al, **self.al)
        if self.optim:
            changes["optim"] = replace(pb.optim, **self.optim)
            # refits inherit from the main optimizer unless overridden separately
            changes["refit_optim"] = replace(pb.refit_optim, **self.optim)
        if self.refit_optim:
            changes["refit_optim"] = replace(changes.get("refit_optim", pb.refit_optim),
                                             **self.refit_optim)
        if self.n_restarts is not None:
            changes["n_restarts"] = self.n_restarts
        if self.restart_every is not None:
            changes["restart_every"] = self.restart_every
        if self.standardize is not None:
            changes["standardize"] = self.standardize
        if self.fit_monitor is not None:
            changes["fit_monitor"] = None if self.fit_monitor == "none" else self.fit_monitor
        for key, value in self.data.items():
            if key not in ("n0", "n_test", "n_cand", "n_ref"):
                raise ValueError(f"unknown data override {key!r}")
            changes[key] = int(value)
        return replace(pb, **changes)


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir or f"runs/{cfg.problem}")
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _check_writable(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()


def restart_sampler(problem: Problem, rng: np.random.Generator):
    """``X -> MgpParams``: a fresh network draw with median-heuristic lengthscales."""
    def draw(X):
        return median_lengthscales(problem.arch, init_mgp_params(problem.arch, rng), X)
    return draw


def initial_fit(problem: Problem, data: ProblemData, seed: int, monitor=None) -> FittedMgp:
    """Step 0 fit from the seeded default start plus the problem's restarts."""
    init_rng = stage_rng(seed, "init")
    init = init_mgp_params(problem.arch, init_rng)
    draw = restart_sampler(problem, init_rng)
    starts = [init] + [draw(data.train.X) for _ in range(problem.n_restarts)]
    return fit_best(problem.arch, starts, data.train.X, data.train.y, problem.optim,
                    standardize=problem.standardize, monitor=monitor)


def _run_repetition(problem: Problem, rep: int, seed: int, strategies, record_wall_time):
    """All strategies for one repetition; they share data, init and the initial fit."""
    data = make_problem_data(problem, seed)
    init = init_mgp_params(problem.arch, stage_rng(seed, "init"))

    monitor = None
    if problem.fit_monitor == "test_rmse":
        def monitor(model):
            return rmse(predict_mgp(model, data.test.X)[0], data.test.y)

    t0 = time.perf_counter()
    model0 = initial_fit(problem, data, seed, monitor)
    initial_rmse = rmse(predict_mgp(model0, data.test.X)[0], data.test.y)
    out = []
    for j, strategy in enumerate(strategies):
        run_id = rep * len(strategies) + j
        cfg = replace(problem.al, strategy=strategy)
        pool = PoolState(data.candidates.copy(), data.reference)
        # each strategy replays the same oracle noise and restart draws
        run_data = make_problem_data(problem, seed)
        restart_rng = stage_rng(seed, "restart")
        model, records = run_loop(
            data.train, pool, problem.arch, cfg, problem.optim, run_data.oracle, init,
            test=data.test, rng=stage_rng(seed, "acquire"), refit_opt=problem.refit_optim,
            standardize=problem.standardize, fit_monitor=problem.fit_monitor, run_id=run_id,
            record_wall_time=record_wall_time, initial_model=model0,
            restarts=restart_sampler(problem, restart_rng),
            n_restarts=problem.n_restarts, restart_every=problem.restart_every)
        out.append({"run_id": run_id, "strategy": strategy, "seed": seed,
                    "initial_rmse": initial_rmse, "records": records, "model": model})
    logger.info("repetition %d done in %.1fs", rep, time.perf_counter() - t0)
    return out


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every repetition and strategy; write the result bundle and return its directory.

    Bundle contents: ``records.csv``, ``selected_points.csv``,
    ``aggregate.csv``, ``rmse_curve.svg``, ``summary.json``, ``config.json``
    and ``checkpoints/run_<id>.json``.
    """
    out = resolve_output_dir(cfg)
    _check_writable(out)
    problem = cfg.resolved_problem()
    reps = [(i, cfg.base_seed + i) for i in range(cfg.repetitions)]
    t0 = time.perf_counter()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            futures = [ex.submit(_run_repetition, problem, i, s, cfg.strategies,
                                 cfg.record_wall_time) for i, s in reps]
            runs = [r for f in futures for r in f.result()]
    else:
        runs = [r for i, s in reps
                for r in _run_repetition(problem, i, s, cfg.strategies, cfg.record_wall_time)]
    elapsed = time.perf_counter() - t0
    runs.sort(key=lambda r: r["run_id"])

    records = [rec for r in runs for rec in r["records"]]
    _write_csv(out / "records.csv", RECORD_HEADER,
               [[rec.run_id, rec.strategy, rec.iteration, rec.n_train, _fmt(rec.test_rmse),
                 _fmt(round(rec.wall_ms, 3))] for rec in records])
    dim = problem.input_dim
    _write_csv(out / "selected_points.csv",
               ["run_id", "strategy", "iteration"] + [f"x{k}" for k in range(dim)],
               [[rec.run_id, rec.strategy, rec.iteration] + [_fmt(v) for v in point]
                for rec in records for point in np.atleast_2d(rec.chosen)])
    agg = aggregate(records)
    _write_aggregate(out / "aggregate.csv", agg)
    (out / "rmse_curve.svg").write_text(render_svg(agg, title=cfg.problem))
    if cfg.save_checkpoints:
        (out / "checkpoints").mkdir(exist_ok=True)
        for r in runs:
            save_checkpoint(r["model"], out / "checkpoints" / f"run_{r['run_id']}.json")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    finals = {}
    for strategy in cfg.strategies:
        rows = [a for a in agg if a["strategy"] == strategy]
        if rows:
            finals[strategy] = rows[-1]["mean_rmse"]
    summary = {
        "problem": cfg.problem,
        "repetitions": cfg.repetitions,
        "final_mean_rmse": finals,
        "initial_rmse": {str(r["run_id"]): r["initial_rmse"] for r in runs},
        "elapsed_s": elapsed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return out


def aggregate(records) -> list[dict]:
    """Per-strategy, per-iteration mean/min/max of test RMSE.

    A run that stopped early contributes its last RMSE to all later
    iterations, so every strategy's curve spans its longest run.
    """
    records = list(records)
    if not records:
        raise ValueError("nothing to aggregate")
    by_run: dict = {}
    for rec in records:
        by_run.setdefault((rec.strategy, rec.run_id), []).append(rec)
    strategies = sorted({s for s, _ in by_run}, key=lambda s: (s != "alc", s))
    rows = []
    for strategy in strategies:
        runs = [sorted(v, key=lambda r: r.iteration) for (s, _), v in sorted(by_run.items())
                if s == strategy]
        last = max(r[-1].iteration for r in runs)
        for it in range(1, last + 1):
            vals = []
            for run in runs:
                upto = [r.test_rmse for r in run if r.iteration <= it]
                if upto:
                    vals.append(upto[-1])
            if not vals:
                continue
            rows.append({"strategy": strategy, "iteration": it, "mean_rmse": float(np.mean(vals)),
                         "min_rmse": float(np.min(vals)), "max_rmse": float(np.max(vals)),
                         "n_runs": len(vals)})
    return rows


def _write_aggregate(path: Path, rows):
    _write_csv(path, AGGREGATE_HEADER,
               [[r["strategy"], r["iteration"], _fmt(r["mean_rmse"]), _fmt(r["min_rmse"]),
                 _fmt(r["max_rmse"]), r["n_runs"]] for r in rows])


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ValueError(f"{path} does not have the record header")
        return [RunRecord(int(r["run_id"]), r["strategy"], int(r["iteration"]),
                          int(r["n_train"]), float(r["test_rmse"]), float(r["wall_ms"]),
                          np.empty(0)) for r in reader]


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"strategy": r["strategy"], "iteration": int(r["iteration"]),
                 "mean_rmse": float(r["mean_rmse"]), "min_rmse": float(r["min_rmse"]),
                 "max_rmse": float(r["max_rmse"]), "n_runs": int(r["n_runs"])}
                for r in csv.DictReader(fh)]


def aggregate_dir(directory) -> Path:
    """Recompute ``aggregate.csv`` from ``records.csv``."""
    directory = Path(directory)
    rows = aggregate(read_records(directory / "records.csv"))
    _write_aggregate(directory / "aggregate.csv", rows)
    return directory / "aggregate.csv"


def plot_dir(directory, title: str | None = None) -> Path:
    """Re-emit ``rmse_curve.svg`` from ``aggregate.csv``."""
    directory = Path(directory)
    rows = read_aggregate(directory / "aggregate.csv")
    if title is None:
        cfg_path = directory / "config.json"
        title = json.loads(cfg_path.read_text())["problem"] if cfg_path.exists() else ""
    path = directory / "rmse_curve.svg"
    path.write_text(render_svg(rows, title=title))
    return path


_STYLE = {
    "alc": {"color": "#2ca02c", "dash": ""},
    "random": {"color": "#d62728", "dash": ' stroke-dasharray="6,4"'},
}


def render_svg(rows, title: str = "", width: int = 640, height: int = 400) -> str:
    """Mean RMSE line with a min-max band per strategy.

    Data values are also attached verbatim as ``data-*`` attributes.
    """
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    its = [r["iteration"] for r in rows]
    lo = min(r["min_rmse"] for r in rows)
    hi = max(r["max_rmse"] for r in rows)
    if hi == lo:
        hi = lo + 1.0
    x_min, x_max = min(its), max(its)
    x_span = max(x_max - x_min, 1)

    def px(it):
        return left + pw * (it - x_min) / x_span

    def py(v):
        return top + ph * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title} test RMSE</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">iteration</text>',
    ]
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        parts.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{v:.3g}</text>')
    for strategy in sorted({r["strategy"] for r in rows}, key=lambda s: (s != "alc", s)):
        sr = [r for r in rows if r["strategy"] == strategy]
        style = _STYLE.get(strategy, {"color": "#1f77b4", "dash": ""})
        upper = [f'{px(r["iteration"]):.2f},{py(r["max_rmse"]):.2f}' for r in sr]
        lower = [f'{px(r["iteration"]):.2f},{py(r["min_rmse"]):.2f}' for r in reversed(sr)]
        parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{style["color"]}" '
                     f'fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f'{px(r["iteration"]):.2f},{py(r["mean_rmse"]):.2f}' for r in sr)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{style["color"]}" '
                     f'stroke-width="2"{style["dash"]}/>')
        data = ";".join(f'{r["iteration"]}:{_fmt(r["mean_rmse"])}:{_fmt(r["min_rmse"])}:'
                        f'{_fmt(r["max_rmse"])}' for r in sr)
        parts.append(f'<g class="series" data-strategy="{strategy}" data-values="{data}"/>')
    legend_y = top + 10
    for k, strategy in enumerate(sorted({r["strategy"] for r in rows},
                                        key=lambda s: (s != "alc", s))):
        style = _STYLE.get(strategy, {"color": "#1f77b4", "dash": ""})
        y = legend_y + 16 * k
        parts.append(f'<line x1="{left + pw - 110}" y1="{y}" x2="{left + pw - 80}" y2="{y}" '
                     f'stroke="{style["color"]}" stroke-width="2"{style["dash"]}/>')
        parts.append(f'<text x="{left + pw - 74}" y="{y + 4}" font-family="sans-serif" '
                     f'font-size="11">{strategy}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
