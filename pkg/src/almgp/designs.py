"""Latin hypercube and grid designs on axis-aligned boxes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSpecError, UnsupportedGridError

__all__ = ["DesignSpec", "lhd_sample", "uniform_grid", "grid_with_mesh", "scale_to_bounds"]


@dataclass(frozen=True)
class DesignSpec:
    """Description of a design on the box ``bounds``.

    For ``kind="uniform_grid"``, ``n_points`` is the number of points per axis,
    so a two-dimensional grid has ``n_points**2`` rows.
    """

    n_points: int
    dims: int
    bounds: Sequence[tuple[float, float]]
    kind: str = "lhd"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("lhd", "uniform_grid"):
            raise InvalidSpecError(f"unknown design kind {self.kind!r}")
        if int(self.n_points) < 1:
            raise InvalidSpecError("n_points must be positive")
        if int(self.dims) < 1:
            raise InvalidSpecError("dims must be positive")
        if len(self.bounds) != self.dims:
            raise InvalidSpecError(
                f"expected {self.dims} bound pairs, got {len(self.bounds)}")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise InvalidSpecError(f"degenerate bounds ({lo}, {hi})")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpecError("seed must be a 64-bit unsigned integer")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)


def scale_to_bounds(unit: np.ndarray, bounds: Sequence[tuple[float, float]]) -> np.ndarray:
    """Affinely map points from the unit cube onto ``bounds``."""
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    out = lo + np.asarray(unit, dtype=float) * (hi - lo)
    # round-off can push u=1 a hair past the upper edge
    return np.clip(out, lo, hi)


def lhd_sample(spec: DesignSpec) -> np.ndarray:
    """Random-permutation Latin hypercube with uniform jitter inside each stratum.

    Every column, binned into ``n_points`` equal-width strata over its bounds,
    holds exactly one point. The output is a deterministic function of
    ``spec.seed``.
    """
    if spec.kind != "lhd":
        raise InvalidSpecError(f"lhd_sample needs kind='lhd', got {spec.kind!r}")
    n, d = int(spec.n_points), int(spec.dims)
    rng = np.random.default_rng(int(spec.seed))
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    unit = (strata + rng.random((n, d))) / n
    out = scale_to_bounds(unit, spec.bounds)
    # keep each point strictly inside its own stratum after scaling
    width = (spec.upper - spec.lower) / n
    edge_lo = spec.lower + strata * width
    return np.clip(out, edge_lo, np.nextafter(edge_lo + width, -np.inf))


def uniform_grid(spec: DesignSpec) -> np.ndarray:
    """Evenly spaced grid with both endpoints included.

    In two dimensions the grid is the tensor product of the per-axis grids,
    with the first coordinate varying slowest.
    """
    if spec.kind != "uniform_grid":
        raise InvalidSpecError(f"uniform_grid needs kind='uniform_grid', got {spec.kind!r}")
    if spec.dims > 2:
        raise UnsupportedGridError(f"grids are limited to 1 or 2 dims, got {spec.dims}")
    axes = [np.linspace(lo, hi, int(spec.n_points)) for lo, hi in spec.bounds]
    if spec.dims == 1:
        return axes[0][:, None]
    g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.column_stack([g0.ravel(), g1.ravel()])


def grid_with_mesh(bounds: Sequence[tuple[float, float]], mesh: float) -> np.ndarray:
    """Grid over ``bounds`` with spacing ``mesh`` (bounds must be equal-length axes)."""
    lengths = {round((hi - lo) / mesh, 9) for lo, hi in bounds}
    if len(lengths) != 1:
        raise InvalidSpecError("grid_with_mesh needs axes of equal length")
    per_axis = int(round(lengths.pop())) + 1
    spec = DesignSpec(per_axis, len(bounds), tuple(bounds), kind="uniform_grid")
    return uniform_grid(spec)
