"""Discretized Wiener space: time grids, Gaussian increment pools, dyadic
coarsening, and Brownian-bridge conditional resampling.

A PathPool is the computational stand-in for the Wiener space: a batch of
paths represented by their increment matrix, plus per-path importance
weights. Increments over (t_{i-1}, t_i] are i.i.d. N(0, dt_i) under weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import substream

_KNOT_ATOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Partition 0 = t_0 < t_1 < ... < t_n = horizon."""

    knots: np.ndarray

    def __post_init__(self):
        knots = _readonly(self.knots)
        object.__setattr__(self, "knots", knots)
        if knots.ndim != 1 or len(knots) < 2:
            raise ValueError("grid needs at least one step")
        if knots[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return len(self.knots) - 1

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.knots)

    def is_uniform(self) -> bool:
        d = self.steps
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    def knot_index(self, t: float) -> int:
        """Index j with knots[j] == t; rejects off-knot times (no interpolation)."""
        j = int(np.searchsorted(self.knots, t))
        for cand in (j - 1, j, j + 1):
            if 0 <= cand < len(self.knots) and abs(self.knots[cand] - t) <= _KNOT_ATOL:
                return cand
        raise ValueError(f"t={t} is not a grid knot")


def make_grid(n_steps: int, horizon: float = 1.0) -> TimeGrid:
    """Uniform grid with dt = horizon / n_steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    knots = np.linspace(0.0, horizon, n_steps + 1)
    knots[0] = 0.0
    knots[-1] = horizon
    return TimeGrid(knots)


@dataclass(frozen=True)
class PathPool:
    """Immutable batch of discretized Brownian paths with importance weights.

    `cumulative` holds the path values at the knots (column 0 is zero). It is
    carried explicitly so that coarsening can subset it instead of re-summing,
    which keeps path values bitwise identical across coarsening levels.
    """

    grid: TimeGrid
    increments: np.ndarray
    weights: np.ndarray
    seed: int
    cumulative: np.ndarray

    def __post_init__(self):
        inc = _readonly(self.increments)
        w = _readonly(self.weights)
        cum = _readonly(self.cumulative)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cumulative", cum)
        n, m = inc.shape
        if m != self.grid.n_steps:
            raise ValueError("increment columns must match grid steps")
        if w.shape != (n,):
            raise ValueError("one weight per path required")
        if np.any(w < 0):
            raise ValueError("pool weights must be nonnegative")
        if abs(w.sum() - n) > 1e-9 * max(n, 1):
            raise ValueError("pool weights must sum to the number of paths")
        if cum.shape != (n, m + 1):
            raise ValueError("cumulative matrix shape mismatch")

    @property
    def n_samples(self) -> int:
        return self.increments.shape[0]

    def subset(self, rows) -> "PathPool":
        """Row-sliced pool; weights are rescaled to keep their sum contract."""
        inc = self.increments[rows]
        w = self.weights[rows].copy()
        cum = self.cumulative[rows]
        w *= len(w) / w.sum()
        return PathPool(self.grid, inc, w, self.seed, cum)


def _pool_from_increments(grid: TimeGrid, increments: np.ndarray,
                          weights: np.ndarray, seed: int) -> PathPool:
    n = increments.shape[0]
    cum = np.zeros((n, grid.n_steps + 1))
    np.cumsum(increments, axis=1, out=cum[:, 1:])
    return PathPool(grid, increments, weights, seed, cum)


def sample_paths(grid: TimeGrid, n_samples: int, seed: int) -> PathPool:
    """Draw n_samples independent increment vectors, N(0, dt_i) per column.

    Deterministic given (grid, n_samples, seed); initial weights are all 1.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = substream(seed, 0)
    z = rng.standard_normal((n_samples, grid.n_steps))
    inc = z * np.sqrt(grid.steps)
    return _pool_from_increments(grid, inc, np.ones(n_samples), seed)


def brownian_at(pool: PathPool, t: float) -> np.ndarray:
    """Per-path value B_t; t must be a grid knot."""
    j = pool.grid.knot_index(t)
    return pool.cumulative[:, j].copy()


def _block_edges(grid: TimeGrid, level: int) -> np.ndarray:
    """Knot indices delimiting 2^level equal blocks of fine steps."""
    if level < 0:
        raise ValueError("level must be >= 0")
    blocks = 1 << level
    n = grid.n_steps
    if n % blocks != 0:
        raise ValueError(f"2^level = {blocks} does not divide n_steps = {n}")
    if not grid.is_uniform():
        raise ValueError("block coarsening requires a uniform grid")
    return np.arange(0, n + 1, n // blocks)


def dyadic_coarsen(pool: PathPool, level: int) -> PathPool:
    """Pool of the 2^level block-sum increments B(block_j); weights preserved.

    Path values at the surviving knots are subset, not re-summed, so
    brownian_at agrees bitwise between the fine and coarse pools.
    """
    edges = _block_edges(pool.grid, level)
    if len(edges) - 1 == pool.grid.n_steps:
        return pool
    cum = pool.cumulative[:, edges]
    inc = np.diff(cum, axis=1)
    grid = TimeGrid(pool.grid.knots[edges])
    return PathPool(grid, inc, pool.weights, pool.seed, cum)


def bridge_resample(pool: PathPool, level: int, m_inner: int, seed: int) -> np.ndarray:
    """Fine-increment resamples consistent with each path's block sums.

    For every outer path, draws m_inner fine-increment vectors from the exact
    Gaussian conditional law given the 2^level block sums (Brownian bridge
    within each block). Returns an array of shape
    (n_outer, m_inner, n_fine_steps); axis 0 is keyed to the outer paths, so a
    flattened pool is deliberately not built.
    """
    if m_inner < 1:
        raise ValueError("m_inner must be >= 1")
    edges = _block_edges(pool.grid, level)
    n, n_fine = pool.increments.shape
    k = n_fine // (len(edges) - 1)
    dts = pool.grid.steps
    out = np.empty((n, m_inner, n_fine))
    rng = substream(seed, 1)
    z = rng.standard_normal((n, m_inner, n_fine)) * np.sqrt(dts)
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        block_sum = pool.cumulative[:, hi] - pool.cumulative[:, lo]
        if k == 1:
            out[:, :, lo] = block_sum[:, None]
            continue
        zb = z[:, :, lo:hi]
        delta = dts[lo:hi]
        width = delta.sum()
        resid = (block_sum[:, None] - zb.sum(axis=2)) / width
        out[:, :, lo:hi] = zb + resid[:, :, None] * delta
    return out


def save_csv(pool: PathPool, path: str) -> None:
    """Flat CSV layout: a header with n_steps, horizon, seed, then one row
    per path (weight followed by the increments)."""
    with open(path, "w") as fh:
        fh.write("n_steps,horizon,seed\n")
        fh.write(f"{pool.grid.n_steps},{pool.grid.horizon!r},{pool.seed}\n")
        for w, row in zip(pool.weights, pool.increments):
            vals = ",".join(repr(float(v)) for v in row)
            fh.write(f"{float(w)!r},{vals}\n")


def load_csv(path: str) -> PathPool:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["n_steps", "horizon", "seed"]:
            raise ValueError("unrecognized pool CSV header")
        n_steps_s, horizon_s, seed_s = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    grid = make_grid(int(n_steps_s), float(horizon_s))
    data = np.array(rows, dtype=float)
    return _pool_from_increments(grid, data[:, 1:], data[:, 0], int(seed_s))
