"""Weighted empirical measures, pushforward laws under a density, the exact
one-dimensional Wasserstein-1 distance, and kernel conditional expectations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import binned_gaussian_smooth, silverman_bandwidth
from .wiener_grid import PathPool


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmpiricalLaw:
    """Weighted atoms in R^dim.

    Probability laws carry normalized=True (weights >= 0 summing to 1).
    Signed measures, which arise when pairing against signed densities, carry
    normalized=False and are only meant for linear pairings via integrate().
    """

    atoms: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        atoms = _readonly(atoms)
        w = _readonly(self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        if len(atoms) != len(w):
            raise ValueError("one weight per atom required")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        if self.normalized:
            if np.any(w < 0):
                raise ValueError("normalized law cannot have negative weights")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("normalized law weights must sum to 1")

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def atoms_1d(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("operation requires a 1-D law")
        return self.atoms[:, 0]

    def integrate(self, values) -> float:
        """Linear pairing sum_i w_i * v_i (v may be a callable of the atoms)."""
        v = values(self.atoms) if callable(values) else np.asarray(values, dtype=float)
        if v.shape != (self.n_atoms,):
            raise ValueError("need one value per atom")
        return float(np.dot(self.weights, v))


def pushforward_law(pool: PathPool, density_values, observable_values,
                    normalized: bool = True) -> EmpiricalLaw:
    """Law of the observable under the density-reweighted pool measure.

    Atoms are the observable values; weights are proportional to pool weight
    times density value. With normalized=True the weights are scaled to sum
    to 1 (a probability law); with normalized=False the signed masses
    w_i L_i / sum w are kept, so integrate() returns the plain weighted
    average of L * value.
    """
    L = np.asarray(density_values, dtype=float)
    obs = np.asarray(observable_values, dtype=float)
    if len(L) != pool.n_samples or len(obs) != pool.n_samples:
        raise ValueError("arrays must match the pool size")
    if not (np.all(np.isfinite(L)) and np.all(np.isfinite(obs))):
        raise ValueError("density and observable values must be finite")
    raw = pool.weights * L
    if not normalized:
        return EmpiricalLaw(obs, raw / pool.weights.sum(), normalized=False)
    if np.any(L < 0):
        raise ValueError("probability law requested but density has negative values")
    mean = raw.sum() / pool.weights.sum()
    sd = float(np.std(L * pool.weights / pool.weights.mean(), ddof=1)) if len(L) > 1 else 0.0
    slack = 6.0 * sd / np.sqrt(len(L)) + 1e-9
    if abs(mean - 1.0) > slack:
        raise ValueError(
            f"density mean {mean:.6g} is incompatible with a probability law")
    return EmpiricalLaw(obs, raw / raw.sum(), normalized=True)


def wasserstein1(a: EmpiricalLaw, b: EmpiricalLaw) -> float:
    """Exact W1 between two discrete 1-D probability laws.

    Merged-quantile form: integrate |CDF_a - CDF_b| between consecutive
    merged atom positions.
    """
    if a.dim != 1 or b.dim != 1:
        raise ValueError("wasserstein1 is implemented for 1-D laws only")
    if not (a.normalized and b.normalized):
        raise ValueError("wasserstein1 needs probability laws")
    xa, xb = a.atoms_1d(), b.atoms_1d()
    wa, wb = a.weights, b.weights
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    allx = np.sort(np.concatenate([xa, xb]), kind="stable")
    deltas = np.diff(allx)
    ca = np.concatenate([[0.0], np.cumsum(wa)])
    cb = np.concatenate([[0.0], np.cumsum(wb)])
    cdf_a = ca[np.searchsorted(xa, allx[:-1], side="right")]
    cdf_b = cb[np.searchsorted(xb, allx[:-1], side="right")]
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def weighted_expectation(pool: PathPool, density_values, g_values) -> float:
    """Plain reweighted average: sum w_i L_i g_i / sum w_i."""
    L = np.asarray(density_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    if pool.n_samples == 0:
        raise ValueError("empty pool")
    if len(L) != pool.n_samples or len(g) != pool.n_samples:
        raise ValueError("arrays must match the pool size")
    return float(np.dot(pool.weights * L, g) / pool.weights.sum())


def kernel_regression(x_values, y_values, weights, bandwidth, eval_points):
    """Weighted Nadaraya-Watson estimate of E[x | y = p] at each eval point.

    Gaussian kernel; computed by linear binning and convolution, which agrees
    with the direct double loop to O((bin spacing)^2) and runs in
    O(n + bins) instead of O(n * m).
    """
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if bandwidth == "auto" or bandwidth is None:
        bandwidth = silverman_bandwidth(y, w)
    bandwidth = float(bandwidth)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    numer, denom = binned_gaussian_smooth(y, [w * x, w], bandwidth, eval_points)
    floor = np.finfo(float).tiny * len(y)
    return numer / np.maximum(denom, floor)


def conditional_expectation(x_values, y_values, density_values,
                            bandwidth="auto") -> np.ndarray:
    """Density-weighted kernel regression evaluated at each sample's own y."""
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    L = np.asarray(density_values, dtype=float)
    if not (len(x) == len(y) == len(L)):
        raise ValueError("arrays must have equal length")
    if (bandwidth == "auto" or bandwidth is None) and np.ptp(y) == 0:
        raise ValueError("all conditioning values identical: bandwidth rule is degenerate")
    return kernel_regression(x, y, L, bandwidth, y)
