"""Martingale representation for smooth functionals of the grid increments.

A functional F(B(D_1), ..., B(D_N)) with bounded gradient satisfies
F = E[F] + sum_i Z_i B(D_i) with Z_i = E[dF/dx_i | F_{t_{i-1}}]; the
conditional expectations are Gaussian integrals over the not-yet-revealed
increments and are computed by tensorized Gauss-Hermite quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .numerics import gauss_hermite
from .rng import substream
from .wiener_grid import PathPool, TimeGrid

_PROBE_SEED = 0xFACADE
_TENSOR_BLOCK_CAP = 4
_ROW_BUDGET = 1 << 22


@dataclass(frozen=True)
class SmoothFunctional:
    """C^1 functional of the n_args grid increments with certified bounds.

    value_fn maps (m, n_args) -> (m,), grad_fn maps (m, n_args) ->
    (m, n_args). bounds = (sup |F|, sup |grad F|). If the functional only
    reads the total sum of its arguments, scalar_fn/scalar_fn_prime give that
    one-variable form; conditional smoothing then stays one-dimensional no
    matter how fine the grid is.
    """

    n_args: int
    value_fn: Callable
    grad_fn: Callable
    bounds: Tuple[float, float]
    scalar_fn: Optional[Callable] = None
    scalar_fn_prime: Optional[Callable] = None

    def __post_init__(self):
        if self.n_args < 1:
            raise ValueError("functional needs at least one argument")
        if (self.scalar_fn is None) != (self.scalar_fn_prime is None):
            raise ValueError("scalar form requires both the function and its derivative")
        rng = substream(_PROBE_SEED, self.n_args)
        x = rng.standard_normal((8, self.n_args)) / np.sqrt(self.n_args)
        v = np.asarray(self.value_fn(x), dtype=float)
        g = np.asarray(self.grad_fn(x), dtype=float)
        if v.shape != (8,) or g.shape != (8, self.n_args):
            raise ValueError("functional output shapes are wrong")
        step = 1e-6
        for j in range(self.n_args):
            up, dn = x.copy(), x.copy()
            up[:, j] += step
            dn[:, j] -= step
            fd = (np.asarray(self.value_fn(up)) - np.asarray(self.value_fn(dn))) / (2 * step)
            if not np.all(np.abs(fd - g[:, j]) <= 1e-6 * (1.0 + np.abs(fd)) + 1e-8):
                raise ValueError(f"gradient component {j} disagrees with finite differences")
        if self.scalar_fn is not None:
            s = x.sum(axis=1)
            if not np.allclose(v, np.asarray(self.scalar_fn(s), dtype=float),
                               rtol=1e-12, atol=1e-12):
                raise ValueError("scalar form disagrees with the full functional")
            sp = np.asarray(self.scalar_fn_prime(s), dtype=float)
            if not np.allclose(g, sp[:, None], rtol=1e-9, atol=1e-10):
                raise ValueError("scalar derivative disagrees with the gradient")


def scalar_functional(grid_or_n, fn: Callable, fn_prime: Callable,
                      bounds: Tuple[float, float]) -> SmoothFunctional:
    """Functional reading only the path endpoint: F = fn(sum of increments)."""
    n = grid_or_n.n_steps if isinstance(grid_or_n, TimeGrid) else int(grid_or_n)

    def value(x):
        return np.asarray(fn(np.asarray(x, dtype=float).sum(axis=1)), dtype=float)

    def grad(x):
        x = np.asarray(x, dtype=float)
        d = np.asarray(fn_prime(x.sum(axis=1)), dtype=float)
        return np.repeat(d[:, None], x.shape[1], axis=1)

    return SmoothFunctional(n, value, grad, bounds,
                            scalar_fn=fn, scalar_fn_prime=fn_prime)


def malliavin_derivative(F: SmoothFunctional, pool: PathPool) -> np.ndarray:
    """(n_paths, n_steps) table: D_s F is the gradient component of the
    interval containing s, constant on each interval."""
    if F.n_args != pool.grid.n_steps:
        raise ValueError("functional arity does not match the grid")
    return np.asarray(F.grad_fn(pool.increments), dtype=float)


def _tensor_nodes(variances: np.ndarray, order: int):
    """Mesh of independent Gaussian nodes, one axis per variance entry."""
    base_x, base_w = gauss_hermite(order)
    axes = [base_x * np.sqrt(v) for v in variances]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    w = np.ones(1)
    for _ in variances:
        w = np.multiply.outer(w, base_w).ravel()
    return mesh, w


def gaussian_smooth(F: SmoothFunctional, grid: TimeGrid, s: float,
                    prefix: np.ndarray, component: Optional[Callable] = None,
                    quad_order: int = 32,
                    mc_fallback: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """E[F | F_s] evaluated at realized increments up to knot s.

    prefix is (m, j) where j is the knot index of s; the remaining increments
    are integrated out. component, if given, replaces the integrand by
    component(x) for x the full (rows, n_args) argument (used to smooth one
    gradient entry). Tensor quadrature covers at most four remaining
    intervals; beyond that pass mc_fallback=(n_draws, seed) to average over
    sampled futures instead.
    """
    if F.n_args != grid.n_steps:
        raise ValueError("functional arity does not match the grid")
    j = grid.knot_index(s)
    pre = np.asarray(prefix, dtype=float)
    if pre.ndim == 1:
        pre = pre[None, :]
    if pre.shape[1] != j:
        raise ValueError(f"prefix has {pre.shape[1]} columns, knot index is {j}")
    fn = component if component is not None else F.value_fn
    m = pre.shape[0]
    rem = grid.n_steps - j
    if rem == 0:
        return np.asarray(fn(pre), dtype=float)

    if component is None and F.scalar_fn is not None:
        # One-dimensional shortcut: only the terminal sum matters and the
        # unrevealed part of it is Gaussian with variance horizon - s.
        var = float(grid.horizon - grid.knots[j])
        nodes, w = gauss_hermite(quad_order)
        y = pre.sum(axis=1)
        vals = np.asarray(F.scalar_fn(y[:, None] + np.sqrt(var) * nodes[None, :]))
        return vals @ w

    variances = grid.steps[j:]
    if rem <= _TENSOR_BLOCK_CAP:
        mesh, w = _tensor_nodes(variances, quad_order)
        q = mesh.shape[0]
        out = np.empty(m)
        chunk = max(1, _ROW_BUDGET // q)
        for lo in range(0, m, chunk):
            hi = min(lo + chunk, m)
            block = hi - lo
            args = np.empty((block * q, grid.n_steps))
            args[:, :j] = np.repeat(pre[lo:hi], q, axis=0)
            args[:, j:] = np.tile(mesh, (block, 1))
            vals = np.asarray(fn(args), dtype=float).reshape(block, q)
            out[lo:hi] = vals @ w
        return out

    if mc_fallback is None:
        raise ValueError(
            f"{rem} intervals remain after the conditioning time; tensor "
            "quadrature stops at 4. Pass mc_fallback=(n_draws, seed) to use "
            "Monte Carlo averaging over the remaining increments.")
    n_draws, seed = mc_fallback
    rng = substream(seed, 2, j)
    out = np.zeros(m)
    args = np.empty((m, grid.n_steps))
    args[:, :j] = pre
    for _ in range(n_draws):
        args[:, j:] = rng.standard_normal((m, rem)) * np.sqrt(variances)
        out += np.asarray(fn(args), dtype=float)
    return out / n_draws


def clark_ocone_decompose(F: SmoothFunctional, pool: PathPool,
                          quad_order: int = 32,
                          mc_fallback: Optional[Tuple[int, int]] = None):
    """Extract (Z, M, gamma) along the pool paths.

    Z[:, i] = E[dF/dx_i | F_{t_{i-1}}], M[:, i] = E[F | F_{t_{i-1}}], and
    gamma = Z / M is the logarithmic integrand; M must stay away from zero,
    which holds for the positive normalized densities this is applied to.
    """
    grid = pool.grid
    if F.n_args != grid.n_steps:
        raise ValueError("functional arity does not match the grid")
    n = pool.n_samples
    Z = np.empty((n, grid.n_steps))
    M = np.empty((n, grid.n_steps))
    scalar = F.scalar_fn is not None
    for i in range(grid.n_steps):
        t = grid.knots[i]
        pre = pool.increments[:, :i]
        M[:, i] = gaussian_smooth(F, grid, t, pre, quad_order=quad_order,
                                  mc_fallback=mc_fallback)
        if scalar:
            # d/dx_i of fn(sum) is fn' at the sum for every i; smooth the
            # one-variable derivative the same way as the value.
            var = float(grid.horizon - t)
            nodes, w = gauss_hermite(quad_order)
            y = pre.sum(axis=1)
            if var == 0.0:
                Z[:, i] = np.asarray(F.scalar_fn_prime(y), dtype=float)
            else:
                vals = np.asarray(F.scalar_fn_prime(
                    y[:, None] + np.sqrt(var) * nodes[None, :]))
                Z[:, i] = vals @ w
        else:
            comp = (lambda x, i=i: np.asarray(F.grad_fn(x), dtype=float)[:, i])
            Z[:, i] = gaussian_smooth(F, grid, t, pre, component=comp,
                                      quad_order=quad_order, mc_fallback=mc_fallback)
    if np.any(np.abs(M) < 1e-12):
        raise ValueError("conditional mean hits zero; logarithmic integrand undefined")
    return Z, M, Z / M


def reconstruction_error(L_values: np.ndarray, Z: np.ndarray, pool: PathPool) -> float:
    """Weighted L2 defect of L - 1 - sum_i Z_i B(D_i) along the pool.

    The represented functional is a density with mean one, so the constant
    term is literally 1; what remains measures how far the left-endpoint
    integrand is from reproducing L on the discrete grid.
    """
    vals = np.asarray(L_values, dtype=float)
    if vals.shape != (pool.n_samples,) or Z.shape != pool.increments.shape:
        raise ValueError("shapes do not match the pool")
    w = pool.weights / pool.weights.sum()
    resid = vals - 1.0 - np.sum(Z * pool.increments, axis=1)
    return float(np.sqrt(np.dot(w, resid ** 2)))
