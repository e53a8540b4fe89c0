"""Measure functionals with analytic derivatives.

Two built-in classes cover everything the verification batteries need:
cylindrical functionals f(mu) = h(integral of phi d mu), whose derivative in
the measure argument is h'(integral phi d mu) * grad phi(x), and nested
conditional functionals g(E[h(E[psi(xi1) | xi2])]). A finite-difference
oracle on the lift provides the independent cross-check for both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measure_ops import (EmpiricalLaw, conditional_expectation,
                          kernel_regression, pushforward_law,
                          weighted_expectation)
from .rng import substream
from .wiener_grid import PathPool

_PROBE_SEED = 0x5EEDED
_FD_MIN_STEP = 1e-10


def _check_scalar_derivative(fn, dfn, probes, label: str,
                             rel_tol: float = 1e-6) -> None:
    u = np.asarray(probes, dtype=float)
    step = 1e-5 * (1.0 + np.abs(u))
    fd = (fn(u + step) - fn(u - step)) / (2.0 * step)
    got = dfn(u)
    if not np.all(np.abs(got - fd) <= rel_tol * (1.0 + np.abs(fd))):
        raise ValueError(f"{label}: stored derivative disagrees with finite differences")


def _check_gradient(fn, grad, points, label: str, rel_tol: float = 1e-6) -> None:
    x = np.asarray(points, dtype=float)
    g = np.asarray(grad(x), dtype=float)
    if g.shape != x.shape:
        raise ValueError(f"{label}: gradient shape mismatch")
    for j in range(x.shape[1]):
        step = 1e-5 * (1.0 + np.abs(x[:, j]))
        up, dn = x.copy(), x.copy()
        up[:, j] += step
        dn[:, j] -= step
        fd = (fn(up) - fn(dn)) / (2.0 * step)
        if not np.all(np.abs(g[:, j] - fd) <= rel_tol * (1.0 + np.abs(fd))):
            raise ValueError(f"{label}: gradient component {j} disagrees with finite differences")


def _probe_points(dim: int, n: int = 24) -> np.ndarray:
    rng = substream(_PROBE_SEED, dim)
    return rng.uniform(-2.0, 2.0, size=(n, dim))


def _as_points(x, dim: int):
    """Normalize x to (m, dim); returns (points, restore) where restore maps
    an (m,) or (m, dim) result back to the caller's shape."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError("scalar point given for a multi-dimensional functional")
        return arr.reshape(1, 1), lambda v: float(v[0]) if v.ndim == 1 else v[0]
    if arr.ndim == 1:
        if dim == 1:
            return arr.reshape(-1, 1), lambda v: v if v.ndim == 1 else v[:, 0]
        if arr.shape[0] != dim:
            raise ValueError("point dimension mismatch")
        return arr.reshape(1, dim), lambda v: float(v[0]) if v.ndim == 1 else v[0]
    if arr.shape[1] != dim:
        raise ValueError("point dimension mismatch")
    return arr, lambda v: v


@dataclass(frozen=True)
class CylindricalFn:
    """f(mu) = h(integral of phi d mu) with user-supplied derivatives.

    phi maps (m, dim) points to (m,) values; grad_phi maps (m, dim) to
    (m, dim). Stored derivatives are validated against central finite
    differences on a probe grid at construction time.
    """

    h: Callable
    h_prime: Callable
    phi: Callable
    grad_phi: Callable
    dim: int = 1
    descriptor: str = ""

    def __post_init__(self):
        _check_scalar_derivative(self.h, self.h_prime,
                                 np.linspace(-2.0, 2.0, 9), f"h[{self.descriptor}]")
        pts = _probe_points(self.dim)
        _check_gradient(self.phi, self.grad_phi, pts, f"phi[{self.descriptor}]")


@dataclass(frozen=True)
class NestedFn:
    """G(mu) = g(E[h(m(xi2))]) with m(y) = E[psi(xi1) | xi2 = y]."""

    g: Callable
    g_prime: Callable
    h: Callable
    h_prime: Callable
    psi: Callable
    descriptor: str = ""

    def __post_init__(self):
        grid = np.linspace(-2.0, 2.0, 9)
        _check_scalar_derivative(self.g, self.g_prime, grid, f"g[{self.descriptor}]")
        _check_scalar_derivative(self.h, self.h_prime, grid, f"h[{self.descriptor}]")


def eval_cyl(f: CylindricalFn, law: EmpiricalLaw) -> float:
    if not law.normalized:
        raise ValueError("eval_cyl needs a probability law")
    if law.dim != f.dim:
        raise ValueError("law dimension does not match the functional")
    return float(f.h(law.integrate(f.phi)))


def lions_derivative(f: CylindricalFn, law: EmpiricalLaw, x):
    """Analytic measure derivative h'(integral phi d law) * grad_phi(x).

    x may be a scalar (dim 1), a single point (dim,), or a batch (m, dim);
    the result matches: scalar, (dim,), or (m, dim). For dim 1 a batch (m,)
    returns (m,).
    """
    if not law.normalized:
        raise ValueError("lions_derivative needs a probability law")
    if law.dim != f.dim:
        raise ValueError("law dimension does not match the functional")
    c = float(f.h_prime(law.integrate(f.phi)))
    pts, restore = _as_points(x, f.dim)
    g = c * np.asarray(f.grad_phi(pts), dtype=float)
    if f.dim == 1:
        return restore(g[:, 0])
    return restore(g)


def lifted_derivative_fd(f_eval, pool: PathPool, density_values, xi_values,
                         direction_values, step: float) -> float:
    """Central-difference directional derivative of the lift.

    Perturbs the observable along the direction eta with common random
    numbers (the same pool on both sides) and differences the functional of
    the resulting laws: the Gateaux derivative E[d_mu f(law, xi) . eta].
    """
    if step < _FD_MIN_STEP:
        raise ValueError("finite-difference step underflow")
    xi = np.asarray(xi_values, dtype=float)
    eta = np.asarray(direction_values, dtype=float)
    if xi.shape != eta.shape:
        raise ValueError("direction must match the observable's shape")
    up = pushforward_law(pool, density_values, xi + step * eta)
    dn = pushforward_law(pool, density_values, xi - step * eta)
    return (float(f_eval(up)) - float(f_eval(dn))) / (2.0 * step)


def eval_nested(fn: NestedFn, pool: PathPool, density_values, xi1_values,
                xi2_values, bandwidth="auto") -> float:
    L = np.asarray(density_values, dtype=float)
    x1 = np.asarray(xi1_values, dtype=float)
    x2 = np.asarray(xi2_values, dtype=float)
    if not (len(L) == len(x1) == len(x2) == pool.n_samples):
        raise ValueError("arrays must match the pool size")
    m = conditional_expectation(fn.psi(x1), x2, pool.weights * L, bandwidth)
    inner = weighted_expectation(pool, L, fn.h(m))
    return float(fn.g(inner))


def partial_mu_G_nested(fn: NestedFn, pool: PathPool, density_values,
                        xi1_values, xi2_values, x, bandwidth="auto"):
    """Closed-form first partial derivative of the nested functional.

    At x = (x1, x2):
        g'(E[h(m(xi2))]) * ( h(m(x2)) + h'(m(x2)) * (psi(x1) - m(x2)) )
    with m estimated by density-weighted kernel regression. x may be a
    single point (2,) or a batch (m, 2).
    """
    L = np.asarray(density_values, dtype=float)
    x1 = np.asarray(xi1_values, dtype=float)
    x2 = np.asarray(xi2_values, dtype=float)
    pts, restore = _as_points(x, 2)
    wts = pool.weights * L
    psi1 = fn.psi(x1)
    m_samples = conditional_expectation(psi1, x2, wts, bandwidth)
    outer = float(fn.g_prime(weighted_expectation(pool, L, fn.h(m_samples))))
    bw = bandwidth
    if bw == "auto" or bw is None:
        from .numerics import silverman_bandwidth
        bw = silverman_bandwidth(x2, wts)
    m_at = kernel_regression(psi1, x2, wts, bw, pts[:, 1])
    vals = outer * (fn.h(m_at) + fn.h_prime(m_at) * (fn.psi(pts[:, 0]) - m_at))
    return restore(np.asarray(vals, dtype=float))


def _poly_phi(power: int):
    def phi(x):
        return x[:, 0] ** power

    def grad(x):
        g = np.zeros_like(x)
        g[:, 0] = power * x[:, 0] ** (power - 1) if power > 1 else 1.0
        return g

    return phi, grad


def make_functional(name: str):
    """Registry of named built-ins selectable from the CLI."""
    if name == "mean":
        phi, grad = _poly_phi(1)
        return CylindricalFn(h=lambda u: u, h_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                             phi=phi, grad_phi=grad, dim=1, descriptor="mean")
    if name == "mean_sq":
        phi, grad = _poly_phi(1)
        return CylindricalFn(h=lambda u: u ** 2, h_prime=lambda u: 2.0 * u,
                             phi=phi, grad_phi=grad, dim=1, descriptor="mean_sq")
    if name == "sin_mean":
        return CylindricalFn(h=lambda u: u, h_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                             phi=lambda x: np.sin(x[:, 0]),
                             grad_phi=lambda x: np.cos(x),
                             dim=1, descriptor="sin_mean")
    if name == "nested_gauss":
        return NestedFn(g=lambda u: u, g_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                        h=lambda u: u ** 2, h_prime=lambda u: 2.0 * u,
                        psi=lambda x: np.exp(-0.5 * np.asarray(x, dtype=float) ** 2),
                        descriptor="nested_gauss")
    raise KeyError(f"unknown functional id: {name}")
