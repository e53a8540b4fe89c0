"""Derivatives of measure functionals along curves of densities.

The objects here connect three views of the same derivative:
  * the profile x -> integral of the Lions derivative, recentered;
  * the chain rule along a differentiable density curve;
  * the stochastic-integral representation in several dimensions.
Each has an independent route, so they cross-check one another.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .clark_ocone import SmoothFunctional, clark_ocone_decompose, gaussian_smooth
from .functionals import CylindricalFn, NestedFn, eval_cyl, eval_nested, \
    lions_derivative, partial_mu_G_nested
from .girsanov import CurveFamily, _log_exponential_table
from .measure_ops import EmpiricalLaw, pushforward_law, weighted_expectation
from .numerics import antiderivative_at
from .wiener_grid import PathPool, TimeGrid

_CURVE_PROBE_STEPS = (1e-2, 1e-3)


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    return float(np.dot(weights, values) / weights.sum())


@dataclass(frozen=True)
class DensityCurve:
    """Differentiable curve lambda -> L^lambda of per-path densities.

    value_fn(lam, increments) and deriv_fn(lam, increments) evaluate the raw
    curve and its lambda-derivative on any increment matrix over the grid.
    eval/deriv renormalize by the weighted mean so every probe has mean
    exactly one; the derivative is transformed consistently, which also
    forces its mean to zero. scalar_value/scalar_deriv, when present, state
    that the curve only reads the path endpoint: L = scalar_value(lam, B_T).
    """

    lam_lo: float
    lam_hi: float
    grid: TimeGrid
    value_fn: Callable
    deriv_fn: Callable
    kind: str
    scalar_value: Optional[Callable] = None
    scalar_deriv: Optional[Callable] = None
    scalar_value_du: Optional[Callable] = None
    scalar_triple: Optional[Callable] = None

    def __post_init__(self):
        if not self.lam_lo < self.lam_hi:
            raise ValueError("empty parameter interval")
        if (self.scalar_value is None) != (self.scalar_deriv is None):
            raise ValueError("scalar form needs both the value and the derivative")
        if self.scalar_value_du is not None and self.scalar_value is None:
            raise ValueError("coordinate derivative makes sense only with a scalar form")
        if self.scalar_triple is not None and self.scalar_value_du is None:
            raise ValueError("fused scalar evaluation needs all three scalar callables")

    def contains(self, lam: float, margin: float = 0.0) -> bool:
        return self.lam_lo + margin <= lam <= self.lam_hi - margin

    def _require(self, lam: float):
        if not self.contains(lam):
            raise ValueError(f"lambda={lam} outside [{self.lam_lo}, {self.lam_hi}]")

    def raw_pair(self, lam: float, increments: np.ndarray):
        self._require(lam)
        vals = np.asarray(self.value_fn(lam, increments), dtype=float)
        dvals = np.asarray(self.deriv_fn(lam, increments), dtype=float)
        return vals, dvals

    def eval(self, lam: float, pool: PathPool) -> np.ndarray:
        self._require(lam)
        raw = np.asarray(self.value_fn(lam, pool.increments), dtype=float)
        return raw / _weighted_mean(raw, pool.weights)

    def deriv(self, lam: float, pool: PathPool) -> np.ndarray:
        vals, dvals = self.raw_pair(lam, pool.increments)
        r = _weighted_mean(vals, pool.weights)
        dr = _weighted_mean(dvals, pool.weights)
        return dvals / r - vals * (dr / (r * r))


def validate_curve(curve: DensityCurve, pool: PathPool) -> None:
    """Probe the curve invariants on a pool: renormalized mean one, derivative
    mean zero, and second-order smallness of the FD defect in lambda."""
    w = pool.weights / pool.weights.sum()
    for frac in (0.25, 0.5, 0.75):
        lam = curve.lam_lo + frac * (curve.lam_hi - curve.lam_lo)
        vals = curve.eval(lam, pool)
        if abs(float(np.dot(w, vals)) - 1.0) > 1e-9:
            raise ValueError("renormalized curve mean differs from 1")
        dvals = curve.deriv(lam, pool)
        dmean = float(np.dot(w, dvals))
        std_err = float(np.sqrt(np.dot(w, (dvals - dmean) ** 2) / max(pool.n_samples - 1, 1)))
        if abs(dmean) > 3.0 * std_err + 1e-9:
            raise ValueError("curve derivative mean is not zero")
    lam = 0.5 * (curve.lam_lo + curve.lam_hi)
    span = curve.lam_hi - curve.lam_lo
    defects = []
    for h in _CURVE_PROBE_STEPS:
        step = h * span
        vp = curve.eval(lam + step, pool)
        vm = curve.eval(lam - step, pool)
        d = curve.deriv(lam, pool)
        gap = (vp - vm) / (2.0 * step) - d
        defects.append(float(np.sqrt(np.dot(w, gap ** 2))))
    scale = float(np.sqrt(np.dot(w, curve.deriv(lam, pool) ** 2))) + 1e-12
    if defects[1] > 0.05 * defects[0] + 1e-10 * scale:
        raise ValueError("curve derivative fails the vanishing-defect probe")


def exponential_family_curve(family: CurveFamily, grid: TimeGrid) -> DensityCurve:
    """Curve of exponential martingale densities driven by a process family."""

    def value(lam, inc):
        return np.exp(_log_exponential_table(grid, inc, family.gamma(lam))[:, -1])

    def deriv(lam, inc):
        inc = np.asarray(inc, dtype=float)
        g = family.gamma(lam).values(inc)
        dg = family.dgamma(lam).values(inc)
        dlog = np.sum(dg * inc, axis=1) - np.sum(g * dg * grid.steps, axis=1)
        return value(lam, inc) * dlog

    return DensityCurve(family.lam_lo, family.lam_hi, grid, value, deriv,
                        kind="exponential-family")


def scalar_exponential_curve(sigma: Callable, dsigma: Callable, grid: TimeGrid,
                             lam_lo: float, lam_hi: float) -> DensityCurve:
    """Exponential curve with a constant-in-time integrand sigma(lambda); the
    density reads only the endpoint, which downstream stages exploit."""
    horizon = grid.horizon

    def sval(lam, u):
        s = float(sigma(lam))
        return np.exp(s * np.asarray(u, dtype=float) - 0.5 * s * s * horizon)

    def sder(lam, u):
        u = np.asarray(u, dtype=float)
        s, ds = float(sigma(lam)), float(dsigma(lam))
        return sval(lam, u) * ds * (u - s * horizon)

    def sval_du(lam, u):
        return float(sigma(lam)) * sval(lam, u)

    def striple(lam, u):
        # one exponential, the derivatives fall out algebraically
        u = np.asarray(u, dtype=float)
        s, ds = float(sigma(lam)), float(dsigma(lam))
        v = np.exp(s * u - 0.5 * s * s * horizon)
        return v, v * ds * (u - s * horizon), s * v

    def value(lam, inc):
        return sval(lam, np.asarray(inc, dtype=float).sum(axis=1))

    def deriv(lam, inc):
        return sder(lam, np.asarray(inc, dtype=float).sum(axis=1))

    return DensityCurve(lam_lo, lam_hi, grid, value, deriv,
                        kind="exponential-family",
                        scalar_value=sval, scalar_deriv=sder,
                        scalar_value_du=sval_du, scalar_triple=striple)


def mixture_curve(base_fn: Callable, other_fn: Callable, grid: TimeGrid,
                  lam_lo: float = 0.0, lam_hi: float = 1.0,
                  scalar_base: Optional[Callable] = None,
                  scalar_other: Optional[Callable] = None,
                  scalar_base_du: Optional[Callable] = None,
                  scalar_other_du: Optional[Callable] = None) -> DensityCurve:
    """Linear interpolation L^lam = (1-lam) base + lam other between two
    densities given as functions of the increment matrix."""

    def value(lam, inc):
        return (1.0 - lam) * np.asarray(base_fn(inc), dtype=float) \
            + lam * np.asarray(other_fn(inc), dtype=float)

    def deriv(lam, inc):
        return np.asarray(other_fn(inc), dtype=float) - np.asarray(base_fn(inc), dtype=float)

    sval = sder = sdu = None
    if scalar_base is not None and scalar_other is not None:
        def sval(lam, u):
            u = np.asarray(u, dtype=float)
            return (1.0 - lam) * scalar_base(u) + lam * scalar_other(u)

        def sder(lam, u):
            u = np.asarray(u, dtype=float)
            return scalar_other(u) - scalar_base(u)

        if scalar_base_du is not None and scalar_other_du is not None:
            def sdu(lam, u):
                u = np.asarray(u, dtype=float)
                return (1.0 - lam) * scalar_base_du(u) + lam * scalar_other_du(u)

    return DensityCurve(lam_lo, lam_hi, grid, value, deriv, kind="mixture",
                        scalar_value=sval, scalar_deriv=sder,
                        scalar_value_du=sdu)


def constant_curve(grid: TimeGrid, lam_lo: float = 0.0, lam_hi: float = 1.0) -> DensityCurve:
    ones = lambda inc: np.ones(np.asarray(inc).shape[0])
    zeros = lambda inc: np.zeros(np.asarray(inc).shape[0])

    def striple(lam, u):
        base = np.ones_like(np.asarray(u, dtype=float))
        return base, np.zeros_like(base), np.zeros_like(base)

    return DensityCurve(lam_lo, lam_hi, grid,
                        lambda lam, inc: ones(inc), lambda lam, inc: zeros(inc),
                        kind="user",
                        scalar_value=lambda lam, u: np.ones_like(np.asarray(u, dtype=float)),
                        scalar_deriv=lambda lam, u: np.zeros_like(np.asarray(u, dtype=float)),
                        scalar_value_du=lambda lam, u: np.zeros_like(np.asarray(u, dtype=float)),
                        scalar_triple=striple)


@dataclass(frozen=True)
class DerivativeProfile:
    """Density derivative of a measure functional, tabulated on a point grid.

    values[j] is the antiderivative of the Lions derivative at x_grid[j]
    minus centering_constant; the centering makes the profile average to zero
    under the law itself (at its atoms), pinning the additive freedom.
    """

    law: EmpiricalLaw
    x_grid: np.ndarray
    values: np.ndarray
    centering_constant: float

    def __post_init__(self):
        object.__setattr__(self, "x_grid", np.asarray(self.x_grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.x_grid.shape != self.values.shape:
            raise ValueError("grid and values must align")


def density_derivative_profile(f: CylindricalFn, law: EmpiricalLaw,
                               x_grid, tol: float = 1e-9) -> DerivativeProfile:
    """Profile x -> int_0^x (Lions derivative)(law, y) dy - centering.

    Base point 0 is a convention; any other base changes the profile by a
    constant that the centering immediately absorbs.
    """
    if law.dim != 1:
        raise ValueError("profile construction is one-dimensional")
    xs = np.asarray(x_grid, dtype=float)
    atoms = law.atoms_1d()

    def integrand(ys):
        return lions_derivative(f, law, ys)

    joint = antiderivative_at(integrand, np.concatenate([xs.ravel(), atoms]), tol=tol)
    a_grid = joint[:xs.size].reshape(xs.shape)
    a_atoms = joint[xs.size:]
    centering = float(np.dot(law.weights, a_atoms))
    return DerivativeProfile(law, xs, a_grid - centering, centering)


def recenter_to_base(values: np.ndarray, pool: PathPool) -> np.ndarray:
    """Subtract the plain pool mean so the result has base-measure mean zero."""
    vals = np.asarray(values, dtype=float)
    if vals.shape != (pool.n_samples,):
        raise ValueError("values must align with the pool")
    return vals - np.average(vals, weights=pool.weights)


def recenter_to_density(values: np.ndarray, density_values: np.ndarray,
                        pool: PathPool) -> np.ndarray:
    """Subtract the density-weighted mean (mean under the reweighted measure)."""
    vals = np.asarray(values, dtype=float)
    dens = np.asarray(density_values, dtype=float)
    if vals.shape != (pool.n_samples,) or dens.shape != vals.shape:
        raise ValueError("values must align with the pool")
    wl = pool.weights * dens
    return vals - float(np.dot(wl, vals) / wl.sum())


def chain_rule_rhs(f: CylindricalFn, curve: DensityCurve, lam: float,
                   xi_values: np.ndarray, pool: PathPool) -> float:
    """Mean of (antiderivative of the Lions derivative at xi) times dL/dlam."""
    density = curve.eval(lam, pool)
    dd = curve.deriv(lam, pool)
    law = pushforward_law(pool, density, xi_values)
    xi = np.asarray(xi_values, dtype=float).reshape(-1)
    anti = antiderivative_at(lambda ys: lions_derivative(f, law, ys), xi)
    return weighted_expectation(pool, dd, anti)


def chain_rule_lhs_fd(f: CylindricalFn, curve: DensityCurve, lam: float,
                      xi_values: np.ndarray, pool: PathPool,
                      h_step: float) -> float:
    """Central difference of lam -> f(law^lam) on the same pool both sides."""
    if not (curve.contains(lam - h_step) and curve.contains(lam + h_step)):
        raise ValueError("lambda too close to the parameter boundary for this step")

    def at(l):
        return eval_cyl(f, pushforward_law(pool, curve.eval(l, pool), xi_values))

    return (at(lam + h_step) - at(lam - h_step)) / (2.0 * h_step)


def second_order_check_1d(f: CylindricalFn, law: EmpiricalLaw, x_grid,
                          h_step: float) -> float:
    """Max over the grid of |FD_x of the profile - Lions derivative|."""
    xs = np.asarray(x_grid, dtype=float).reshape(-1)
    prof = density_derivative_profile(f, law, np.concatenate([xs + h_step, xs - h_step]))
    m = xs.size
    cd = (prof.values[:m] - prof.values[m:]) / (2.0 * h_step)
    target = lions_derivative(f, law, xs)
    return float(np.max(np.abs(cd - target)))


def second_order_check_multidim(f: CylindricalFn, law: EmpiricalLaw, x_grid,
                                h_step: float) -> float:
    """Gradient consistency in d dimensions.

    The profile generalizes to the centered potential h'(int phi dmu) phi(x);
    its gradient should reproduce the Lions derivative componentwise. The
    centering constant drops out of the differences entirely.
    """
    pts = np.asarray(x_grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != f.dim or law.dim != f.dim:
        raise ValueError("point dimension does not match the functional")
    c = f.h_prime(law.integrate(np.asarray(f.phi(law.atoms), dtype=float)))
    target = lions_derivative(f, law, pts)
    worst = 0.0
    for j in range(pts.shape[1]):
        up = pts.copy()
        dn = pts.copy()
        up[:, j] += h_step
        dn[:, j] -= h_step
        cd = c * (np.asarray(f.phi(up), dtype=float)
                  - np.asarray(f.phi(dn), dtype=float)) / (2.0 * h_step)
        worst = max(worst, float(np.max(np.abs(cd - target[:, j]))))
    return worst


def multidim_derivative_repr(f: CylindricalFn, L: SmoothFunctional,
                             xi_fns: Sequence[SmoothFunctional], pool: PathPool,
                             quad_order: int = 32, mc_fallback=None) -> np.ndarray:
    """Per-path derivative values via the drift-corrected stochastic integral.

    Each interval contributes H_i * (B(D_i) - gamma_i dt_i): H_i is the
    density-weighted predictable projection of (Lions derivative at xi) dot
    (interval gradient of xi), and gamma is the logarithmic integrand of L,
    so the corrected increments are driftless under the reweighted measure.
    """
    grid = pool.grid
    d = len(xi_fns)
    if d > 3:
        raise ValueError("observable dimension capped at 3 by the quadrature budget")
    inc = pool.increments
    l_vals = np.asarray(L.value_fn(inc), dtype=float)
    if np.any(l_vals <= 0.0):
        raise ValueError("density must be strictly positive pathwise")
    xi_pts = np.column_stack([np.asarray(x.value_fn(inc), dtype=float) for x in xi_fns])
    law = pushforward_law(pool, l_vals, xi_pts)
    c = float(f.h_prime(law.integrate(np.asarray(f.phi(law.atoms), dtype=float))))

    Z, M, gamma = clark_ocone_decompose(L, pool, quad_order=quad_order,
                                        mc_fallback=mc_fallback)

    def component(i):
        def comp(args):
            args = np.asarray(args, dtype=float)
            pts = np.column_stack([np.asarray(x.value_fn(args), dtype=float)
                                   for x in xi_fns])
            dphi = np.asarray(f.grad_phi(pts), dtype=float)
            total = np.zeros(args.shape[0])
            for k, x in enumerate(xi_fns):
                total += dphi[:, k] * np.asarray(x.grad_fn(args), dtype=float)[:, i]
            return c * total * np.asarray(L.value_fn(args), dtype=float)
        return comp

    out = np.zeros(pool.n_samples)
    for i in range(grid.n_steps):
        t = grid.knots[i]
        proj = gaussian_smooth(L, grid, t, inc[:, :i], component=component(i),
                               quad_order=quad_order, mc_fallback=mc_fallback)
        h_i = proj / M[:, i]
        out += h_i * (inc[:, i] - gamma[:, i] * grid.steps[i])
    return out


def nested_derivative_check(fn: NestedFn, pool: PathPool, density_values,
                            xi1_values, xi2_values, x_probes,
                            bandwidth="auto", fd_step: float = 1e-2,
                            bump_width: Optional[float] = None) -> float:
    """Partial-derivative formula vs a direct density-perturbation oracle.

    For Gaussian bumps eta_j centered at the probes, compares the derivative
    of the nested functional along the mixture L(1 + s(eta_j - mean)) with
    the weighted pairing of the analytic partial-derivative profile against
    the same centered direction. Agreement says the formula really is the
    density derivative, up to FD and kernel-regression error.
    """
    probes = np.asarray(x_probes, dtype=float)
    if probes.ndim == 1:
        probes = probes[None, :]
    if probes.shape[1] != 2:
        raise ValueError("probes live in the plane (xi1, xi2)")
    dens = np.asarray(density_values, dtype=float)
    x1 = np.asarray(xi1_values, dtype=float)
    x2 = np.asarray(xi2_values, dtype=float)
    wl = pool.weights * dens

    if bump_width is None:
        spread = max(np.std(x1), np.std(x2))
        bump_width = 0.5 * spread if spread > 0 else 1.0

    # Profile at the sample atoms, one kernel-regression pass for all probes.
    prof = np.asarray(partial_mu_G_nested(fn, pool, dens, x1, x2,
                                          np.column_stack([x1, x2]),
                                          bandwidth=bandwidth), dtype=float)

    worst = 0.0
    for j in range(probes.shape[0]):
        a, b = probes[j]
        eta = np.exp(-((x1 - a) ** 2 + (x2 - b) ** 2) / (2.0 * bump_width ** 2))
        ebar = float(np.dot(wl, eta) / wl.sum())
        direction = eta - ebar

        def nested_at(s):
            return eval_nested(fn, pool, dens * (1.0 + s * direction), x1, x2,
                               bandwidth=bandwidth)

        lhs = (nested_at(fd_step) - nested_at(-fd_step)) / (2.0 * fd_step)
        rhs = float(np.dot(wl, prof * direction) / wl.sum())
        worst = max(worst, abs(lhs - rhs))
    return worst
