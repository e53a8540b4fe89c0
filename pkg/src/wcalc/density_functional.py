"""Functionals of probability density functions and their link to measure
derivatives.

Weighted empirical laws are smoothed into grid densities by a Gaussian
kernel estimator; functionals of the composed form Phi(h) = Psi(integral of
rho * h dx) then have an analytic L2(dx) derivative whose representer is
centered to zero mean on the grid window. Because the same (Psi, rho) pair
also defines a cylindrical functional of the underlying measure, two
identities become two-sided numerical checks: the measure derivative equals
the x-derivative of the density-functional representer, and the centered
representer profile equals the centered antiderivative of the measure
derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .artifacts import atomic_write_csv
from .density_deriv import density_derivative_profile
from .functionals import CylindricalFn, _check_scalar_derivative, lions_derivative
from .measure_ops import EmpiricalLaw, pushforward_law
from .numerics import binned_gaussian_smooth, silverman_bandwidth
from .wiener_grid import PathPool

_DEFAULT_GRID_POINTS = 2048
_WINDOW_SIGMAS = 5.0


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative function tabulated on a uniform grid.

    mass is the trapezoid integral; normalized() rescales values so the
    mass is one, which is how every estimator here returns its output.
    """

    x_grid: np.ndarray
    values: np.ndarray
    mass: float

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("grid and values must be matching 1-d arrays")
        spacing = np.diff(x)
        if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid must be uniform")
        if np.any(v < 0.0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mass", float(np.trapezoid(v, x)))

    @property
    def spacing(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def normalized(self) -> "GridDensity":
        if self.mass <= 0.0:
            raise ValueError("cannot normalize a zero-mass density")
        return GridDensity(self.x_grid, self.values / self.mass, 1.0)

    def to_csv(self, path: str) -> None:
        atomic_write_csv(path, ["x", "value"],
                         np.column_stack([self.x_grid, self.values]))


def density_grid(law: EmpiricalLaw, bandwidth: float,
                 n_points: int = _DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform window covering the law's atoms plus kernel tails."""
    atoms = law.atoms_1d()
    pad = _WINDOW_SIGMAS * bandwidth
    return np.linspace(atoms.min() - pad, atoms.max() + pad, n_points)


def kde_density(law: EmpiricalLaw, x_grid: Optional[np.ndarray] = None,
                bandwidth: Union[str, float] = "auto") -> GridDensity:
    """Weighted Gaussian kernel density of a 1-d law on a grid, renormalized
    to unit trapezoid mass.

    With bandwidth="auto" the Silverman rule is used; a degenerate law
    (effectively a single atom) has no usable automatic bandwidth.
    """
    if law.dim != 1:
        raise ValueError("density estimation is one-dimensional")
    if not law.normalized:
        raise ValueError("kde_density needs a probability law")
    atoms = law.atoms_1d()
    if bandwidth == "auto":
        bw = silverman_bandwidth(atoms, law.weights)
        if not np.isfinite(bw) or bw <= 0.0:
            raise ValueError("degenerate law: pick a bandwidth explicitly")
    else:
        bw = float(bandwidth)
        if bw <= 0.0:
            raise ValueError("bandwidth must be positive")
    if x_grid is None:
        x_grid = density_grid(law, bw)
    x_grid = np.asarray(x_grid, dtype=float)
    raw, = binned_gaussian_smooth(atoms, [law.weights], bw, x_grid)
    return GridDensity(x_grid, np.maximum(raw, 0.0), 0.0).normalized()


@dataclass(frozen=True)
class DensityFunctionalPhi:
    """Phi(h) = Psi(integral of rho(x) h(x) dx) on grid densities.

    psi/dpsi and rho/drho are validated against central finite differences
    at construction; everything downstream may then trust the analytic
    derivative Psi'(integral) * rho(x).
    """

    psi: Callable
    dpsi: Callable
    rho: Callable
    drho: Callable
    descriptor: str = ""

    def __post_init__(self):
        grid = np.linspace(-2.0, 2.0, 9)
        _check_scalar_derivative(self.psi, self.dpsi, grid,
                                 f"psi[{self.descriptor}]")
        _check_scalar_derivative(self.rho, self.drho, grid,
                                 f"rho[{self.descriptor}]")

    def integral(self, h: GridDensity) -> float:
        return float(np.trapezoid(self.rho(h.x_grid) * h.values, h.x_grid))

    def value(self, h: GridDensity) -> float:
        return float(self.psi(self.integral(h)))

    def as_cylindrical(self) -> CylindricalFn:
        """The measure functional mu -> Psi(integral rho d mu) induced by the
        same pair; its derivative machinery lives in the functionals module."""
        return CylindricalFn(self.psi, self.dpsi, _pointwise(self.rho),
                             _pointwise_grad(self.drho), dim=1,
                             descriptor=self.descriptor or "density-induced")


def _pointwise(rho):
    def phi(x):
        return np.asarray(rho(np.asarray(x, dtype=float)[:, 0]), dtype=float)
    return phi


def _pointwise_grad(drho):
    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(drho(x[:, 0]), dtype=float)[:, None]
    return grad


def dPhi_representer(phi: DensityFunctionalPhi, h: GridDensity, x):
    """L2(dx) derivative of Phi at h, evaluated at x: Psi'(integral) * rho(x)
    centered to zero dx-mean over the grid window.

    x may be a scalar or an array; it must lie inside the grid hull, where
    the centering window is defined.
    """
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    pts = np.atleast_1d(xs)
    if pts.min() < h.x_grid[0] or pts.max() > h.x_grid[-1]:
        raise ValueError("representer points must lie inside the grid window")
    slope = float(phi.dpsi(phi.integral(h)))
    window = h.x_grid[-1] - h.x_grid[0]
    centering = slope * float(np.trapezoid(phi.rho(h.x_grid), h.x_grid)) / window
    vals = slope * np.asarray(phi.rho(pts), dtype=float) - centering
    return float(vals[0]) if scalar else vals


def representer_x_derivative(phi: DensityFunctionalPhi, h: GridDensity,
                             x_probes: np.ndarray) -> np.ndarray:
    """Central finite difference in x of the representer, deliberately not
    the analytic slope: this side of the comparison must come from the
    density-functional route alone."""
    pts = np.asarray(x_probes, dtype=float)
    step = h.spacing
    lo = np.maximum(pts - step, h.x_grid[0])
    hi = np.minimum(pts + step, h.x_grid[-1])
    up = dPhi_representer(phi, h, hi)
    dn = dPhi_representer(phi, h, lo)
    return (np.atleast_1d(up) - np.atleast_1d(dn)) / (hi - lo)


def bensoussan_check(phi: DensityFunctionalPhi, pool: PathPool,
                     density_values: np.ndarray, xi_values: np.ndarray,
                     x_probes, bandwidth: Union[str, float] = "auto") -> float:
    """Two-sided link between density-functional and measure derivatives.

    Builds the weighted pushforward law of xi under the density-reweighted
    measure, smooths it to a grid density, and checks, at every probe:

    1. the measure derivative of the induced cylindrical functional at the
       smoothed law equals the x-derivative (finite differences on the
       grid) of the density-functional representer;
    2. the representer centered under the reweighted law equals the
       centered antiderivative profile of the measure derivative at the
       empirical law.

    Returns the largest absolute discrepancy across both comparisons; the
    first is limited by FD resolution, the second by smoothing bias.
    """
    probes = np.asarray(x_probes, dtype=float)
    law = pushforward_law(pool, density_values, xi_values)
    h = kde_density(law, bandwidth=bandwidth)
    f_cyl = phi.as_cylindrical()

    # the smoothed law as an atomic law on the grid, trapezoid-weighted
    wgrid = np.full(h.x_grid.size, h.spacing)
    wgrid[0] *= 0.5
    wgrid[-1] *= 0.5
    kde_law = EmpiricalLaw(h.x_grid[:, None], wgrid * h.values, normalized=True)

    lhs = np.atleast_1d(lions_derivative(f_cyl, kde_law, probes))
    rhs = representer_x_derivative(phi, h, probes)
    err_slope = float(np.abs(lhs - rhs).max())

    rep_at_probes = np.atleast_1d(dPhi_representer(phi, h, probes))
    rep_at_atoms = np.atleast_1d(dPhi_representer(phi, h, law.atoms_1d()))
    rep_mean = float(np.dot(law.weights / law.weights.sum(), rep_at_atoms))
    centered_rep = rep_at_probes - rep_mean
    profile = density_derivative_profile(f_cyl, law, probes)
    err_profile = float(np.abs(centered_rep - profile.values).max())
    return max(err_slope, err_profile)
