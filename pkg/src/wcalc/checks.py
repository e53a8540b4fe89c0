"""Named verification batteries shared by the command line and the tests.

Every battery compares two routes to the same quantity and emits uniform
records; a record passes when |lhs - rhs| <= tolerance. Default tolerances
are three combined standard errors plus documented deterministic terms
(finite-difference bias, discrete-bracket corrections), and every one can
be overridden by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .wiener_grid import TimeGrid, PathPool, make_grid, sample_paths, brownian_at
from .functionals import CylindricalFn, NestedFn, make_functional, eval_cyl, \
    lifted_derivative_fd
from .measure_ops import pushforward_law, weighted_expectation
from .density_deriv import DensityCurve, scalar_exponential_curve, mixture_curve, \
    chain_rule_lhs_fd, chain_rule_rhs, second_order_check_1d, \
    second_order_check_multidim, multidim_derivative_repr, nested_derivative_check
from .girsanov import StepProcess, constant_process, deterministic_process, \
    history_process, doleans_exponential, shift_forward, shift_backward, \
    girsanov_check
from .clark_ocone import SmoothFunctional, scalar_functional, \
    clark_ocone_decompose, reconstruction_error
from .density_functional import DensityFunctionalPhi, bensoussan_check

_N_SHARDS = 8
_FD_STEP = 1e-3
# Central-difference bias constants, pinned from step-halving measurements;
# multiplied by the square of the step actually used.
_FD_BIAS_CHAIN = 2.0
_FD_BIAS_PROFILE = 2.0
# Discrete-bracket correction for the stochastic-integral pairing: the
# quadratic variation of the corrected driver under the reweighted measure
# differs from dt by O(dt^2) per interval, so the pairing carries an O(dt)
# deterministic gap. Pinned from a grid-halving measurement.
_BRACKET_BIAS = 0.6


@dataclass(frozen=True)
class CheckRecord:
    """One two-sided comparison; passes when |lhs - rhs| <= tolerance."""

    name: str
    lhs: float
    rhs: float
    std_err: float
    tolerance: float

    def __post_init__(self):
        for field in ("lhs", "rhs", "std_err", "tolerance"):
            if not np.isfinite(getattr(self, field)):
                raise ValueError(f"{self.name}: non-finite {field}")
        if self.tolerance < 0 or self.std_err < 0:
            raise ValueError(f"{self.name}: negative tolerance or standard error")

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance

    def as_dict(self) -> Dict[str, object]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "std_err": self.std_err, "tolerance": self.tolerance,
                "gap": self.gap, "passed": self.passed}


def _rec(overrides: Optional[Dict[str, float]], name: str, lhs: float,
         rhs: float, std_err: float, tolerance: float) -> CheckRecord:
    if overrides and name in overrides:
        tolerance = float(overrides[name])
    return CheckRecord(name, float(lhs), float(rhs), float(std_err),
                       float(tolerance))


def _shards(pool: PathPool, k: int = _N_SHARDS) -> List[PathPool]:
    idx = np.arange(pool.n_samples)
    return [pool.subset(idx[j::k]) for j in range(k)]


def _shard_se(values: Sequence[float]) -> float:
    """Standard error of the full-pool estimator from disjoint shard means.

    The full-pool statistic is (to first order) the average of the k shard
    statistics, so its standard error is the shard spread over sqrt(k).
    """
    v = np.asarray(values, dtype=float)
    return float(np.std(v, ddof=1) / np.sqrt(len(v)))


def _curve_battery(grid: TimeGrid):
    horizon = grid.horizon

    def other(inc):
        return np.exp(0.8 * np.asarray(inc, dtype=float).sum(axis=1)
                      - 0.32 * horizon)

    exp_curve = scalar_exponential_curve(lambda l: l, lambda l: 1.0, grid,
                                         lam_lo=0.0, lam_hi=1.0)
    mix_curve = mixture_curve(lambda inc: np.ones(np.asarray(inc).shape[0]),
                              other, grid)
    return [("exp", exp_curve), ("mix", mix_curve)]


def check_chain_rule(n_paths: int = 20000, n_steps: int = 16,
                     seed: int = 7101, tolerances=None, horizon: float = 1.0,
                     functionals: Optional[Sequence[str]] = None) -> List[CheckRecord]:
    """Parameter derivative of f(law of B_T under L^lam) two ways.

    lhs: central difference in lam of the reweighted functional. rhs: mean of
    (antiderivative of the Lions derivative at B_T) times dL/dlam. Battery of
    three functionals, two curve families, three parameter points, plus a
    closed-form instance where both routes must sit at exactly one.
    """
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    xi = brownian_at(pool, grid.horizon)
    shards = _shards(pool)
    shard_xi = [brownian_at(p, grid.horizon) for p in shards]
    fd_bias = _FD_BIAS_CHAIN * _FD_STEP ** 2
    records = []
    for fid in functionals or ("mean", "mean_sq", "sin_mean"):
        f = make_functional(fid)
        for cid, curve in _curve_battery(grid):
            for lam in (0.2, 0.45, 0.7):
                lhs = chain_rule_lhs_fd(f, curve, lam, xi, pool, _FD_STEP)
                rhs = chain_rule_rhs(f, curve, lam, xi, pool)
                diffs = [chain_rule_lhs_fd(f, curve, lam, x, p, _FD_STEP)
                         - chain_rule_rhs(f, curve, lam, x, p)
                         for p, x in zip(shards, shard_xi)]
                se = _shard_se(diffs)
                records.append(_rec(tolerances,
                                    f"chain/{fid}|{cid}|lam={lam:.2f}",
                                    lhs, rhs, se, 3.0 * se + fd_bias))

    # Closed form: under exp(lam B_T - lam^2 T / 2) the mean of B_T is lam T,
    # so the lam-derivative is the horizon itself on both routes.
    f = make_functional("mean")
    curve = _curve_battery(grid)[0][1]
    lam = 0.45
    lhs = chain_rule_lhs_fd(f, curve, lam, xi, pool, _FD_STEP)
    rhs = chain_rule_rhs(f, curve, lam, xi, pool)
    se_l = _shard_se([chain_rule_lhs_fd(f, curve, lam, x, p, _FD_STEP)
                      for p, x in zip(shards, shard_xi)])
    se_r = _shard_se([chain_rule_rhs(f, curve, lam, x, p)
                      for p, x in zip(shards, shard_xi)])
    records.append(_rec(tolerances, "chain/closed-form-fd", lhs, grid.horizon,
                        se_l, 3.0 * se_l + fd_bias))
    records.append(_rec(tolerances, "chain/closed-form-repr", rhs,
                        grid.horizon, se_r, 3.0 * se_r))
    return records


def _gauss_mean() -> CylindricalFn:
    return CylindricalFn(
        h=lambda u: u,
        h_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        phi=lambda x: np.exp(-0.5 * x[:, 0] ** 2),
        grad_phi=lambda x: -x * np.exp(-0.5 * x ** 2),
        dim=1, descriptor="gauss_mean")


def _plane_functionals() -> List[CylindricalFn]:
    return [
        CylindricalFn(h=lambda u: u,
                      h_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                      phi=lambda x: np.sin(x[:, 0]) + np.cos(x[:, 1]),
                      grad_phi=lambda x: np.column_stack([np.cos(x[:, 0]),
                                                          -np.sin(x[:, 1])]),
                      dim=2, descriptor="sin_cos"),
        CylindricalFn(h=lambda u: u ** 2, h_prime=lambda u: 2.0 * u,
                      phi=lambda x: x[:, 0] * x[:, 1],
                      grad_phi=lambda x: np.column_stack([x[:, 1], x[:, 0]]),
                      dim=2, descriptor="product"),
        CylindricalFn(h=np.tanh,
                      h_prime=lambda u: 1.0 / np.cosh(u) ** 2,
                      phi=lambda x: x[:, 0] + 0.5 * x[:, 1] ** 2,
                      grad_phi=lambda x: np.column_stack([np.ones(x.shape[0]),
                                                          x[:, 1]]),
                      dim=2, descriptor="tanh_quad"),
    ]


def check_second_order(n_paths: int = 20000, n_steps: int = 16,
                       seed: int = 7202, tolerances=None,
                       horizon: float = 1.0) -> List[CheckRecord]:
    """Space derivative of the derivative profile against the Lions derivative.

    One-dimensional battery with a quadratic finite-difference bound and a
    step-halving slope near two; then the planar gradient version on three
    functionals, and the drift-corrected stochastic-integral representation
    against a directional finite difference of the lift.
    """
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    xi = brownian_at(pool, grid.horizon)
    curve = _curve_battery(grid)[0][1]
    records = []

    laws = [("exp0.3", pushforward_law(pool, curve.eval(0.3, pool), xi)),
            ("base", pushforward_law(pool, np.ones(pool.n_samples), xi))]
    fd_bias = _FD_BIAS_PROFILE * _FD_STEP ** 2
    for fid, f in (("mean_sq", make_functional("mean_sq")),
                   ("sin_mean", make_functional("sin_mean")),
                   ("gauss_mean", _gauss_mean())):
        for lid, law in laws:
            lo, hi = np.quantile(law.atoms_1d(), [0.05, 0.95])
            xs = np.linspace(lo, hi, 41)
            err = second_order_check_1d(f, law, xs, _FD_STEP)
            records.append(_rec(tolerances, f"second/1d|{fid}|{lid}",
                                err, 0.0, 0.0, fd_bias + 1e-9))

    # Step-halving ladder: the worst-case error of the centered difference
    # scales like the square of the step, so the log-log slope sits near two.
    law = laws[0][1]
    lo, hi = np.quantile(law.atoms_1d(), [0.05, 0.95])
    xs = np.linspace(lo, hi, 41)
    steps = np.array([0.2, 0.1, 0.05, 0.025])
    for fid, f in (("sin_mean", make_functional("sin_mean")),
                   ("gauss_mean", _gauss_mean())):
        errs = [second_order_check_1d(f, law, xs, h) for h in steps]
        slope = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
        records.append(_rec(tolerances, f"second/slope|{fid}", slope, 2.0,
                            0.0, 0.2))

    # Planar gradient consistency on the joint law of (B_{T/2}, B_T).
    pts2 = np.column_stack([brownian_at(pool, 0.5 * grid.horizon), xi])
    law2 = pushforward_law(pool, curve.eval(0.3, pool), pts2)
    probe2 = np.column_stack([np.linspace(-1.0, 1.0, 9),
                              np.linspace(-1.2, 1.2, 9)])
    for f in _plane_functionals():
        err = second_order_check_multidim(f, law2, probe2, _FD_STEP)
        records.append(_rec(tolerances, f"second/2d|{f.descriptor}",
                            err, 0.0, 0.0, fd_bias + 1e-9))

    records.extend(_repr_records(tolerances, seed, horizon))
    return records


def _repr_records(tolerances, seed: int,
                  horizon: float = 1.0) -> List[CheckRecord]:
    """Stochastic-integral representation on a coarse grid.

    The conditional projections need tensor quadrature over the remaining
    intervals, so the grid stays at four steps and the pairing tolerance
    carries the documented discrete-bracket term proportional to dt.
    """
    grid = make_grid(4, horizon)
    n_paths, quad = 4000, 12
    pool = sample_paths(grid, n_paths, seed + 11)
    horizon = grid.horizon
    n = grid.n_steps

    sig = 0.4
    bound = math.exp(sig * 8.0 * math.sqrt(horizon))
    L = scalar_functional(grid,
                          lambda s: np.exp(sig * s - 0.5 * sig ** 2 * horizon),
                          lambda s: sig * np.exp(sig * s - 0.5 * sig ** 2 * horizon),
                          bounds=(bound, sig * bound))
    half = n // 2
    xi1 = SmoothFunctional(
        n_args=n,
        value_fn=lambda x: np.asarray(x, dtype=float)[:, :half].sum(axis=1),
        grad_fn=lambda x: np.concatenate(
            [np.ones((np.asarray(x).shape[0], half)),
             np.zeros((np.asarray(x).shape[0], n - half))], axis=1),
        bounds=(8.0 * math.sqrt(horizon), 1.0))
    xi2 = scalar_functional(grid, lambda s: s,
                            lambda s: np.ones_like(np.asarray(s, dtype=float)),
                            bounds=(8.0 * math.sqrt(horizon), 1.0))

    inc = pool.increments
    l_vals = np.asarray(L.value_fn(inc), dtype=float)
    l_norm = l_vals / weighted_expectation(pool, np.ones(pool.n_samples), l_vals)
    xi_pts = np.column_stack([xi1.value_fn(inc), xi2.value_fn(inc)])
    _, _, gam = clark_ocone_decompose(L, pool, quad_order=32)
    dts = grid.steps
    eta_dot = np.ones(n)
    ito_eta = ((inc - gam * dts[None, :]) * eta_dot[None, :]).sum(axis=1)
    # Direction induced on the observables: constant because both read the
    # path linearly.
    eta_obs = np.array([half * dts[0], float(dts.sum())])

    records = []
    for f in _plane_functionals()[:2]:
        out = multidim_derivative_repr(f, L, [xi1, xi2], pool, quad_order=quad)
        w = pool.weights / pool.weights.sum()

        zero = float(np.dot(w, l_norm * out))
        se0 = float(np.sqrt(np.dot(w, (l_norm * out - zero) ** 2)
                            / max(pool.n_samples - 1, 1)))
        records.append(_rec(tolerances, f"second/repr-drift|{f.descriptor}",
                            zero, 0.0, se0, 3.0 * se0))

        pair_vals = l_norm * out * ito_eta
        pair = float(np.dot(w, pair_vals))
        se_p = float(np.sqrt(np.dot(w, (pair_vals - pair) ** 2)
                             / max(pool.n_samples - 1, 1)))
        fd = lifted_derivative_fd(lambda law: eval_cyl(f, law), pool, l_vals,
                                  xi_pts, np.tile(eta_obs, (pool.n_samples, 1)),
                                  step=1e-3)
        scale = max(abs(fd), 1.0)
        tol = 3.0 * se_p + _BRACKET_BIAS * float(dts[0]) * scale
        records.append(_rec(tolerances, f"second/repr-fd|{f.descriptor}",
                            pair, fd, se_p, tol))
    return records


def _girsanov_processes(grid: TimeGrid):
    knots = grid.knots[:-1]
    return [
        ("const+", constant_process(grid, 0.5)),
        ("const-", constant_process(grid, -0.8)),
        ("sin-t", deterministic_process(grid, np.sin(2.0 * np.pi * knots))),
        ("ramp", deterministic_process(grid, 0.3 * knots)),
        ("tanh-B", history_process(
            grid, lambda i, hist: 0.6 * np.tanh(hist.sum(axis=1)), bound=0.6)),
    ]


def _girsanov_observables():
    return [
        ("endpoint", lambda pool: brownian_at(pool, pool.grid.horizon)),
        ("running-max", lambda pool: np.maximum(
            np.cumsum(pool.increments, axis=1), 0.0).max(axis=1)),
        ("sin-endpoint", lambda pool: np.sin(
            brownian_at(pool, pool.grid.horizon))),
        ("area", lambda pool: np.concatenate(
            [np.zeros((pool.n_samples, 1)),
             np.cumsum(pool.increments, axis=1)[:, :-1]], axis=1)
            @ pool.grid.steps),
        ("gauss-endpoint", lambda pool: np.exp(
            -0.5 * brownian_at(pool, pool.grid.horizon) ** 2)),
    ]


def check_girsanov(n_paths: int = 20000, n_steps: int = 16,
                   seed: int = 7303, tolerances=None,
                   horizon: float = 1.0) -> List[CheckRecord]:
    """Reweighting by the exponential martingale against shifted paths.

    Ten integrand/observable pairs compared with common random numbers, the
    forward/backward flow inversion down to roundoff, and the mean of the
    exponential pinned to one at every knot.
    """
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    gammas = _girsanov_processes(grid)
    phis = _girsanov_observables()
    pairs = [(i, i) for i in range(5)] + [(0, 2), (1, 3), (2, 4), (3, 0), (4, 1)]
    records = []
    for gi, pi in pairs:
        gname, gamma = gammas[gi]
        pname, phi = phis[pi]
        lhs, rhs, se = girsanov_check(pool, gamma, phi)
        records.append(_rec(tolerances, f"girsanov/{gname}*{pname}",
                            lhs, rhs, se, 3.0 * se + 1e-12))

    for gname in ("sin-t", "tanh-B"):
        gamma = dict(gammas)[gname]
        back = shift_backward(shift_forward(pool, gamma, grid.horizon),
                              gamma, grid.horizon)
        err = float(np.max(np.abs(back.increments - pool.increments)))
        records.append(_rec(tolerances, f"girsanov/inverse|{gname}",
                            err, 0.0, 0.0, 1e-10))

    w = pool.weights / pool.weights.sum()
    for gname in ("const-", "tanh-B"):
        gamma = dict(gammas)[gname]
        worst, worst_se, worst_gap = 1.0, 0.0, -1.0
        for t in grid.knots[1:]:
            dens = doleans_exponential(pool, gamma, float(t))
            m = float(np.dot(w, dens))
            se = float(np.sqrt(np.dot(w, (dens - m) ** 2)
                               / max(pool.n_samples - 1, 1)))
            if abs(m - 1.0) - 3.0 * se > worst_gap:
                worst, worst_se = m, se
                worst_gap = abs(m - 1.0) - 3.0 * se
        # The roundoff floor covers knots where the integrand vanishes and
        # the exponential is exactly one on every path.
        records.append(_rec(tolerances, f"girsanov/mean-one|{gname}",
                            worst, 1.0, worst_se, 3.0 * worst_se + 1e-9))
    return records


def check_clark_ocone(n_paths: int = 20000, n_steps: int = 16,
                      seed: int = 7404, tolerances=None,
                      horizon: float = 1.0) -> List[CheckRecord]:
    """Integrand extraction on the exponential family and defect scaling.

    For exp(sigma B_T - sigma^2 T/2) the logarithmic integrand is the
    constant sigma, recovered here to quadrature accuracy. For a bounded
    nonlinear functional the reconstruction defect is measured on a doubling
    ladder of grids; each refinement should cut it by a stable factor.
    """
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    records = []

    sig = 0.4
    bound = math.exp(sig * 10.0)
    F = scalar_functional(grid,
                          lambda s: np.exp(sig * s - 0.5 * sig ** 2 * grid.horizon),
                          lambda s: sig * np.exp(sig * s - 0.5 * sig ** 2 * grid.horizon),
                          bounds=(bound, sig * bound))
    _, _, gam = clark_ocone_decompose(F, pool, quad_order=32)
    records.append(_rec(tolerances, "clark/constant-integrand",
                        float(np.max(np.abs(gam - sig))), 0.0, 0.0, 1e-8))

    # A tanh-shaped density: positive, mean exactly one by symmetry, and the
    # conditional means stay above one half.
    defects = []
    for n in (4, 8, 16, 32):
        g = make_grid(n, horizon)
        p = sample_paths(g, n_paths, seed + n)
        Fh = scalar_functional(g, lambda s: 1.0 + 0.5 * np.tanh(s),
                               lambda s: 0.5 / np.cosh(s) ** 2, bounds=(1.5, 0.5))
        Z, _, _ = clark_ocone_decompose(Fh, p, quad_order=32)
        vals = np.asarray(Fh.value_fn(p.increments), dtype=float)
        defects.append(reconstruction_error(vals, Z, p))
    for k, n in enumerate((4, 8, 16)):
        ratio = defects[k] / defects[k + 1]
        records.append(_rec(tolerances, f"clark/defect-ratio|{n}to{2 * n}",
                            ratio, 1.5, 0.0, 0.3))
    return records


def _nested_battery():
    return [
        ("nested_gauss", make_functional("nested_gauss")),
        ("tanh_outer", NestedFn(
            g=np.tanh, g_prime=lambda u: 1.0 / np.cosh(u) ** 2,
            h=lambda u: u ** 2, h_prime=lambda u: 2.0 * u,
            psi=lambda x: np.sin(np.asarray(x, dtype=float)),
            descriptor="tanh_outer")),
    ]


def check_lemma34(n_paths: int = 20000, n_steps: int = 16,
                  seed: int = 7505, tolerances=None,
                  horizon: float = 1.0) -> List[CheckRecord]:
    """Nested conditional functional: partial-derivative formula vs bumping.

    The analytic profile is paired against direct density perturbations on a
    kernel-regression bandwidth ladder; the pinned tolerances tighten as the
    bandwidth shrinks because the regression bias dominates the error.
    """
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    curve = _curve_battery(grid)[0][1]
    dens = curve.eval(0.3, pool)
    x1 = brownian_at(pool, 0.5 * grid.horizon)
    x2 = brownian_at(pool, grid.horizon)
    probes = np.array([[0.0, 0.0], [0.5, 0.5], [-0.5, 0.3]])
    ladder = (0.5, 0.35, 0.25)
    tols = {0.5: 0.035, 0.35: 0.025, 0.25: 0.02}
    records = []
    for fid, fn in _nested_battery():
        for bw in ladder:
            err = nested_derivative_check(fn, pool, dens, x1, x2, probes,
                                          bandwidth=bw)
            records.append(_rec(tolerances, f"lemma34/{fid}|bw={bw:.2f}",
                                err, 0.0, 0.0, tols[bw]))
    return records


def _phi_battery():
    return [
        ("sin-sin", DensityFunctionalPhi(
            psi=np.sin, dpsi=np.cos, rho=np.sin, drho=np.cos,
            descriptor="sin-sin")),
        ("linear-gauss", DensityFunctionalPhi(
            psi=lambda u: u,
            dpsi=lambda u: np.ones_like(np.asarray(u, dtype=float)),
            rho=lambda x: np.exp(-0.5 * np.asarray(x, dtype=float) ** 2),
            drho=lambda x: -np.asarray(x, dtype=float)
            * np.exp(-0.5 * np.asarray(x, dtype=float) ** 2),
            descriptor="linear-gauss")),
    ]


def check_bensoussan(n_paths: int = 20000, n_steps: int = 16,
                     seed: int = 7606, tolerances=None,
                     horizon: float = 1.0) -> List[CheckRecord]:
    """Measure derivative against the classical derivative of the density
    functional built from the smoothed law, on a bandwidth ladder."""
    grid = make_grid(n_steps, horizon)
    pool = sample_paths(grid, n_paths, seed)
    curve = _curve_battery(grid)[0][1]
    dens = curve.eval(0.3, pool)
    xi = brownian_at(pool, grid.horizon)
    probes = np.linspace(-1.5, 1.5, 7)
    # Smoothing bias dominates and scales with the squared bandwidth; the
    # pinned values sit at roughly twice the measured worst case.
    ladder = (0.5, 0.35, 0.25)
    tols = {0.5: 1e-2, 0.35: 6e-3, 0.25: 3e-3}
    records = []
    for fid, phi in _phi_battery():
        for bw in ladder:
            err = bensoussan_check(phi, pool, dens, xi, probes, bandwidth=bw)
            records.append(_rec(tolerances, f"bensoussan/{fid}|bw={bw:.2f}",
                                err, 0.0, 0.0, tols[bw]))
    return records


CHECKS: Dict[str, Callable[..., List[CheckRecord]]] = {
    "chain-rule": check_chain_rule,
    "second-order": check_second_order,
    "girsanov": check_girsanov,
    "clark-ocone": check_clark_ocone,
    "lemma34": check_lemma34,
    "bensoussan": check_bensoussan,
}


def run_check(name: str, n_paths: int, n_steps: int, seed: int,
              tolerances: Optional[Dict[str, float]] = None,
              horizon: float = 1.0,
              functionals: Optional[Sequence[str]] = None) -> List[CheckRecord]:
    if name not in CHECKS:
        raise KeyError(f"unknown check id: {name}; "
                       f"choose from {sorted(CHECKS)}")
    kwargs = dict(n_paths=n_paths, n_steps=n_steps, seed=seed,
                  tolerances=tolerances, horizon=horizon)
    if name == "chain-rule":
        kwargs["functionals"] = functionals
    elif functionals:
        raise ValueError("functional ids only apply to the chain-rule battery")
    return CHECKS[name](**kwargs)
