"""Quantitative functionals for runs and twin runs.

Covers the conserved balances (energy and second moment), the paired
transport distance between twin particle ensembles, the clamped logarithmic
modulus of continuity with its empirical constants, the stability horizon of
a twin experiment, and the comparison envelope obtained by integrating the
scalar growth inequality. Time integrals inside balances use trapezoidal
quadrature on the recorded step grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (
    GridMismatchError,
    MomentFields,
    VelocityField,
    geodesic_distance,
)
from .particles import InitialFamily, ParticleEnsemble, admissibility_integral

__all__ = [
    "DiagnosticSeries",
    "OsgoodEnvelope",
    "MomentBoundReport",
    "PairingError",
    "log_modulus",
    "transport_distance_sq",
    "energy_balance",
    "m2_balance",
    "log_lip_constant",
    "stability_horizon",
    "twin_coupling_term",
    "moment_interpolation_ratio",
    "moment_bound_check",
    "osgood_envelope",
    "transport_growth_violation",
    "cumtrapz",
]

INV_E = float(np.exp(-1.0))


class PairingError(ValueError):
    """Two ensembles that must be twin transports of one sample are not."""


def log_modulus(tau):
    """Clamped modulus tau |log tau|: the identity-times-log on [0, 1/e],
    constant 1/e beyond. Continuous, non-decreasing and concave; accepts
    scalars or arrays, rejects negative input.
    """
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("modulus argument must be nonnegative")
    out = np.full(t.shape, INV_E)
    small = t < INV_E
    ts = t[small]
    vals = np.zeros_like(ts)
    pos = ts > 0.0
    vals[pos] = -ts[pos] * np.log(ts[pos])
    out[small] = vals
    if out.ndim == 0:
        return float(out)
    return out


def _require_paired(p1: ParticleEnsemble, p2: ParticleEnsemble):
    if p1.x0 is p2.x0 and p1.v0 is p2.v0 and p1.w is p2.w:
        return
    if not (
        np.array_equal(p1.x0, p2.x0)
        and np.array_equal(p1.v0, p2.v0)
        and np.array_equal(p1.w, p2.w)
    ):
        raise PairingError(
            "ensembles are not paired: initial coordinates and weights differ"
        )


def transport_distance_sq(p1: ParticleEnsemble, p2: ParticleEnsemble) -> float:
    """Mass-weighted squared phase-space gap between paired twin ensembles.

    Both ensembles must carry identical initial coordinates and weights
    (they are two transports of one sample, paired label by label).
    Positions compare through the torus geodesic distance; the result is
    zero exactly when the trajectories coincide, and is symmetric.
    """
    _require_paired(p1, p2)
    dx = geodesic_distance(p1.x, p2.x)
    dv = p1.v - p2.v
    return float(np.sum(p1.w * (dx**2 + dv[:, 0] ** 2 + dv[:, 1] ** 2)))


@dataclass
class DiagnosticSeries:
    """Per-step records of a run; twin-only entries stay None on single runs.

    diss_visc and diss_drag are running time integrals (trapezoid on the
    step grid) of the gradient energy and of the drag dissipation; coupling
    holds the instantaneous grid quadrature of u . j used by the
    second-moment balance.
    """

    times: np.ndarray
    e_fluid: np.ndarray
    m2: np.ndarray
    diss_visc: np.ndarray
    diss_drag: np.ndarray
    u_inf: np.ndarray
    coupling: np.ndarray
    nu: float = 1.0
    q: np.ndarray | None = None
    h: np.ndarray | None = None
    a: np.ndarray | None = None
    gamma_hat: np.ndarray | None = None
    gamma1_hat: np.ndarray | None = None
    w_l2: np.ndarray | None = None
    w_h1: np.ndarray | None = None
    env: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("record times must be strictly increasing")
        for name in ("diss_visc", "diss_drag"):
            run = np.asarray(getattr(self, name))
            if len(run) > 1 and np.any(np.diff(run) < -1e-12):
                raise ValueError(f"running integral {name} must be non-decreasing")
        if self.q is not None:
            if np.any(np.asarray(self.q) < 0.0):
                raise ValueError("paired transport distance must be nonnegative")
            if self.h is not None and np.any(
                np.asarray(self.h) < np.asarray(self.q) - 1e-15
            ):
                raise ValueError("h must dominate q")


def cumtrapz(times, values) -> np.ndarray:
    """Running trapezoidal integral on a (possibly nonuniform) time grid."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
    return out


def energy_balance(series: DiagnosticSeries) -> float:
    """Largest drift of the total-energy balance over the record.

    The balance adds the fluid energy, half the second moment, the viscous
    dissipation integral (scaled by nu) and the drag dissipation integral;
    the residual is meaured against the initial value.
    """
    lhs = (
        series.e_fluid
        + 0.5 * np.asarray(series.m2)
        + series.nu * np.asarray(series.diss_visc)
        + np.asarray(series.diss_drag)
    )
    return float(np.max(np.abs(lhs - lhs[0])))


def m2_balance(series: DiagnosticSeries, coupling=None) -> float:
    """Largest residual of the second-moment balance.

    Checks m2(t) + 2 int m2 = m2(0) + 2 int (u . j) with both integrals done
    by the trapezoid rule on the recorded grid; coupling defaults to the
    series' own record of the grid quadrature of u . j.
    """
    c = series.coupling if coupling is None else np.asarray(coupling, dtype=float)
    run_m2 = cumtrapz(series.times, series.m2)
    run_c = cumtrapz(series.times, c)
    res = np.asarray(series.m2) + 2.0 * run_m2 - series.m2[0] - 2.0 * run_c
    return float(np.max(np.abs(res)))


def sample_node_pairs(n: int, n_pairs: int, seed: int) -> np.ndarray:
    """Deterministic (m, 4) node-index pairs used by the empirical constants."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(int(n_pairs), 4))


def log_lip_constant(
    u: VelocityField, n_pairs: int = 1024, seed: int = 0, pairs=None
) -> float:
    """Empirical log-Lipschitz constant of u over sampled node pairs.

    Maximizes |u(x) - u(y)| / modulus(d(x, y)) over pairs with geodesic
    distance in (0, 1/e]; a precomputed pairs array overrides the sampler.
    """
    if pairs is None:
        if n_pairs < 1:
            raise ValueError("need at least one pair")
        pairs = sample_node_pairs(u.grid.n, n_pairs, seed)
    pairs = np.asarray(pairs, dtype=np.intp) % u.grid.n
    xs = u.grid.xs
    px = np.stack([xs[pairs[:, 0]], xs[pairs[:, 1]]], axis=1)
    py = np.stack([xs[pairs[:, 2]], xs[pairs[:, 3]]], axis=1)
    dist = geodesic_distance(px, py)
    keep = (dist > 0.0) & (dist <= INV_E)
    if not np.any(keep):
        return 0.0
    du = np.hypot(
        u.values[0][pairs[:, 0], pairs[:, 1]] - u.values[0][pairs[:, 2], pairs[:, 3]],
        u.values[1][pairs[:, 0], pairs[:, 1]] - u.values[1][pairs[:, 2], pairs[:, 3]],
    )[keep]
    return float(np.max(du / log_modulus(dist[keep])))


def stability_horizon(s_norm: float, t_max: float) -> float:
    """Largest t <= t_max whose twin-trajectory drift budget stays small.

    The budget (sqrt(t) + (2/3) t^(3/2)) s must stay below half of 1/e;
    s is the summed L2-in-time sup-norm size of the two fluid fields. The
    crossing is located by bisection to 1e-10. s = 0 returns t_max.
    """
    if s_norm < 0.0 or t_max < 0.0:
        raise ValueError("s_norm and t_max must be nonnegative")
    target = 0.5 * INV_E

    def drift(t: float) -> float:
        return (np.sqrt(t) + (2.0 / 3.0) * t**1.5) * s_norm

    if drift(t_max) < target:
        return float(t_max)
    lo, hi = 0.0, float(t_max)
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if drift(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def twin_coupling_term(
    u1: VelocityField, mom1: MomentFields, u2: VelocityField, mom2: MomentFields
) -> float:
    """Grid quadrature of (rho2 - rho1) u2 . w + (j1 - j2) . w with w = u1 - u2."""
    if not (u1.grid == u2.grid == mom1.grid == mom2.grid):
        raise GridMismatchError("twin coupling needs a common grid")
    w = u1.values - u2.values
    drho = mom2.rho.values - mom1.rho.values
    dj = mom1.j - mom2.j
    term1 = np.sum(drho * (u2.values[0] * w[0] + u2.values[1] * w[1]))
    term2 = np.sum(dj[0] * w[0] + dj[1] * w[1])
    return float((term1 + term2) * u1.grid.h**2)


def moment_interpolation_ratio(
    p: ParticleEnsemble, fam: InitialFamily, grid, l: int, k: int
) -> float:
    """Measured LHS/RHS of the kinetic moment interpolation bound.

    The l-th moment field is deposited on the grid and its (k+2)/(l+2) norm
    is compared against sup-density^((k-l)/(k+2)) times the k-th global
    moment to the power (l+2)/(k+2). Zero numerators return 0.
    """
    from .fields import deposit_scalar, lebesgue_norm
    from .particles import density_along_trajectories, moment

    if not (0 <= l <= k <= 2):
        raise ValueError("moment orders must satisfy 0 <= l <= k <= 2")
    speed = np.hypot(p.v[:, 0], p.v[:, 1])
    weights = p.w * speed**l
    field = deposit_scalar(grid, p.x, weights)
    lhs = lebesgue_norm(field, (k + 2) / (l + 2))
    if lhs == 0.0:
        return 0.0
    h_inf = float(np.max(density_along_trajectories(p, fam)))
    mk = moment(p, k)
    rhs = h_inf ** ((k - l) / (k + 2)) * mk ** ((l + 2) / (k + 2))
    if rhs == 0.0:
        return float("inf")
    return float(lhs / rhs)


@dataclass
class MomentBoundReport:
    """Outcome of the uniform moment bound check with its measured sides.

    slack is the fractional allowance for grid-deposition noise that was
    applied on top of the analytic bound.
    """

    passed: bool
    lhs_sup: float
    bound: float
    slack: float

    def __bool__(self) -> bool:
        return self.passed


def moment_bound_check(
    m0_sup,
    m1_sup,
    m2_sup,
    fam: InitialFamily,
    horizon: float,
    radius: float,
    slack: float = 0.10,
) -> MomentBoundReport:
    """Check the uniform moment bound against the family's decay integral.

    The measured quantity is the time supremum of the summed sup norms of
    the deposited moment fields m0, m1, m2; the bound is exp(2 horizon)
    times the worst-case decay integral at the given drift radius (which
    should be exp(horizon) times the measured time integral of the fluid
    sup norm). A failure at tight slack on an under-resolved grid indicates
    deposition noise, not a model violation.
    """
    lhs = float(
        np.max(
            np.asarray(m0_sup, dtype=float)
            + np.asarray(m1_sup, dtype=float)
            + np.asarray(m2_sup, dtype=float)
        )
    )
    bound = float(np.exp(2.0 * horizon) * admissibility_integral(fam, horizon, radius))
    return MomentBoundReport(
        passed=lhs <= (1.0 + slack) * bound, lhs_sup=lhs, bound=bound, slack=slack
    )


@dataclass
class OsgoodEnvelope:
    """Comparison solution of the scalar growth inequality on a time grid."""

    times: np.ndarray
    bound: np.ndarray
    k: float
    alpha: float
    h0: float

    def __post_init__(self):
        if np.any(np.asarray(self.bound) < 0.0):
            raise ValueError("the envelope must be nonnegative")


def osgood_envelope(times, gamma, k: float, alpha: float, h0: float, horizon=None) -> OsgoodEnvelope:
    """Integrate the comparison ODE y' = (k/alpha) gamma(t) (y + modulus(k y)).

    Classical RK4 on the recorded grid with gamma linearly interpolated at
    the half stages, restricted to t <= horizon when given. k must exceed 1
    and alpha must satisfy the absorption condition k*alpha <= 3/k. h0 = 0
    propagates to the identically zero envelope.
    """
    if k <= 1.0:
        raise ValueError("the envelope constant k must exceed 1")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if k * alpha > 3.0 / k + 1e-12:
        raise ValueError(f"alpha too large: need k*alpha <= 3/k, got {k * alpha:g}")
    if h0 < 0.0:
        raise ValueError("the initial value must be nonnegative")
    t = np.asarray(times, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if t.shape != g.shape:
        raise ValueError("times and gamma must have matching shapes")
    if horizon is not None:
        keep = t <= horizon + 1e-12
        t, g = t[keep], g[keep]
    coef = k / alpha

    def rate(ti: float, yi: float) -> float:
        gi = float(np.interp(ti, t, g))
        return coef * gi * (yi + log_modulus(k * yi))

    y = np.empty(len(t))
    y[0] = h0
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        yi = y[i]
        k1 = rate(t[i], yi)
        k2 = rate(t[i] + 0.5 * dt, yi + 0.5 * dt * k1)
        k3 = rate(t[i] + 0.5 * dt, yi + 0.5 * dt * k2)
        k4 = rate(t[i] + dt, yi + dt * k3)
        y[i + 1] = yi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return OsgoodEnvelope(times=t, bound=y, k=k, alpha=alpha, h0=h0)


def transport_growth_violation(times, q, gamma, w_l2_sq, k_hat: float) -> float:
    """Worst one-sided violation of the paired-distance growth bound.

    Forward differences of q are compared against 2 q + gamma modulus(q) +
    k_hat ||w||_2^2 evaluated at the left endpoint; the positive part of the
    largest excess is returned (0 when the bound holds everywhere).
    """
    t = np.asarray(times, dtype=float)
    qv = np.asarray(q, dtype=float)
    gv = np.asarray(gamma, dtype=float)
    wv = np.asarray(w_l2_sq, dtype=float)
    dq = np.diff(qv) / np.diff(t)
    rhs = 2.0 * qv[:-1] + gv[:-1] * log_modulus(qv[:-1]) + k_hat * wv[:-1]
    worst = float(np.max(dq - rhs)) if len(dq) else 0.0
    return max(0.0, worst)
