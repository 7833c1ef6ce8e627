"""Torus geometry, spectral fields, and particle-grid transfer kernels.

Everything lives on the unit periodic square [0,1)^2 sampled on a uniform
n-by-n lattice; axis 0 of a value array is the first coordinate. Wavenumbers
carry their 2*pi factor explicitly. All operations are pure (inputs are never
mutated) and use fixed summation orders, so repeated calls are bitwise
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VelocityField",
    "MomentFields",
    "GridMismatchError",
    "make_grid",
    "leray_project",
    "divergence_residual",
    "eval_velocity",
    "eval_scalar",
    "deposit",
    "deposit_scalar",
    "deposit_vector",
    "lebesgue_norm",
    "h1_seminorm",
    "geodesic_distance",
    "spectral_gradient",
    "gn_ratio",
    "wrap_points",
]


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n x n lattice on [0,1)^2 with periodic wrap-around.

    Precomputes the spectral machinery shared by every solver: integer mode
    numbers, wavenumbers 2*pi*m, the inverse Laplacian symbol (zero on the
    mean mode) and the 2/3-rule dealias mask. n must be even so the real
    transform pairs conjugate modes cleanly.
    """

    n: int
    length: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)):
            raise ValueError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"grid needs an even n >= 4, got n={self.n}")
        if self.length != 1.0:
            raise ValueError("the torus period is fixed to 1")
        n = int(self.n)
        set_ = object.__setattr__
        set_(self, "h", self.length / n)
        modes = np.fft.fftfreq(n, d=1.0 / n)  # integer cycle counts
        set_(self, "modes", modes)
        set_(self, "kx", (2.0 * np.pi * modes)[:, None])
        set_(self, "ky", (2.0 * np.pi * modes)[None, :])
        k2 = self.kx**2 + self.ky**2
        set_(self, "k2", k2)
        inv_k2 = np.zeros_like(k2)
        nz = k2 > 0.0
        inv_k2[nz] = 1.0 / k2[nz]
        set_(self, "inv_k2", inv_k2)
        cut = n // 3
        keep = np.abs(modes) <= cut
        set_(self, "dealias_mask", keep[:, None] & keep[None, :])
        set_(self, "xs", np.arange(n) * self.h)

    def node_mesh(self):
        """Coordinate arrays (x1, x2) of shape (n, n)."""
        return np.meshgrid(self.xs, self.xs, indexing="ij")


def make_grid(n) -> TorusGrid:
    """Build the unit torus grid with n points per axis (even, >= 4)."""
    return TorusGrid(n)


@dataclass
class ScalarField:
    """Real scalar samples on the nodes of a TorusGrid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if self.values.shape != (n, n):
            raise ValueError(f"scalar field must have shape ({n}, {n})")
        if not np.isfinite(self.values).all():
            raise ValueError("scalar field contains non-finite values")


@dataclass
class VelocityField:
    """Two-component real field on a TorusGrid.

    divergence_free is a promise set by leray_project (and kept by the fluid
    stepper); it is not re-verified on construction.
    """

    grid: TorusGrid
    values: np.ndarray  # shape (2, n, n)
    divergence_free: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if self.values.shape != (2, n, n):
            raise ValueError(f"velocity field must have shape (2, {n}, {n})")
        if not np.isfinite(self.values).all():
            raise ValueError("velocity field contains non-finite values")


@dataclass
class MomentFields:
    """Deposited kinetic moments: number density, momentum density, |v|^2 density."""

    grid: TorusGrid
    rho: ScalarField
    j: np.ndarray  # shape (2, n, n)
    m2: ScalarField

    def __post_init__(self):
        n = self.grid.n
        self.j = np.asarray(self.j, dtype=float)
        if self.j.shape != (2, n, n):
            raise ValueError(f"momentum density must have shape (2, {n}, {n})")
        if self.rho.values.min() < 0.0:
            raise ValueError("number density must be nonnegative")


def _fft(values):
    return np.fft.fft2(values, axes=(-2, -1))


def _ifft_real(spec):
    return np.real(np.fft.ifft2(spec, axes=(-2, -1)))


def leray_project(u: VelocityField) -> VelocityField:
    """Remove the gradient part of u mode by mode; the mean flow is kept.

    Idempotent, and the identity on fields that are already divergence free.
    """
    g = u.grid
    uh = _fft(u.values)
    div = g.kx * uh[0] + g.ky * uh[1]
    corr = div * g.inv_k2
    proj = np.stack([uh[0] - g.kx * corr, uh[1] - g.ky * corr])
    return VelocityField(g, _ifft_real(proj), divergence_free=True)


def divergence_residual(u: VelocityField) -> float:
    """Scale-free spectral divergence: max_k |k.u_hat| over max_k |k||u_hat|."""
    g = u.grid
    uh = _fft(u.values)
    div = np.abs(g.kx * uh[0] + g.ky * uh[1])
    scale = float((np.sqrt(g.k2) * np.hypot(np.abs(uh[0]), np.abs(uh[1]))).max())
    if scale == 0.0:
        return 0.0
    return float(div.max() / scale)


def wrap_points(points) -> np.ndarray:
    """Map points into [0,1)^2, guarding the mod-rounds-to-1 float edge case."""
    p = np.mod(np.asarray(points, dtype=float), 1.0)
    p[p >= 1.0] = 0.0
    return p


def _cic_stencil(grid: TorusGrid, points):
    """Lower corner indices, wrapped upper indices, and cell fractions."""
    p = wrap_points(points)
    s = p * grid.n
    i0 = np.floor(s).astype(np.intp)
    np.minimum(i0, grid.n - 1, out=i0)
    frac = s - i0
    i1 = i0 + 1
    i1[i1 == grid.n] = 0
    return i0, i1, frac


def _bilinear(values, i0, i1, frac):
    fx, fy = frac[:, 0], frac[:, 1]
    v00 = values[..., i0[:, 0], i0[:, 1]]
    v10 = values[..., i1[:, 0], i0[:, 1]]
    v01 = values[..., i0[:, 0], i1[:, 1]]
    v11 = values[..., i1[:, 0], i1[:, 1]]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v10 * fx * (1.0 - fy)
        + v01 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def eval_velocity(u: VelocityField, points) -> np.ndarray:
    """Bilinear periodic interpolation of u at points; exact at grid nodes.

    Returns an (m, 2) array for m query points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    i0, i1, frac = _cic_stencil(u.grid, pts)
    return np.ascontiguousarray(_bilinear(u.values, i0, i1, frac).T)


def eval_scalar(f: ScalarField, points) -> np.ndarray:
    """Bilinear periodic interpolation of a scalar field at points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    i0, i1, frac = _cic_stencil(f.grid, pts)
    return _bilinear(f.values, i0, i1, frac)


def _scatter(grid: TorusGrid, i0, i1, frac, weights):
    """Cloud-in-cell scatter of per-particle weights onto node sums."""
    n = grid.n
    fx, fy = frac[:, 0], frac[:, 1]
    idx = np.concatenate(
        [
            i0[:, 0] * n + i0[:, 1],
            i1[:, 0] * n + i0[:, 1],
            i0[:, 0] * n + i1[:, 1],
            i1[:, 0] * n + i1[:, 1],
        ]
    )
    wts = np.concatenate(
        [
            weights * (1.0 - fx) * (1.0 - fy),
            weights * fx * (1.0 - fy),
            weights * (1.0 - fx) * fy,
            weights * fx * fy,
        ]
    )
    return np.bincount(idx, weights=wts, minlength=n * n).reshape(n, n)


def deposit(particles, grid: TorusGrid) -> MomentFields:
    """Cloud-in-cell moment fields of a particle ensemble.

    `particles` needs arrays x (m, 2), v (m, 2) and w (m,). Node sums are
    divided by the cell area so the results are densities; the bilinear
    weights form a partition of unity, so the particle totals of mass,
    momentum and |v|^2 are conserved up to roundoff.
    """
    i0, i1, frac = _cic_stencil(grid, particles.x)
    inv_area = 1.0 / grid.h**2
    w = particles.w
    v = particles.v
    rho = _scatter(grid, i0, i1, frac, w) * inv_area
    jx = _scatter(grid, i0, i1, frac, w * v[:, 0]) * inv_area
    jy = _scatter(grid, i0, i1, frac, w * v[:, 1]) * inv_area
    m2 = _scatter(grid, i0, i1, frac, w * (v[:, 0] ** 2 + v[:, 1] ** 2)) * inv_area
    return MomentFields(
        grid, ScalarField(grid, rho), np.stack([jx, jy]), ScalarField(grid, m2)
    )


def deposit_scalar(grid: TorusGrid, positions, values) -> ScalarField:
    """CIC density of arbitrary per-particle scalar weights."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    i0, i1, frac = _cic_stencil(grid, pts)
    vals = _scatter(grid, i0, i1, frac, np.asarray(values, dtype=float))
    return ScalarField(grid, vals / grid.h**2)


def deposit_vector(grid: TorusGrid, positions, values) -> np.ndarray:
    """CIC density of per-particle 2-vector weights; returns a (2, n, n) array."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    vals = np.asarray(values, dtype=float)
    i0, i1, frac = _cic_stencil(grid, pts)
    out0 = _scatter(grid, i0, i1, frac, vals[:, 0])
    out1 = _scatter(grid, i0, i1, frac, vals[:, 1])
    return np.stack([out0, out1]) / grid.h**2


def _magnitude(f) -> tuple[TorusGrid, np.ndarray]:
    if isinstance(f, ScalarField):
        return f.grid, np.abs(f.values)
    if isinstance(f, VelocityField):
        return f.grid, np.hypot(f.values[0], f.values[1])
    raise TypeError(f"expected a ScalarField or VelocityField, got {type(f)!r}")


def lebesgue_norm(f, p) -> float:
    """L^p norm over the unit torus for a scalar or velocity field.

    Finite p uses the node quadrature (sum |f|^p h^2)^(1/p); p = inf is the
    node maximum of |f| (Euclidean magnitude for velocities).
    """
    if p < 1:
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")
    grid, mag = _magnitude(f)
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.h**2) ** (1.0 / p))


def h1_seminorm(f) -> float:
    """Spectral ||grad f||_2 by Parseval; f may be scalar or velocity."""
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.values
    elif isinstance(f, VelocityField):
        grid, vals = f.grid, f.values
    else:
        raise TypeError(f"expected a ScalarField or VelocityField, got {type(f)!r}")
    spec = _fft(vals)
    total = np.sum(grid.k2 * (spec.real**2 + spec.imag**2))
    return float(np.sqrt(total) / grid.n**2)


def spectral_gradient(f: ScalarField) -> np.ndarray:
    """Spectral gradient of a scalar field; returns a (2, n, n) array."""
    g = f.grid
    fh = _fft(f.values)
    return np.stack([_ifft_real(1j * g.kx * fh), _ifft_real(1j * g.ky * fh)])


def geodesic_distance(x, y):
    """Shortest torus distance between points (per-axis wrap, Euclidean combine).

    Accepts single points or (..., 2) arrays; the result is in [0, sqrt(2)/2].
    """
    d = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), 1.0)
    d = np.minimum(d, 1.0 - d)
    out = np.hypot(d[..., 0], d[..., 1])
    if out.ndim == 0:
        return float(out)
    return out


def gn_ratio(phi: ScalarField) -> float:
    """Ratio ||phi||_4 / (||phi||_2^(1/2) (||phi||_2^2 + ||grad phi||_2^2)^(1/4)).

    The interpolation constant of the 2D four-norm bound, measured on one
    field; zero fields return 0.
    """
    l2 = lebesgue_norm(phi, 2)
    if l2 == 0.0:
        return 0.0
    l4 = lebesgue_norm(phi, 4)
    g2 = h1_seminorm(phi)
    return float(l4 / (np.sqrt(l2) * (l2**2 + g2**2) ** 0.25))
