"""Self-convolution backends: FFT grids and directional radial quadrature.

The FFT backend handles arbitrary angular factors on sampled grids (d <= 3).
The quadrature backend evaluates f*f along a ray to high accuracy for
radial densities, reducing the d-dimensional integral to (radius, polar
angle); it also supports the truncated variant with both factors clipped
away from the origin, which is what the tail-overlap diagnostics consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import QuadResult, QuadratureError, quad_adaptive, quad_semi_infinite
from .densities import ConveqError, DimensionMismatchError, l1_norm, sphere_surface

_CELL_BUDGET = 2 ** 28


class GridBudgetError(ConveqError, ValueError):
    pass


@dataclass(frozen=True)
class GridField:
    """Uniformly sampled field on a cubic grid.

    `lo` is the coordinate of the first cell center (identical per axis);
    center i sits at lo + i * spacing. Sampled densities are nonnegative.
    """

    d: int
    spacing: float
    lo: float
    values: np.ndarray
    riemann_mass: float = field(default=None)
    l1_reference: float = None
    trunc_radius: float = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != self.d:
            raise DimensionMismatchError("values array rank != dimension")
        if v.size == 0 or float(v.max(initial=0.0)) <= 0.0:
            raise ValueError("grid must contain positive values")
        vmax = float(v.max())
        if float(v.min()) < -1e-12 * vmax:
            raise ValueError("grid values must be nonnegative")
        v = np.maximum(v, 0.0)
        object.__setattr__(self, "values", v)
        if self.riemann_mass is None:
            object.__setattr__(self, "riemann_mass",
                               float(v.sum()) * self.spacing ** self.d)

    @property
    def n_per_axis(self):
        return self.values.shape[0]

    @property
    def half_width(self):
        return -self.lo + 0.5 * self.spacing

    def centers(self):
        return self.lo + self.spacing * np.arange(self.n_per_axis)

    def value_at(self, points):
        """Linear interpolation; zero outside the grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.d:
            raise DimensionMismatchError("query points have wrong dimension")
        if self.d == 1:
            return np.interp(pts[:, 0], self.centers(), self.values,
                             left=0.0, right=0.0)
        from scipy.interpolate import RegularGridInterpolator
        interp = RegularGridInterpolator(
            (self.centers(),) * self.d, self.values,
            bounds_error=False, fill_value=0.0)
        return interp(pts)

    def coarsened(self):
        """Grid at half resolution via 2^d block averaging."""
        n = self.n_per_axis
        if n % 2 or n < 32:
            raise ValueError("need an even n_per_axis >= 32 to coarsen")
        v = self.values
        for axis in range(self.d):
            v = 0.5 * (np.take(v, np.arange(0, v.shape[axis], 2), axis=axis)
                       + np.take(v, np.arange(1, v.shape[axis], 2), axis=axis))
        return GridField(self.d, 2.0 * self.spacing, self.lo + 0.5 * self.spacing,
                         v, trunc_radius=self.trunc_radius)


def sample_grid(f, L, n_per_axis, quad_tol=1e-8):
    """Sample f at the cell centers of [-L, L]^d.

    Records the Riemann mass, the quadrature reference mass, and the radius
    past which the profile has dropped by 1e-4 (used later to place trusted
    regions for convolutions).
    """
    if f.d > 3:
        raise DimensionMismatchError("grids support d <= 3")
    if L <= 0:
        raise ValueError("half width must be positive")
    n = int(n_per_axis)
    if n < 16 or n & (n - 1):
        raise ValueError("n_per_axis must be a power of two >= 16")
    if n ** f.d > _CELL_BUDGET:
        raise GridBudgetError(f"{n}^{f.d} cells exceed the budget of 2^28")
    h = 2.0 * L / n
    axis = -L + (np.arange(n) + 0.5) * h
    if f.d == 1:
        radii = np.abs(axis)
    else:
        sq = axis ** 2
        grids = np.meshgrid(*([sq] * f.d), indexing="ij", sparse=True)
        radii = np.sqrt(sum(grids))
    logg = f.profile.log_value(np.maximum(radii, 1e-300))
    if f.eta.is_constant:
        vals = f.eta.value * np.exp(logg)
    else:
        coords = np.meshgrid(*([axis] * f.d), indexing="ij", sparse=True)
        dot = sum(c * a for c, a in zip(coords, f.eta.axis))
        with np.errstate(invalid="ignore", divide="ignore"):
            eta_vals = f.eta.a + f.eta.b * np.where(radii > 0, dot / radii, 0.0)
        vals = eta_vals * np.exp(logg)
    vals = np.where(radii == 0.0, f.value_at_zero, vals)
    l1 = l1_norm(f, quad_tol)
    return GridField(f.d, h, float(axis[0]), vals,
                     l1_reference=l1,
                     trunc_radius=float(f.profile.radius_for_drop(1e-4)))


@dataclass(frozen=True)
class ConvResult:
    """n-fold self-convolution, either on a grid or as a scalar ray value."""

    grid: GridField | None
    order: int
    backend: str
    error_estimate: float
    trusted_half_width: float = math.inf
    value: float | None = None

    def value_at(self, points):
        if self.grid is None:
            raise ValueError("scalar result has no grid")
        return self.grid.value_at(points)

    def is_trusted(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.max(np.abs(pts), axis=-1) <= self.trusted_half_width


def _next_pow2(m):
    p = 1
    while p < m:
        p *= 2
    return p


def _fft_conv_power(values, d, n, spacing):
    """Linear n-fold self-convolution via zero-padded FFT."""
    size = values.shape[0]
    m = n * (size - 1) + 1
    p = _next_pow2(m)
    if p ** d > _CELL_BUDGET:
        raise GridBudgetError("padded FFT size exceeds the cell budget")
    spec = np.fft.rfftn(values, s=(p,) * d)
    out = np.fft.irfftn(spec ** n, s=(p,) * d)
    out = out[(slice(0, m),) * d]
    out *= spacing ** (d * (n - 1))
    return out


def fft_self_convolve(grid, n):
    """n-fold self-convolution of a sampled density on its grid.

    The output keeps the input spacing, extends to n times the input
    half-width (so no wraparound can reach it), and carries a two-resolution
    Richardson error estimate. The trusted half-width shrinks by n times the
    recorded support-truncation radius of the input.
    """
    if n < 2:
        raise ValueError("convolution order must be >= 2")
    out = _fft_conv_power(grid.values, grid.d, n, grid.spacing)
    vmax = float(out.max())
    if float(out.min()) < -1e-9 * vmax:
        raise ConveqError("FFT self-convolution produced significant negatives")
    out = np.maximum(out, 0.0)
    result_grid = GridField(grid.d, grid.spacing, n * grid.lo, out,
                            trunc_radius=grid.trunc_radius)

    coarse = grid.coarsened()
    out_c = np.maximum(_fft_conv_power(coarse.values, grid.d, n, coarse.spacing), 0.0)
    grid_c = GridField(grid.d, coarse.spacing, n * coarse.lo, out_c,
                       trunc_radius=grid.trunc_radius)
    probe_axis = grid_c.centers()
    keep = np.abs(probe_axis) <= 0.9 * grid.half_width
    probe_axis = probe_axis[keep]
    if grid.d == 1:
        pts = probe_axis[:, None]
    else:
        # A sparse probe set is enough for an error estimate.
        probe_axis = probe_axis[:: max(1, probe_axis.size // 64)]
        mesh = np.meshgrid(*([probe_axis] * grid.d), indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
    fine_vals = result_grid.value_at(pts)
    coarse_vals = grid_c.value_at(pts)
    scale = max(float(np.max(fine_vals)), 1e-300)
    mask = fine_vals > 1e-9 * scale
    if np.any(mask):
        err = float(np.max(np.abs(fine_vals[mask] - coarse_vals[mask])
                           / np.maximum(fine_vals[mask], 1e-300))) / 3.0
    else:
        err = math.inf
    r_trunc = grid.trunc_radius if grid.trunc_radius is not None else 0.0
    trusted = grid.half_width - n * r_trunc
    return ConvResult(result_grid, n, "fft", err, trusted)


# ---------------------------------------------------------------------------
# Directional quadrature backend (radial densities)
# ---------------------------------------------------------------------------

# Graded inner mesh: panel edges at relative offsets delta * rho^k covering
# seven decades, which resolves exponential boundary layers down to 1e-7 of
# the angular range.
_INNER_PANELS = 26
_INNER_DELTA = 1e-7
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def _inner_edges(w_lo, w_hi):
    """Panel edges in w for each (w_lo, w_hi) row, graded toward w_lo."""
    k = np.arange(_INNER_PANELS + 1, dtype=float)
    tau = np.empty(_INNER_PANELS + 1)
    tau[0] = 0.0
    rho = (1.0 / _INNER_DELTA) ** (1.0 / (_INNER_PANELS - 1))
    tau[1:] = _INNER_DELTA * rho ** (k[:-1])
    tau[-1] = 1.0
    rng = (w_hi - w_lo)[:, None]
    return w_lo[:, None] + rng * tau[None, :]


def _phi_of_w(w, t, s):
    """Polar angle at which |t theta - y| = w for |y| = s, stably."""
    ts4 = 4.0 * t * s
    q = (w * w - (t - s[:, None]) ** 2) / ts4[:, None]
    return 2.0 * np.arcsin(np.sqrt(np.clip(q, 0.0, 1.0)))


def _ray_pair_integral(prof_out, prof_in, d, t, r, log_norm, quad_tol,
                       max_panels=3000):
    """Clipped pair integral along a ray, scaled by e^{-log_norm}.

    Computes e^{-log_norm} * int_{|y|>r, |t theta - y|>r}
    A(|t theta - y|) B(|y|) dy for radial factors A (prof_out) and
    B (prof_in); r = 0 recovers the plain convolution at t theta.
    """
    if t <= 0:
        raise ValueError("ray parameter t must be positive")
    if r < 0:
        raise ValueError("clipping radius must be >= 0")
    log_a = prof_out.log_value
    log_b = prof_in.log_value

    rate_a = prof_out.tail_decay_rate()
    rate_b = prof_in.tail_decay_rate()
    tail_rate = rate_a + rate_b
    tail_scale = 1.0 / tail_rate if tail_rate > 0 else max(t, 8.0)

    if d == 1:
        def far_branch(s):
            # y = -s theta: the shifted factor sits at t + s.
            return np.exp(log_a(t + s) + log_b(s) - log_norm)

        def near_branch(s):
            return np.exp(log_a(np.abs(t - s)) + log_b(s) - log_norm)

        pieces = []
        bp = [1.0, t - 1.0, t + 1.0, t, 2.0 * t]
        if t - r > r:
            pieces.append((near_branch, r, t - r, bp))
        split_far = max(t + r + 4.0 * min(tail_scale, t + 8.0), 2.0 * (t + r))
        total = 0.0
        err = 0.0
        for fn, a, b, brk in pieces:
            res = quad_adaptive(fn, a, b, rtol=quad_tol / 3.0,
                                breakpoints=brk, max_panels=max_panels)
            total += res.value
            err += res.error
            if not res.converged:
                raise QuadratureError("ray quadrature did not converge",
                                      partial=total, error=err)
        for fn, start in ((near_branch, t + r), (far_branch, r)):
            core = quad_adaptive(fn, start, split_far, rtol=quad_tol / 3.0,
                                 breakpoints=bp, max_panels=max_panels)
            tail = quad_semi_infinite(fn, split_far, rtol=quad_tol / 3.0,
                                      atol=quad_tol * abs(total + core.value),
                                      scale=tail_scale, max_panels=max_panels)
            total += core.value + tail.value
            err += core.error + tail.error
            if not (core.converged and tail.converged):
                raise QuadratureError("ray quadrature did not converge",
                                      partial=total, error=err)
        return QuadResult(total, err, 0, True)

    surface = sphere_surface(d - 1)

    def outer(s):
        s = np.asarray(s, dtype=float)
        w_lo = np.maximum(r, np.abs(t - s))
        w_hi = t + s
        live = w_hi > w_lo
        sl = np.where(live, s, 1.0)
        edges_w = _inner_edges(np.where(live, w_lo, 0.0),
                               np.where(live, w_hi, 1.0))
        # Keep the profile kink at w = 1 on a panel edge when it is interior.
        kink = np.clip(1.0, edges_w[:, 0], edges_w[:, -1])[:, None]
        edges_w = np.sort(np.concatenate([edges_w, kink], axis=1), axis=1)
        edges_phi = _phi_of_w(edges_w, t, sl)
        half = 0.5 * (edges_phi[:, 1:] - edges_phi[:, :-1])
        mid = 0.5 * (edges_phi[:, 1:] + edges_phi[:, :-1])
        phi = mid[..., None] + half[..., None] * _GL8_X
        w = np.sqrt((t - sl[:, None, None]) ** 2
                    + 4.0 * t * sl[:, None, None] * np.sin(0.5 * phi) ** 2)
        expo = (log_a(w) + (log_b(sl) + (d - 1) * np.log(sl)
                            - log_norm)[:, None, None])
        if d > 2:
            with np.errstate(divide="ignore"):
                expo = expo + (d - 2) * np.log(np.maximum(np.sin(phi), 0.0))
        vals = np.exp(expo)
        inner = np.einsum("spk,k,sp->s", vals, _GL8_W, half)
        return np.where(live, inner * surface, 0.0)

    lo = r
    bp = [x for x in (1.0, abs(t - r), t - 1.0, t, t + 1.0, t + r, 2.0 * t)
          if x > lo]
    split = max(2.0 * (t + r), lo + 4.0 * min(tail_scale, t + 8.0))
    core = quad_adaptive(outer, lo, split, rtol=quad_tol / 2.0,
                         breakpoints=bp, max_panels=max_panels)
    tail = quad_semi_infinite(outer, split, rtol=quad_tol / 2.0,
                              atol=quad_tol * abs(core.value),
                              scale=tail_scale, max_panels=max_panels)
    if not (core.converged and tail.converged):
        raise QuadratureError("ray quadrature did not converge",
                              partial=core.value + tail.value,
                              error=core.error + tail.error)
    return QuadResult(core.value + tail.value, core.error + tail.error,
                      core.n_eval + tail.n_eval, True)


def conv2_directional(f, theta, t, quad_tol=1e-8):
    """f*f evaluated at t*theta by radial quadrature (radial densities only)."""
    if not f.eta.is_constant:
        raise ValueError("quadrature backend requires a constant angular factor;"
                         " use the FFT backend for anisotropic densities")
    if theta.d != f.d:
        raise DimensionMismatchError("direction dimension != density dimension")
    a = f.eta.value
    res = _ray_pair_integral(f.profile, f.profile, f.d, float(t), 0.0, 0.0,
                             quad_tol)
    return a * a * res.value
