"""Almost-radial-decreasing densities on R^d and their scalar functionals.

A density here is f(x) = eta(x/|x|) * g(|x|): a positive angular factor on
the unit sphere times a positive nonincreasing radial profile. Everything
downstream (convolutions, tail-overlap diagnostics, compound-Poisson
construction) consumes these objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ive

from ._quad import quad_with_tail

_ZERO_RADIUS = 1e-8  # evaluation radius standing in for the origin


class ConveqError(Exception):
    """Base class for contract violations in this package."""


class DimensionMismatchError(ConveqError, ValueError):
    pass


class NonIntegrableError(ConveqError, ValueError):
    pass


#: Sentinel value returned by exp_moment when the integral is infinite.
DIVERGENT = math.inf


def sphere_surface(d):
    """Surface measure of the unit sphere in R^d (2 for d=1, 2*pi, 4*pi, ...)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def sphere_covering(d):
    """Deterministic direction set used for comparability / ratio probes.

    d=1: both signs; d=2: 64 equispaced angles; d=3: 256-point Fibonacci
    lattice.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        ang = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        n = 256
        i = np.arange(n) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    raise ValueError("sphere coverings are defined for d <= 3")


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^d."""

    unit: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.unit, dtype=float).reshape(-1)
        object.__setattr__(self, "unit", u)
        if u.size < 1:
            raise DimensionMismatchError("direction needs at least one component")
        if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
            raise ValueError("direction must have unit norm (within 1e-12)")

    @property
    def d(self):
        return self.unit.size

    @classmethod
    def along(cls, vector):
        v = np.asarray(vector, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(v / norm)


# ---------------------------------------------------------------------------
# Angular factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantAngular:
    """eta == value on the whole sphere."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("constant angular factor must be positive")

    def __call__(self, units):
        units = np.asarray(units, dtype=float)
        return np.full(units.shape[:-1], self.value)

    def bounds(self):
        return (self.value, self.value)

    def mean_coefficients(self, theta):
        """(a, b) with azimuthal average a + b*cos(phi) around `theta`."""
        return (self.value, 0.0)

    @property
    def is_constant(self):
        return True

    def to_json(self):
        return {"type": "const", "value": self.value}


@dataclass(frozen=True)
class CosineBumpAngular:
    """eta(u) = a + b * (u . axis) with a > |b| >= 0."""

    a: float
    b: float
    axis: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(-1)
        object.__setattr__(self, "axis", axis)
        if not (self.a > abs(self.b) >= 0.0):
            raise ValueError("cosine bump requires a > |b| >= 0")
        if abs(float(np.linalg.norm(axis)) - 1.0) > 1e-12:
            raise ValueError("bump axis must be a unit vector")

    def __call__(self, units):
        units = np.asarray(units, dtype=float)
        return self.a + self.b * (units @ self.axis)

    def bounds(self):
        return (self.a - abs(self.b), self.a + abs(self.b))

    def mean_coefficients(self, theta):
        # Averaging u.axis over the azimuthal circle at polar angle phi
        # leaves cos(phi) * (theta.axis); exact because eta is linear in u.
        return (self.a, self.b * float(np.dot(theta.unit, self.axis)))

    @property
    def is_constant(self):
        return False

    def to_json(self):
        return {"type": "cosine_bump", "a": self.a, "b": self.b,
                "axis": list(map(float, self.axis))}


# ---------------------------------------------------------------------------
# Radial profiles
# ---------------------------------------------------------------------------

class RadialProfile:
    """Positive nonincreasing profile g on (0, oo).

    Subclasses provide `log_value` (vectorized), a tail description used by
    the divergence analysis, and the radii of any slope kinks.
    """

    def log_value(self, r):
        raise NotImplementedError

    def value(self, r):
        return np.exp(self.log_value(r))

    def tail_decay_rate(self):
        """Exponential rate mu of the far tail: g(r) ~ poly * e^{-mu r}."""
        raise NotImplementedError

    def tail_poly_power(self):
        """Polynomial power beta of the far tail prefactor (1 v r)^{-beta}."""
        raise NotImplementedError

    def kink_radii(self):
        return ()

    def is_integrable(self, d):
        if self.tail_decay_rate() > 0.0:
            return True
        return self.tail_poly_power() > d

    def radius_for_drop(self, ratio):
        """Smallest radius where g falls to `ratio` times g(0+), by bisection."""
        if not 0.0 < ratio < 1.0:
            raise ValueError("ratio must be in (0, 1)")
        top = float(self.log_value(np.asarray([_ZERO_RADIUS]))[0])
        target = top + math.log(ratio)
        hi = 1.0
        for _ in range(200):
            if float(self.log_value(np.asarray([hi]))[0]) <= target:
                break
            hi *= 2.0
        else:
            return math.inf
        lo = _ZERO_RADIUS
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(self.log_value(np.asarray([mid]))[0]) <= target:
                hi = mid
            else:
                lo = mid
        return hi


@dataclass(frozen=True)
class PolynomialProfile(RadialProfile):
    """g(r) = (1 v r)^(-beta)."""

    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def log_value(self, r):
        r = np.asarray(r, dtype=float)
        return -self.beta * np.log(np.maximum(r, 1.0))

    def tail_decay_rate(self):
        return 0.0

    def tail_poly_power(self):
        return self.beta

    def kink_radii(self):
        return (1.0,)

    def to_json(self):
        return {"type": "polynomial", "beta": self.beta}


@dataclass(frozen=True)
class TemperedExponentialProfile(RadialProfile):
    """g(r) = exp(-m r) * (1 v r)^(-beta) with tempering rate m > 0."""

    m: float
    beta: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("tempering rate m must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def log_value(self, r):
        r = np.asarray(r, dtype=float)
        return -self.m * r - self.beta * np.log(np.maximum(r, 1.0))

    def tail_decay_rate(self):
        return self.m

    def tail_poly_power(self):
        return self.beta

    def kink_radii(self):
        return (1.0,)

    def to_json(self):
        return {"type": "tempered", "m": self.m, "beta": self.beta}


@dataclass(frozen=True)
class TabulatedProfile(RadialProfile):
    """Profile given by (knots, values); log g is interpolated linearly in r.

    Below the first knot g is constant at values[0]; past the last knot the
    last log-slope is continued, so the tail is a definite exponential and
    integrals stay well defined.
    """

    knots: np.ndarray
    values: np.ndarray
    _log_values: np.ndarray = field(init=False, repr=False, compare=False)
    _last_slope: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if knots.size < 2 or knots.size != values.size:
            raise ValueError("need matching knots/values with >= 2 entries")
        if not np.all(np.diff(knots) > 0) or knots[0] <= 0:
            raise ValueError("knots must be positive and strictly increasing")
        if not np.all(values > 0):
            raise ValueError("values must be strictly positive")
        if np.any(np.diff(values) > 0):
            raise ValueError("values must be nonincreasing")
        logv = np.log(values)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_log_values", logv)
        object.__setattr__(
            self, "_last_slope",
            float((logv[-1] - logv[-2]) / (knots[-1] - knots[-2])))

    def log_value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.knots, self._log_values)
        beyond = r > self.knots[-1]
        if np.any(beyond):
            out = np.where(
                beyond,
                self._log_values[-1] + self._last_slope * (r - self.knots[-1]),
                out)
        return out

    def tail_decay_rate(self):
        return -self._last_slope

    def tail_poly_power(self):
        return 0.0

    def kink_radii(self):
        return tuple(self.knots)

    def to_json(self):
        return {"type": "tabulated", "knots": list(map(float, self.knots)),
                "values": list(map(float, self.values))}


# ---------------------------------------------------------------------------
# The density object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionalDensity:
    """f(x) = eta(x/|x|) * g(|x|), with a fixed convention at x = 0."""

    d: int
    eta: object
    profile: RadialProfile
    value_at_zero: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise DimensionMismatchError("dimension must be >= 1")
        if isinstance(self.eta, CosineBumpAngular) and self.eta.axis.size != self.d:
            raise DimensionMismatchError("bump axis dimension != density dimension")
        if self.value_at_zero is None:
            v0 = float(np.exp(self.profile.log_value(np.asarray([_ZERO_RADIUS]))[0]))
            object.__setattr__(self, "value_at_zero", v0)
        elif not self.value_at_zero > 0:
            raise ValueError("value_at_zero must be positive")

    # -- evaluation --------------------------------------------------------

    def value(self, points):
        """f at one point (shape (d,)) or a batch (shape (..., d))."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if pts.shape[-1] != self.d:
            raise DimensionMismatchError(
                f"points have dimension {pts.shape[-1]}, density has {self.d}")
        pts = np.atleast_2d(pts)
        radii = np.linalg.norm(pts, axis=-1)
        out = np.empty(radii.shape)
        nonzero = radii > 0
        if np.any(nonzero):
            units = pts[nonzero] / radii[nonzero][..., None]
            out[nonzero] = self.eta(units) * np.exp(
                self.profile.log_value(radii[nonzero]))
        out[~nonzero] = self.value_at_zero
        return float(out[0]) if single else out.reshape(np.asarray(points).shape[:-1])

    def log_value_on_ray(self, theta, radii):
        """log f(r * theta) for positive radii, without under/overflow."""
        radii = np.asarray(radii, dtype=float)
        eta_val = float(self.eta(theta.unit[None, :])[0])
        return math.log(eta_val) + self.profile.log_value(radii)

    def eta_bounds(self):
        return self.eta.bounds()

    @property
    def is_radial(self):
        return self.eta.is_constant

    def is_integrable(self):
        return self.profile.is_integrable(self.d)

    def sup_value(self):
        """Upper bound for f: eta_max * g(0+)."""
        return self.eta_bounds()[1] * float(
            np.exp(self.profile.log_value(np.asarray([_ZERO_RADIUS]))[0]))

    def scaled(self, factor):
        """Density kappa * f, realized by scaling the angular factor."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        if isinstance(self.eta, ConstantAngular):
            eta = ConstantAngular(self.eta.value * factor)
        else:
            eta = CosineBumpAngular(self.eta.a * factor, self.eta.b * factor,
                                    self.eta.axis)
        return DirectionalDensity(self.d, eta, self.profile,
                                  self.value_at_zero * factor)

    def to_json(self):
        return {"d": self.d, "eta": self.eta.to_json(),
                "profile": self.profile.to_json()}


def evaluate(f, x):
    """Pointwise evaluation f(x); x must be a d-vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != f.d:
        raise DimensionMismatchError(f"expected a {f.d}-vector, got {x.size}")
    return f.value(x)


# ---------------------------------------------------------------------------
# Scalar functionals
# ---------------------------------------------------------------------------

def _log_angular_kernel(d, c, a_coef, b_coef):
    """log of the full angular integral at tilt argument c >= 0.

    Computes log( |S^{d-2}| * int_0^pi e^{c cos phi} (a + b cos phi)
    (sin phi)^{d-2} dphi ) for d >= 2, via the scaled Bessel identity
    int_0^pi e^{c cos phi}(sin phi)^{2 nu} dphi
        = sqrt(pi) Gamma(nu + 1/2) (2/c)^nu I_nu(c),
    whose cos-weighted version swaps I_nu for I_{nu+1}.
    """
    c = np.asarray(c, dtype=float)
    nu = 0.5 * (d - 2)
    front = (0.5 * math.log(math.pi) + gammaln(nu + 0.5)
             + math.log(sphere_surface(d - 1)))
    small = c < 1e-6
    large = c > 1e8  # scipy's ive goes nan near 2e9; Laplace regime anyway
    cs = np.where(small | large, 1.0, c)
    # (2/c)^nu * I_nu(c) * e^{-c}, stable for large c via ive.
    a_part = (2.0 / cs) ** nu * ive(nu, cs)
    b_part = (2.0 / cs) ** (nu + 1) * ive(nu + 1, cs) * (cs / 2.0)
    if np.any(small):
        # Series limits: (2/c)^nu I_nu -> 1/Gamma(nu+1), cos term -> c/(2(nu+1)).
        a_lim = np.exp(-gammaln(nu + 1.0) - c)
        b_lim = c / (2.0 * (nu + 1.0)) * np.exp(-gammaln(nu + 1.0) - c)
        a_part = np.where(small, a_lim, a_part)
        b_part = np.where(small, b_lim, b_part)
    if np.any(large):
        cl = np.where(large, c, 1.0)
        asym = np.exp(nu * (math.log(2.0) - np.log(cl))
                      - 0.5 * np.log(2.0 * math.pi * cl))
        a_part = np.where(large, asym, a_part)
        b_part = np.where(large, asym, b_part)
    combo = a_coef * a_part + b_coef * b_part
    return front + c + np.log(combo)


def _radial_breakpoints(profile):
    return tuple(k for k in profile.kink_radii())[:64]


def l1_norm(f, quad_tol=1e-10):
    """Total mass of f, via the radial reduction of the integral.

    The odd part of a cosine-bump angular factor integrates to zero over
    the sphere, so the angular mass is always a * |S^{d-1}|.
    """
    if not f.is_integrable():
        raise NonIntegrableError(
            "polynomial profile needs beta > d for integrability")
    a_coef, _ = f.eta.mean_coefficients(_default_theta(f.d))
    angular = a_coef * sphere_surface(f.d)
    logg = f.profile.log_value
    d = f.d

    def integrand(s):
        return np.exp(logg(s) + (d - 1) * np.log(s))

    rate = f.profile.tail_decay_rate()
    scale = 1.0 / rate if rate > 0 else 8.0
    split = max(4.0 * scale, 2.0, *(_radial_breakpoints(f.profile) or (2.0,)))
    res = quad_with_tail(integrand, 0.0, split, rtol=quad_tol,
                         breakpoints=_radial_breakpoints(f.profile),
                         tail_scale=max(scale, split))
    return angular * res.value


def _default_theta(d):
    e1 = np.zeros(d)
    e1[0] = 1.0
    return Direction(e1)


def exp_moment_is_divergent(f, gamma):
    """Analytic divergence rule for the tilted mass integral.

    The radial tail of the tilted integrand behaves like
    e^{(gamma - mu) s} s^{d - 1 - beta} times the angular decay
    (gamma s)^{-(d-1)/2}, so the integral diverges once gamma exceeds the
    tail rate, and at equality exactly when beta <= (d+1)/2 (for mu > 0)
    or beta <= d (for mu = 0, where the tilt is trivial).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    mu = f.profile.tail_decay_rate()
    beta = f.profile.tail_poly_power()
    if gamma > mu:
        return True
    if gamma == mu:
        if mu == 0.0:
            return beta <= f.d
        return beta <= (f.d + 1) / 2.0
    return False


def exp_moment(f, theta, gamma, quad_tol=1e-9):
    """Directional exponential moment: integral of e^{gamma (theta.y)} f(y) dy.

    Returns DIVERGENT (math.inf) when the integral is infinite; divergence
    is decided analytically from the profile family, never by watching the
    quadrature blow up.
    """
    if theta.d != f.d:
        raise DimensionMismatchError("direction dimension != density dimension")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if exp_moment_is_divergent(f, gamma):
        return DIVERGENT
    if gamma == 0.0:
        return l1_norm(f, quad_tol)
    logg = f.profile.log_value
    d = f.d
    a_coef, b_coef = f.eta.mean_coefficients(theta)

    if d == 1:
        eta_plus = float(f.eta(theta.unit[None, :])[0])
        eta_minus = float(f.eta(-theta.unit[None, :])[0])

        def integrand(s):
            lg = logg(s)
            return (eta_plus * np.exp(lg + gamma * s)
                    + eta_minus * np.exp(lg - gamma * s))
    else:
        def integrand(s):
            lg = logg(s) + (d - 1) * np.log(s)
            return np.exp(lg + _log_angular_kernel(d, gamma * s, a_coef, b_coef))

    mu = f.profile.tail_decay_rate()
    net = mu - gamma
    scale = 1.0 / net if net > 0 else 8.0
    split = max(4.0 * scale, 2.0, *(_radial_breakpoints(f.profile) or (2.0,)))
    res = quad_with_tail(integrand, 0.0, split, rtol=quad_tol,
                         breakpoints=_radial_breakpoints(f.profile),
                         tail_scale=max(scale, split))
    return res.value


def comparability_constants(f1, f2, radius_grid):
    """Empirical (min, max) of f1/f2 over a deterministic probe set.

    Probes are all combinations of the fixed sphere covering with the given
    radii; the true liminf/limsup are limits, so these are finite-range
    estimates only.
    """
    if f1.d != f2.d:
        raise DimensionMismatchError("densities live in different dimensions")
    radii = np.asarray(radius_grid, dtype=float)
    if radii.size == 0 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("radius_grid must be nonempty, positive, increasing")
    dirs = sphere_covering(f1.d)
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, f1.d)
    units = np.tile(dirs, (radii.size, 1))
    rr = np.repeat(radii, dirs.shape[0])
    log1 = np.log(f1.eta(units)) + f1.profile.log_value(rr)
    log2 = np.log(f2.eta(units)) + f2.profile.log_value(rr)
    if not np.all(np.isfinite(log2)):
        raise ValueError("f2 vanishes (or overflows) at a probe point")
    ratio = np.exp(log1 - log2)
    del pts
    return float(ratio.min()), float(ratio.max())


# ---------------------------------------------------------------------------
# JSON density specification (consumed by the CLI)
# ---------------------------------------------------------------------------

def density_from_json(spec):
    """Build a DirectionalDensity from its JSON dict specification."""
    try:
        d = int(spec["d"])
        eta_spec = spec["eta"]
        prof_spec = spec["profile"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed density spec: missing {exc}") from exc
    etype = eta_spec.get("type")
    if etype == "const":
        eta = ConstantAngular(float(eta_spec["value"]))
    elif etype == "cosine_bump":
        eta = CosineBumpAngular(float(eta_spec["a"]), float(eta_spec["b"]),
                                np.asarray(eta_spec["axis"], dtype=float))
    else:
        raise ValueError(f"unknown angular factor type: {etype!r}")
    ptype = prof_spec.get("type")
    if ptype == "polynomial":
        profile = PolynomialProfile(float(prof_spec["beta"]))
    elif ptype == "tempered":
        profile = TemperedExponentialProfile(float(prof_spec["m"]),
                                             float(prof_spec["beta"]))
    elif ptype == "tabulated":
        profile = TabulatedProfile(np.asarray(prof_spec["knots"], dtype=float),
                                   np.asarray(prof_spec["values"], dtype=float))
    else:
        raise ValueError(f"unknown profile type: {ptype!r}")
    v0 = spec.get("value_at_zero")
    return DirectionalDensity(d, eta, profile,
                              None if v0 is None else float(v0))
