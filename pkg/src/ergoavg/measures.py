"""Normalized weight measures on R^d: densities, curves, spheres, convolutions.

Four variants cover the laboratory's needs:

* :class:`AcDensity` -- absolutely continuous measure with a density over an
  axis-aligned box (degenerate boxes model point masses);
* :class:`CurveMeasure` -- measure supported on a smooth parametric curve,
  with a density against the curve parameter;
* :class:`SphereMeasure` -- uniform surface measure on a sphere;
* :class:`ConvPower` -- the n-fold convolution of a base measure, realized
  by i.i.d. sum sampling and Fourier exponentiation (never as a density).

Every variant supports counter-based sampling and Fourier evaluation in the
convention  F(xi) = integral of exp(+2*pi*i * xi . r) d nu(r);  the
non-convolution variants also expose deterministic quadrature nodes.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, UnsupportedMeasureError, UsageError
from .rng import uniform_block

TWO_PI = 2.0 * np.pi
MASS_TOL = 1e-9
FOURIER_TOL = 1e-8
NODE_CAP = 2**20
_GL_ORDER = 16  # panel order for composite Gauss rules
_CDF_GRID = 8193  # nodes for numerical inverse-CDF of curve parameters
_U_SHIFT = 2.0**-54  # maps uniforms from [0,1) into (0,1) for ndtri


class QuadratureCapWarning(UserWarning):
    """Adaptive quadrature stopped at the node cap before reaching target."""


@dataclass(frozen=True)
class AcDensity:
    """Absolutely continuous measure with density over an axis-aligned box.

    ``density`` maps an ``(n, dim)`` array of points to ``(n,)`` nonnegative
    values.  Sampling uses per-axis inverse CDFs when provided (separable
    densities), otherwise rejection over the box, which requires an explicit
    ``density_bound``.  A box of zero width on every axis is a point mass.
    ``char_function``, when given, is the exact Fourier transform and short
    circuits quadrature.
    """

    dim: int
    density: object
    support_box: np.ndarray
    inverse_cdfs: tuple | None = None
    density_bound: float | None = None
    char_function: object = None
    name: str = "ac-density"

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.support_box, dtype=float))
        if box.shape != (self.dim, 2):
            raise ConfigurationError(
                f"support_box must be ({self.dim}, 2), got {box.shape}"
            )
        widths = box[:, 1] - box[:, 0]
        if np.any(widths < 0) or not np.all(np.isfinite(box)):
            raise ConfigurationError("support box must be finite with lo <= hi")
        if np.any(widths == 0) and not np.all(widths == 0):
            raise ConfigurationError(
                "mixed degenerate/non-degenerate axes are not supported"
            )
        object.__setattr__(self, "support_box", box)
        if not self.is_point:
            _validate_density_mass(self)

    @property
    def is_point(self):
        return bool(np.all(self.support_box[:, 0] == self.support_box[:, 1]))


@dataclass(frozen=True)
class CurveMeasure:
    """Measure on a smooth curve with density ``weight`` against the parameter.

    ``curve`` maps an ``(n,)`` parameter array to ``(n, dim)`` points;
    ``tangent``, when given, is its analytic derivative (otherwise central
    finite differences are used where tangents are needed).
    """

    dim: int
    param_range: tuple
    curve: object
    weight: object
    tangent: object = None
    name: str = "curve"
    _cdf: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a, b = map(float, self.param_range)
        if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
            raise ConfigurationError("param_range must be a nondegenerate interval")
        object.__setattr__(self, "param_range", (a, b))
        grid = np.linspace(a, b, _CDF_GRID)
        w = np.asarray(self.weight(grid), dtype=float)
        if np.any(w < -1e-12):
            raise ConfigurationError("curve weight must be nonnegative on [a, b]")
        _validate_curve_mass(self)
        cdf = np.concatenate([[0.0], np.cumsum((w[1:] + w[:-1]) / 2 * np.diff(grid))])
        if cdf[-1] <= 0:
            raise ConfigurationError("curve weight has zero total mass")
        object.__setattr__(self, "_cdf", (cdf / cdf[-1], grid))

    def tangent_at(self, r):
        """Tangent vectors, analytic when available, else central differences."""
        r = np.asarray(r, dtype=float)
        if self.tangent is not None:
            return np.asarray(self.tangent(r), dtype=float)
        h = 1e-6
        return (np.asarray(self.curve(r + h)) - np.asarray(self.curve(r - h))) / (2 * h)


@dataclass(frozen=True)
class SphereMeasure:
    """Uniform normalized surface measure on a sphere in R^ambient_dim."""

    ambient_dim: int
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ConfigurationError("sphere needs ambient dimension >= 2")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ConfigurationError("sphere radius must be positive and finite")
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if center.shape != (self.ambient_dim,):
            raise ConfigurationError("center must have length ambient_dim")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class ConvPower:
    """n-fold convolution of a normalized base measure."""

    base: object
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("convolution power needs n >= 1")


WeightMeasure = (AcDensity, CurveMeasure, SphereMeasure, ConvPower)


def measure_dim(measure):
    """Dimension of the ambient space the measure lives in."""
    if isinstance(measure, AcDensity):
        return measure.dim
    if isinstance(measure, CurveMeasure):
        return measure.dim
    if isinstance(measure, SphereMeasure):
        return measure.ambient_dim
    if isinstance(measure, ConvPower):
        return measure_dim(measure.base)
    raise UnsupportedMeasureError(f"not a weight measure: {measure!r}")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def uniform_box(lo, hi):
    """Uniform density on the box [lo_1, hi_1] x ... x [lo_d, hi_d].

    Ships per-axis inverse CDFs and the exact product-of-sinc Fourier
    transform.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ConfigurationError("uniform box needs lo < hi per axis")
    d = lo.size
    widths = hi - lo
    vol = float(np.prod(widths))

    def density(pts):
        pts = np.atleast_2d(pts)
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.where(inside, 1.0 / vol, 0.0)

    def char_function(xi):
        xi = np.atleast_2d(xi)
        phase = np.exp(1j * np.pi * xi @ (lo + hi))
        return phase * np.prod(np.sinc(xi * widths), axis=1)

    cdfs = tuple(
        (lambda u, a=a, w=w: a + w * u) for a, w in zip(lo, widths)
    )
    return AcDensity(
        dim=d,
        density=density,
        support_box=np.stack([lo, hi], axis=1),
        inverse_cdfs=cdfs,
        density_bound=1.0 / vol,
        char_function=char_function,
        name=f"uniform-box-{d}d",
    )


def interval_density():
    """The indicator density of [0, 1] on the line (the classical weight)."""
    m = uniform_box([0.0], [1.0])
    return replace(m, name="interval-unit")


def point_mass(point):
    """Degenerate density concentrated at a single point."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    box = np.stack([point, point], axis=1)

    def char_function(xi):
        xi = np.atleast_2d(xi)
        return np.exp(2j * np.pi * xi @ point)

    return AcDensity(
        dim=point.size,
        density=lambda pts: np.ones(np.atleast_2d(pts).shape[0]),
        support_box=box,
        char_function=char_function,
        name="point-mass",
    )


def make_moment_curve(d):
    """Uniform parameter measure on r -> (r, r^2, ..., r^d), r in (0, 1)."""
    if d < 1:
        raise ConfigurationError("moment curve needs d >= 1")
    powers = np.arange(1, d + 1)

    def curve(r):
        return np.asarray(r, dtype=float)[..., None] ** powers

    def tangent(r):
        r = np.asarray(r, dtype=float)
        return powers * r[..., None] ** (powers - 1)

    return CurveMeasure(
        dim=d,
        param_range=(0.0, 1.0),
        curve=curve,
        weight=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        tangent=tangent,
        name=f"moment-curve-{d}",
    )


def make_semimeridian(longitude, sphere):
    """Normalized arc-parameter measure on the half great circle at a longitude.

    The curve runs from the north pole (colatitude 0) to the south pole
    (colatitude pi) of the given sphere, through the equator point at the
    given longitude.  Only ambient dimension 3 is supported.
    """
    if sphere.ambient_dim != 3:
        raise UnsupportedMeasureError("semimeridians are defined on spheres in R^3")
    gamma = float(longitude)
    center, radius = sphere.center, sphere.radius
    cg, sg = np.cos(gamma), np.sin(gamma)

    def curve(theta):
        theta = np.asarray(theta, dtype=float)
        st, ct = np.sin(theta), np.cos(theta)
        return center + radius * np.stack([st * cg, st * sg, ct], axis=-1)

    def tangent(theta):
        theta = np.asarray(theta, dtype=float)
        st, ct = np.sin(theta), np.cos(theta)
        return radius * np.stack([ct * cg, ct * sg, -st], axis=-1)

    return CurveMeasure(
        dim=3,
        param_range=(0.0, np.pi),
        curve=curve,
        weight=lambda t: np.full_like(np.asarray(t, dtype=float), 1.0 / np.pi),
        tangent=tangent,
        name=f"semimeridian-{gamma:.6g}",
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample(measure, seed, count):
    """Draw ``count`` i.i.d. points from the measure.

    Deterministic in ``(seed, count)``: sample ``i`` is a pure function of
    ``(seed, i)``, so prefixes agree across calls and chunked/parallel
    generation reproduces the same bits.
    """
    if count < 1:
        raise UsageError("count must be >= 1")
    return _sample(measure, seed, (), count)


def _sample(measure, seed, path, count):
    if isinstance(measure, ConvPower):
        if measure.n == 1:
            return _sample(measure.base, seed, path, count)
        total = _sample(measure.base, seed, path + (0,), count)
        for j in range(1, measure.n):
            total = total + _sample(measure.base, seed, path + (j,), count)
        return total
    if isinstance(measure, SphereMeasure):
        m = measure.ambient_dim
        u = uniform_block(seed, path, count, m)
        g = ndtri(u + _U_SHIFT)
        norms = np.sqrt(np.sum(g * g, axis=1))
        norms[norms == 0] = 1.0  # probability-zero guard
        return measure.center + measure.radius * g / norms[:, None]
    if isinstance(measure, CurveMeasure):
        u = uniform_block(seed, path, count, 1)[:, 0]
        cdf, grid = measure._cdf
        r = np.interp(u, cdf, grid)
        return np.asarray(measure.curve(r), dtype=float).reshape(count, measure.dim)
    if isinstance(measure, AcDensity):
        return _sample_ac(measure, seed, path, count)
    raise UnsupportedMeasureError(f"cannot sample {measure!r}")


def _sample_ac(measure, seed, path, count):
    box = measure.support_box
    if measure.is_point:
        return np.tile(box[:, 0], (count, 1))
    d = measure.dim
    if measure.inverse_cdfs is not None:
        u = uniform_block(seed, path, count, d)
        cols = [np.asarray(f(u[:, i]), dtype=float) for i, f in enumerate(measure.inverse_cdfs)]
        return np.stack(cols, axis=1)
    if measure.density_bound is None:
        raise ConfigurationError(
            "rejection sampling needs an explicit density_bound "
            "(or provide per-axis inverse_cdfs)"
        )
    lo, widths = box[:, 0], box[:, 1] - box[:, 0]
    bound = float(measure.density_bound)
    out = np.empty((count, d))
    pending = np.arange(count)
    for round_idx in range(512):
        u = uniform_block(seed, path + (round_idx,), count, d + 1)[pending]
        pts = lo + widths * u[:, :d]
        accept = u[:, d] * bound <= np.asarray(measure.density(pts), dtype=float)
        out[pending[accept]] = pts[accept]
        pending = pending[~accept]
        if pending.size == 0:
            return out
    raise ConfigurationError(
        "rejection sampling failed to accept after 512 rounds; "
        "density_bound is likely far too large or the density malformed"
    )


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def quadrature_nodes(measure, resolution):
    """Deterministic nodes and weights integrating against the measure.

    Weights are renormalized to sum to exactly 1.  Convolution powers with
    n >= 2 have no node representation; use sampling or Fourier
    factorization instead.
    """
    if isinstance(measure, ConvPower):
        if measure.n == 1:
            return quadrature_nodes(measure.base, resolution)
        raise UnsupportedMeasureError(
            "convolution powers have no quadrature nodes; "
            "use sampling or the Fourier factorization"
        )
    if resolution < 2:
        raise ConfigurationError("resolution must be >= 2")
    if isinstance(measure, AcDensity):
        pts, w = _ac_nodes(measure, resolution)
    elif isinstance(measure, CurveMeasure):
        pts, w = _curve_nodes(measure, resolution)
    elif isinstance(measure, SphereMeasure):
        pts, w = _sphere_nodes(measure, resolution)
    else:
        raise UnsupportedMeasureError(f"cannot build nodes for {measure!r}")
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise ConfigurationError("quadrature weights failed to normalize")
    return pts, w / total


def _ac_nodes(measure, resolution):
    box = measure.support_box
    if measure.is_point:
        return box[:, :1].T.copy(), np.array([1.0])
    x, w = np.polynomial.legendre.leggauss(resolution)
    axes_x, axes_w = [], []
    for lo, hi in box:
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        axes_x.append(mid + half * x)
        axes_w.append(half * w)
    grids = np.meshgrid(*axes_x, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    wts = wts * np.asarray(measure.density(pts), dtype=float)
    return pts, wts


def _panel_gauss(a, b, panels, order=_GL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2
    half = (edges[1:] - edges[:-1]) / 2
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return r, wts


def _curve_nodes(measure, resolution):
    a, b = measure.param_range
    r, w = _panel_gauss(a, b, resolution)
    pts = np.asarray(measure.curve(r), dtype=float).reshape(r.size, measure.dim)
    return pts, w * np.asarray(measure.weight(r), dtype=float)


def _sphere_nodes(measure, resolution):
    m = measure.ambient_dim
    n_azimuth = 2 * resolution
    phi = TWO_PI * np.arange(n_azimuth) / n_azimuth
    if m == 2:
        pts = measure.center + measure.radius * np.stack(
            [np.cos(phi), np.sin(phi)], axis=1
        )
        return pts, np.full(n_azimuth, 1.0 / n_azimuth)
    # product rule: Gauss nodes in each colatitude (weight sin^k absorbed via
    # Gegenbauer), uniform azimuth
    from scipy.special import roots_gegenbauer

    # assemble from the innermost azimuth plane outwards; the colatitude
    # applied last lands in the first coordinate and must absorb the highest
    # sin power (k = m - 2), so powers are applied in ascending order
    pts = np.array([np.cos(phi), np.sin(phi)]).T
    wts = np.full(n_azimuth, 1.0 / n_azimuth)
    for k in range(1, m - 1):
        if k == 1:
            u, w = np.polynomial.legendre.leggauss(resolution)
        else:
            u, w = roots_gegenbauer(resolution, k / 2)
        s = np.sqrt(1 - u * u)
        pts = np.concatenate(
            [
                np.repeat(u, pts.shape[0])[:, None],
                (s[:, None, None] * pts[None, :, :]).reshape(-1, pts.shape[1]),
            ],
            axis=1,
        )
        wts = ((w / w.sum())[:, None] * wts[None, :]).ravel()
    return measure.center + measure.radius * pts, wts


# ---------------------------------------------------------------------------
# Fourier transform
# ---------------------------------------------------------------------------

def fourier(measure, xi, tol=FOURIER_TOL):
    """Fourier transform of the measure at frequency ``xi``.

    ``xi`` may be a single point ``(d,)`` or a batch ``(m, d)``.  Exact
    closed forms are used where available (point masses, uniform boxes,
    spheres in R^3, convolution powers via exponentiation); other variants
    use adaptive quadrature with resolution doubling toward ``tol``, warning
    if the node cap is hit first.
    """
    xi_arr = np.atleast_2d(np.asarray(xi, dtype=float))
    d = measure_dim(measure)
    if xi_arr.shape[1] != d:
        raise ConfigurationError(f"frequency has dim {xi_arr.shape[1]}, measure {d}")
    out = np.ones(xi_arr.shape[0], dtype=complex)
    nonzero = np.any(xi_arr != 0, axis=1)
    if np.any(nonzero):
        vals = _fourier_nonzero(measure, xi_arr[nonzero], tol)
        mags = np.abs(vals)
        vals = np.where(mags > 1.0, vals / np.maximum(mags, 1.0), vals)
        out[nonzero] = vals
    return out[0] if np.ndim(xi) == 1 else out


def _fourier_nonzero(measure, xi, tol):
    if isinstance(measure, ConvPower):
        return _fourier_nonzero(measure.base, xi, tol) ** measure.n
    if isinstance(measure, AcDensity):
        if measure.is_point:
            return np.exp(2j * np.pi * xi @ measure.support_box[:, 0])
        if measure.char_function is not None:
            return np.asarray(measure.char_function(xi), dtype=complex)
        return _fourier_ac_quadrature(measure, xi, tol)
    if isinstance(measure, SphereMeasure) and measure.ambient_dim == 3:
        r = np.sqrt(np.sum(xi * xi, axis=1))
        phase = np.exp(2j * np.pi * xi @ measure.center)
        arg = TWO_PI * measure.radius * r
        return phase * np.sin(arg) / arg
    if isinstance(measure, SphereMeasure):
        return _fourier_by_nodes(measure, xi, tol, start=16)
    if isinstance(measure, CurveMeasure):
        return _fourier_curve(measure, xi, tol)
    raise UnsupportedMeasureError(f"cannot transform {measure!r}")


def _phase_sum(pts, wts, xi):
    return np.exp(2j * np.pi * xi @ pts.T) @ wts


def _fourier_by_nodes(measure, xi, tol, start):
    resolution = start
    prev = None
    while True:
        pts, wts = quadrature_nodes(measure, resolution)
        val = _phase_sum(pts, wts, xi)
        if prev is not None and np.max(np.abs(val - prev)) <= tol:
            return val
        if pts.shape[0] * 2 ** measure_dim(measure) > NODE_CAP:
            warnings.warn(
                f"Fourier quadrature for {measure!r} hit the node cap "
                f"before reaching tolerance {tol:g}",
                QuadratureCapWarning,
            )
            return val
        prev = val
        resolution *= 2


def _fourier_ac_quadrature(measure, xi, tol):
    widths = measure.support_box[:, 1] - measure.support_box[:, 0]
    cycles = np.max(np.abs(xi), axis=0) * widths
    res = max(8, int(np.ceil(3 * np.max(cycles))) + 8)
    prev = None
    while True:
        pts, wts = quadrature_nodes(measure, res)
        val = _phase_sum(pts, wts, xi)
        if prev is not None and np.max(np.abs(val - prev)) <= tol:
            return val
        if pts.shape[0] * 2**measure.dim > NODE_CAP:
            warnings.warn(
                "Fourier quadrature over the density box hit the node cap "
                f"before reaching tolerance {tol:g}",
                QuadratureCapWarning,
            )
            return val
        prev = val
        res *= 2


def _fourier_curve(measure, xi, tol):
    a, b = measure.param_range
    grid = np.linspace(a, b, 65)
    speed = np.max(np.linalg.norm(measure.tangent_at(grid), axis=-1))
    xi_mag = np.max(np.sqrt(np.sum(xi * xi, axis=1)))
    panels = max(8, int(np.ceil(0.7 * xi_mag * speed * (b - a))))
    prev = None
    while True:
        r, w = _panel_gauss(a, b, panels)
        pts = np.asarray(measure.curve(r), dtype=float).reshape(r.size, measure.dim)
        wts = w * np.asarray(measure.weight(r), dtype=float)
        val = _phase_sum(pts, wts, xi)
        if prev is not None and np.max(np.abs(val - prev)) <= tol:
            return val
        if r.size * 2 > NODE_CAP:
            warnings.warn(
                f"Fourier quadrature along {measure.name} hit the node cap "
                f"before reaching tolerance {tol:g}",
                QuadratureCapWarning,
            )
            return val
        prev = val
        panels *= 2


# ---------------------------------------------------------------------------
# construction-time mass checks
# ---------------------------------------------------------------------------

def _converged_mass(masses_by_res, start):
    res, prev = start, None
    while True:
        val = masses_by_res(res)
        if prev is not None and abs(val - prev) <= 1e-12:
            return val, True
        if res * 2 > 2**14:
            return val, False
        prev = val
        res *= 2


def _validate_density_mass(measure):
    def mass_at(res):
        pts, w = _ac_nodes(measure, res)
        return float(w.sum())

    mass, converged = _converged_mass(mass_at, 16)
    if abs(mass - 1.0) > MASS_TOL:
        suffix = "" if converged else " (quadrature did not fully converge)"
        raise ConfigurationError(
            f"density mass is {mass!r}, expected 1 within {MASS_TOL:g}{suffix}"
        )
    if measure.density_bound is not None:
        pts, _ = _ac_nodes(measure, 32)
        peak = float(np.max(np.asarray(measure.density(pts), dtype=float)))
        if peak > measure.density_bound * (1 + 1e-9):
            raise ConfigurationError(
                f"density exceeds its stated bound ({peak!r} > "
                f"{measure.density_bound!r}); rejection sampling would be biased"
            )


def _validate_curve_mass(measure):
    a, b = measure.param_range

    def mass_at(res):
        r, w = _panel_gauss(a, b, res)
        return float((w * np.asarray(measure.weight(r), dtype=float)).sum())

    mass, converged = _converged_mass(mass_at, 8)
    if abs(mass - 1.0) > MASS_TOL:
        suffix = "" if converged else " (quadrature did not fully converge)"
        raise ConfigurationError(
            f"curve weight mass is {mass!r}, expected 1 within {MASS_TOL:g}{suffix}"
        )
