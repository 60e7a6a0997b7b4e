"""Weighted averaging of observables along a torus multiflow.

The operator studied here sends f to  x -> integral of f(T_{t r} x) d nu(r).
On a trigonometric mode k it acts by multiplication with F_nu(t A^T k),
where F_nu is the measure's Fourier transform; that multiplier identity is
the exact oracle against which Monte-Carlo and quadrature paths, L1 errors,
and convergence sweeps are all checked.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ErgodicityRefusedError, UnsupportedMeasureError
from .measures import ConvPower, SphereMeasure, fourier, measure_dim, quadrature_nodes, sample
from .multiflow import TrigObservable, act, ergodicity_certificate, evaluate, mean
from .rng import uniform_block

DEFAULT_TORUS_GRID = 2**14
DEFAULT_CERT_RADIUS = 50

_TAG_L1_MC = 201
_TAG_ITER_X = 202


@dataclass(frozen=True)
class MonteCarlo:
    """Monte-Carlo averaging mode: ``count`` draws from the weight measure."""

    count: int
    seed: int


@dataclass(frozen=True)
class Quadrature:
    """Deterministic averaging mode over the measure's quadrature nodes."""

    resolution: int


@dataclass(frozen=True)
class PointAverage:
    value: complex
    stderr: float | None
    samples: int


def _check_dims(flow, obs, measure):
    if obs.torus_dim != flow.torus_dim:
        raise ConfigurationError(
            f"observable lives on T^{obs.torus_dim}, flow on T^{flow.torus_dim}"
        )
    d = measure_dim(measure)
    if d != flow.time_dim:
        raise ConfigurationError(
            f"weight measure has dimension {d}, flow time dimension {flow.time_dim}"
        )


def _require_ergodic(flow, waive, radius=DEFAULT_CERT_RADIUS):
    cert = ergodicity_certificate(flow, radius)
    if not cert.passed and not waive:
        raise ErgodicityRefusedError(cert)
    return cert


def _frequencies(flow, obs):
    # A^T k per mode, via elementwise contraction (thread-count independent)
    return np.sum(
        flow.matrix[None, :, :] * obs.modes[:, :, None].astype(float), axis=1
    )


def multiplier_oracle(flow, obs, measure, t, tol=1e-8):
    """Exact action of the averaging operator on a trigonometric polynomial.

    Returns the observable whose coefficient at mode k is
    c_k * F_nu(t A^T k); the zero mode is untouched since F_nu(0) = 1.
    """
    _check_dims(flow, obs, measure)
    if t <= 0:
        raise ConfigurationError("averaging time t must be positive")
    xi = float(t) * _frequencies(flow, obs)
    mults = np.atleast_1d(fourier(measure, xi, tol=tol))
    return TrigObservable(obs.modes, obs.coeffs * mults, real_valued=obs.real_valued)


def average_pointwise(flow, obs, measure, t, x, mode, waive_ergodicity=False):
    """Average f along the flow from x, weighted by the scaled measure.

    Monte-Carlo mode reports a standard error; quadrature mode is
    deterministic and rejects convolution powers (no node representation).
    """
    _check_dims(flow, obs, measure)
    _require_ergodic(flow, waive_ergodicity)
    if t <= 0:
        raise ConfigurationError("averaging time t must be positive")
    x = np.asarray(x, dtype=float)
    if isinstance(mode, Quadrature):
        if isinstance(measure, ConvPower) and measure.n > 1:
            raise UnsupportedMeasureError(
                "quadrature averaging is undefined for convolution powers; "
                "use Monte-Carlo mode or the multiplier oracle"
            )
        pts, wts = quadrature_nodes(measure, mode.resolution)
        vals = evaluate(obs, act(flow, t * pts, x))
        return PointAverage(complex(np.sum(wts * vals)), None, len(wts))
    if isinstance(mode, MonteCarlo):
        draws = sample(measure, mode.seed, mode.count)
        vals = np.asarray(evaluate(obs, act(flow, t * draws, x)), dtype=complex)
        value = complex(vals.mean())
        if mode.count > 1:
            se = float(
                np.sqrt(
                    (np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1))
                    / mode.count
                )
            )
        else:
            se = float("inf")
        return PointAverage(value, se, mode.count)
    raise ConfigurationError(f"unknown averaging mode {mode!r}")


# ---------------------------------------------------------------------------
# torus integration
# ---------------------------------------------------------------------------

def _largest_prime_below(n):
    for cand in range(n, 2, -1):
        if all(cand % p for p in range(2, int(cand**0.5) + 1)):
            return cand
    return 2


def rank1_lattice(dim, budget=DEFAULT_TORUS_GRID):
    """Fixed-generator rank-1 lattice on the torus (Fibonacci in 2D, Korobov
    above).  Deterministic in (dim, budget)."""
    if budget < 16:
        raise ConfigurationError("torus grid budget must be >= 16")
    if dim == 1:
        return (np.arange(budget)[:, None] / budget) % 1.0
    if dim == 2:
        a, b = 1, 1
        while b <= budget:
            a, b = b, a + b
        n, z = a, (1, b - a)  # consecutive Fibonacci pair (F_m, F_{m-1})
    else:
        n = _largest_prime_below(budget)
        gen = 17797 % n
        z = tuple(pow(gen, j, n) for j in range(dim))
    j = np.arange(n)[:, None]
    return (j * np.asarray(z)[None, :] % n) / n


@dataclass(frozen=True)
class L1Result:
    """Deviation of the averaged observable from the space mean, in L1."""

    exact: float
    mc: float
    mc_stderr: float
    oracle_bound: float
    method: str
    lattice_points: int
    mc_points: int


def _deviation_observable(flow, obs, measure, t, tol):
    averaged = multiplier_oracle(flow, obs, measure, t, tol=tol)
    nonzero = np.any(averaged.modes != 0, axis=1)
    modes = averaged.modes[nonzero]
    coeffs = averaged.coeffs[nonzero]
    return modes, coeffs, averaged


def l1_error(
    flow,
    obs,
    measure,
    t,
    torus_grid=DEFAULT_TORUS_GRID,
    mc_samples=10_000,
    seed=0,
    tol=1e-8,
    waive_ergodicity=False,
    entry_index=0,
):
    """L1 norm of (averaged observable - space mean) over the torus.

    The deterministic value is exact for a single surviving mode (the
    deviation then has constant modulus) and otherwise uses the fixed
    rank-1 lattice; an independent Monte-Carlo estimate with standard error
    is always attached.
    """
    _check_dims(flow, obs, measure)
    _require_ergodic(flow, waive_ergodicity)
    modes, coeffs, _ = _deviation_observable(flow, obs, measure, t, tol)
    bound = float(np.sum(np.abs(coeffs)))
    D = flow.torus_dim
    if len(coeffs) == 0:
        return L1Result(0.0, 0.0, 0.0, 0.0, "constant", 0, 0)
    dev = TrigObservable(modes, coeffs, real_valued=obs.real_valued)
    if len(coeffs) == 1:
        exact = float(np.abs(coeffs[0]))
        method = "single-mode-closed-form"
        lattice_n = 0
    else:
        lattice = rank1_lattice(D, torus_grid)
        exact = float(np.mean(np.abs(evaluate(dev, lattice))))
        method = "rank1-lattice"
        lattice_n = lattice.shape[0]
    pts = uniform_block(seed, (_TAG_L1_MC, entry_index), mc_samples, D)
    vals = np.abs(evaluate(dev, pts))
    mc = float(vals.mean())
    mc_se = float(vals.std(ddof=1) / np.sqrt(mc_samples))
    return L1Result(exact, mc, mc_se, bound, method, lattice_n, mc_samples)


# ---------------------------------------------------------------------------
# convergence sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepEntry:
    parameter: float
    result: L1Result
    seed: int
    entry_index: int


@dataclass(frozen=True)
class SweepSummary:
    first_error: float
    last_error: float
    decay_ratio: float
    envelope: tuple
    envelope_slope: float | None
    nonergodic: bool
    certificate: object


@dataclass(frozen=True)
class AveragingReport:
    schedule: np.ndarray
    scaling: str
    entries: tuple
    summary: SweepSummary


def _dyadic_envelope(params, errors):
    params = np.asarray(params, dtype=float)
    errors = np.asarray(errors, dtype=float)
    lo = int(np.floor(np.log2(params.min())))
    hi = int(np.floor(np.log2(params.max())))
    windows = []
    for j in range(lo, hi + 1):
        in_win = (params >= 2.0**j) & (params < 2.0 ** (j + 1))
        if np.any(in_win):
            windows.append((2.0 ** (j + 0.5), float(errors[in_win].max())))
    return tuple(windows)


def _envelope_slope(envelope):
    pts = [(c, e) for c, e in envelope if e > 0]
    if len(pts) < 2:
        return None
    logs = np.log(np.asarray(pts))
    return float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])


def convergence_sweep(
    flow,
    obs,
    measure,
    schedule,
    scaling="time",
    torus_grid=DEFAULT_TORUS_GRID,
    mc_samples=10_000,
    seed=0,
    tol=1e-8,
    waive_ergodicity=False,
    threads=1,
):
    """L1 errors across a schedule of times or sphere radii.

    ``scaling="time"`` scales the weight measure through T_{t r};
    ``scaling="radius"`` keeps t = 1 and rescales a sphere measure through
    its radius (the expanding-sphere formulation).  The two agree for
    origin-centered spheres.  A failing ergodicity certificate refuses the
    sweep unless waived, in which case the report is labeled non-ergodic.
    """
    schedule = np.asarray(schedule, dtype=float)
    if schedule.size < 3 or np.any(np.diff(schedule) <= 0):
        raise ConfigurationError("schedule must be strictly increasing, length >= 3")
    if scaling not in ("time", "radius"):
        raise ConfigurationError("scaling must be 'time' or 'radius'")
    if scaling == "radius" and not isinstance(measure, SphereMeasure):
        raise ConfigurationError("radius scaling requires a sphere measure")
    _check_dims(flow, obs, measure)
    cert = _require_ergodic(flow, waive_ergodicity)

    def run_entry(idx):
        p = float(schedule[idx])
        if scaling == "radius":
            entry_measure, t = replace(measure, radius=p), 1.0
        else:
            entry_measure, t = measure, p
        res = l1_error(
            flow,
            obs,
            entry_measure,
            t,
            torus_grid=torus_grid,
            mc_samples=mc_samples,
            seed=seed,
            tol=tol,
            waive_ergodicity=True,  # refusal already decided above
            entry_index=idx,
        )
        return SweepEntry(p, res, seed, idx)

    indices = range(schedule.size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = tuple(pool.map(run_entry, indices))
    else:
        entries = tuple(run_entry(i) for i in indices)

    errors = [e.result.exact for e in entries]
    envelope = _dyadic_envelope(schedule, errors)
    first, last = errors[0], errors[-1]
    summary = SweepSummary(
        first_error=first,
        last_error=last,
        decay_ratio=last / first if first > 0 else float("nan"),
        envelope=envelope,
        envelope_slope=_envelope_slope(envelope),
        nonergodic=not cert.passed,
        certificate=cert,
    )
    return AveragingReport(schedule, scaling, entries, summary)


# ---------------------------------------------------------------------------
# iterated averaging vs convolution powers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterateCheck:
    analytic_deviation: float
    mc_deviation: float | None
    mc_stderr: float | None
    mc_count: int


def iterated_vs_convolution(
    flow,
    obs,
    measure,
    t,
    n,
    mc_count=0,
    seed=0,
    tol=1e-8,
    waive_ergodicity=False,
):
    """Compare n applications of the operator with one convolution-power pass.

    Both paths multiply mode k by F_nu(t A^T k)^n, so the analytic deviation
    is floating-point noise.  With ``mc_count > 0`` an independent
    Monte-Carlo average under the convolution-power weight is checked
    against the analytic value at a few torus points.
    """
    if n < 1:
        raise ConfigurationError("power n must be >= 1")
    _check_dims(flow, obs, measure)
    _require_ergodic(flow, waive_ergodicity)
    iterated = obs
    for _ in range(n):
        iterated = multiplier_oracle(flow, iterated, measure, t, tol=tol)
    convolved = multiplier_oracle(flow, obs, ConvPower(measure, n), t, tol=tol)
    dev = float(np.max(np.abs(iterated.coeffs - convolved.coeffs)))
    if mc_count <= 0:
        return IterateCheck(dev, None, None, 0)
    xs = uniform_block(seed, (_TAG_ITER_X,), 3, flow.torus_dim)
    worst, worst_se = 0.0, 0.0
    for j, x in enumerate(xs):
        pa = average_pointwise(
            flow,
            obs,
            ConvPower(measure, n),
            t,
            x,
            MonteCarlo(mc_count, _derive_seed(seed, j)),
            waive_ergodicity=True,
        )
        delta = abs(pa.value - complex(np.asarray(evaluate(convolved, x), dtype=complex)))
        if delta > worst:
            worst, worst_se = float(delta), float(pa.stderr)
    return IterateCheck(dev, worst, worst_se, mc_count)


def _derive_seed(seed, *tags):
    ss = np.random.SeedSequence(seed, spawn_key=tuple(tags))
    return int(ss.generate_state(1, np.uint64)[0])
