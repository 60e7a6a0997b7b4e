"""Named presets: flows with analytic ergodicity justification, standard
weight measures, observables, and complete experiment bundles.

Irrational flow presets use square roots of distinct primes, so their
frequency maps A^T k vanish only at k = 0 by rational independence; the
finite certificate then merely confirms what the construction guarantees.
"""

import numpy as np

from .errors import ConfigurationError
from .measures import ConvPower, SphereMeasure, interval_density, make_moment_curve, uniform_box
from .multiflow import TorusMultiflow, TrigObservable

SQRT2, SQRT3, SQRT5, SQRT7 = np.sqrt([2.0, 3.0, 5.0, 7.0])


def _flow(D, d, rows):
    return TorusMultiflow(D, d, np.asarray(rows, dtype=float))


FLOWS = {
    "identity-1d": lambda: _flow(1, 1, [[1.0]]),
    "identity-2d": lambda: _flow(2, 2, np.eye(2)),
    "identity-3d": lambda: _flow(3, 3, np.eye(3)),
    "irrational-line-2d": lambda: _flow(2, 1, [[1.0], [SQRT2]]),
    "rational-line-2d": lambda: _flow(2, 1, [[1.0], [1.0]]),
    "sqrt-primes-1d": lambda: _flow(1, 1, [[SQRT2]]),
    "sqrt-primes-2d": lambda: _flow(2, 2, np.diag([SQRT2, SQRT3])),
    "sqrt-primes-3d": lambda: _flow(3, 3, np.diag([SQRT2, SQRT3, SQRT5])),
    "sqrt-primes-full-2d": lambda: _flow(2, 2, [[SQRT2, SQRT3], [SQRT5, SQRT7]]),
}


def flow(name):
    try:
        return FLOWS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown flow preset {name!r}; known: {sorted(FLOWS)}"
        ) from None


MEASURES = {
    "interval-unit": lambda: interval_density(),
    "unit-box-2d": lambda: uniform_box([0.0, 0.0], [1.0, 1.0]),
    "unit-box-3d": lambda: uniform_box([0.0] * 3, [1.0] * 3),
    "moment-curve-2": lambda: make_moment_curve(2),
    "moment-curve-3": lambda: make_moment_curve(3),
    "moment-curve-4": lambda: make_moment_curve(4),
    "moment-curve-5": lambda: make_moment_curve(5),
    "unit-sphere-3d": lambda: SphereMeasure(3, np.zeros(3), 1.0),
    "unit-circle-2d": lambda: SphereMeasure(2, np.zeros(2), 1.0),
    "sphere-conv-2": lambda: ConvPower(SphereMeasure(3, np.zeros(3), 1.0), 2),
}


def measure(name, d=None):
    """Measure preset by name; ``moment-curve-conv-d`` takes the dimension d
    and forms the d-th convolution power of the d-dimensional moment curve."""
    if name == "moment-curve-conv-d":
        dim = 2 if d is None else int(d)
        return ConvPower(make_moment_curve(dim), dim)
    try:
        return MEASURES[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown measure preset {name!r}; known: "
            f"{sorted(MEASURES) + ['moment-curve-conv-d']}"
        ) from None


def _five_mode(dim):
    e1 = tuple([1] + [0] * (dim - 1))
    k2 = tuple(range(1, dim + 1))  # (1,), (1, 2), (1, 2, 3)
    zero = (0,) * dim
    c1 = 0.25 - 0.1j
    c2 = -0.15 + 0.2j
    modes = [zero, e1, tuple(-v for v in e1), k2, tuple(-v for v in k2)]
    coeffs = [0.5, c1, np.conj(c1), c2, np.conj(c2)]
    return TrigObservable(np.array(modes), np.array(coeffs), real_valued=True)


def _single_mode(dim):
    k = np.zeros((1, dim), dtype=int)
    k[0, 0] = 1
    return TrigObservable(k, np.array([1.0 + 0j]))


OBSERVABLES = {
    "single-mode-1d": lambda: _single_mode(1),
    "single-mode-2d": lambda: _single_mode(2),
    "single-mode-3d": lambda: _single_mode(3),
    "five-mode-1d": lambda: _five_mode(1),
    "five-mode-2d": lambda: _five_mode(2),
    "five-mode-3d": lambda: _five_mode(3),
    "offender-mode-2d": lambda: TrigObservable(
        np.array([[1, -1]]), np.array([0.5 + 0j])
    ),
}


def observable(name):
    try:
        return OBSERVABLES[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown observable preset {name!r}; known: {sorted(OBSERVABLES)}"
        ) from None


def _geometric(start, stop, count):
    return [float(v) for v in np.geomspace(start, stop, count)]


# Complete experiment bundles.  Each value is a config overlay: section ->
# {key: value}; explicit config keys override the preset.  ``notes`` records
# the analytic fact the run is expected to reproduce and is echoed into run
# summaries.
EXPERIMENTS = {
    "theorem1-interval": {
        "flow": {"preset": "sqrt-primes-1d"},
        "measure": {"preset": "interval-unit"},
        "observable": {"preset": "five-mode-1d"},
        "schedule": {"kind": "time", "geometric": "1 1000 13"},
        "notes": (
            "indicator density on [0,1]: each mode k decays like "
            "|sinc(t * omega_k)| with envelope 1/(pi t |omega_k|), so the "
            "terminal error sits far below 10% of the initial one"
        ),
    },
    "theorem1-moment-curve": {
        "flow": {"preset": "sqrt-primes-2d"},
        "measure": {"preset": "moment-curve-2"},
        "observable": {"preset": "five-mode-2d"},
        "schedule": {"kind": "time", "geometric": "1 100 9"},
        "notes": (
            "uniform parameter measure on (r, r^2): oscillatory transform "
            "decays by (non-)stationary phase; measured, not asserted"
        ),
    },
    "theorem5-spheres": {
        "flow": {"preset": "identity-3d"},
        "measure": {"preset": "unit-sphere-3d"},
        "observable": {"preset": "single-mode-3d"},
        "schedule": {
            "kind": "radius",
            "values": " ".join(str(j + 0.25) for j in range(1, 101)),
        },
        "notes": (
            "unit frequency mode against expanding spheres: error is "
            "|sin(2 pi R)/(2 pi R)|; quarter-offset radii sit on the sine "
            "peaks so the 1/(2 pi R) envelope is read off directly "
            "(integer radii would land on the zeros)"
        ),
    },
    "nonergodic-control": {
        "flow": {"preset": "rational-line-2d"},
        "measure": {"preset": "interval-unit"},
        "observable": {"preset": "offender-mode-2d"},
        "schedule": {"kind": "time", "geometric": "1 100 7"},
        "run": {"waive_ergodicity": "true"},
        "notes": (
            "A^T k = 0 for the offending mode, so its multiplier is "
            "identically 1 and the error |c_k| never decays; convergence "
            "genuinely requires the certificate to pass"
        ),
    },
    "moment-curve-d4": {
        "measure": {"preset": "moment-curve-4"},
        "general_position": {"trials": "1000", "threshold": "1e-12"},
        "notes": (
            "tangent determinants on the moment curve factor as "
            "d! * prod(r_j - r_i), nonzero for distinct parameters"
        ),
    },
    "moment-curve-conv-d": {
        "measure": {"preset": "moment-curve-conv-d", "d": "2"},
        "diagnostic": {"sample_count": "1000000", "cells_per_axis": "40"},
        "notes": (
            "d-fold self-convolution of the moment curve has a density; "
            "histogram mass must shrink under refinement with no atoms"
        ),
    },
    "sphere-conv-2": {
        "measure": {"preset": "sphere-conv-2"},
        "diagnostic": {"sample_count": "1000000", "cells_per_axis": "16"},
        "notes": (
            "the self-convolution of the unit-sphere measure has the radial "
            "density 1/(8 pi |x|) on |x| < 2: integrable singularity, no atoms"
        ),
    },
}


def experiment(name):
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown experiment preset {name!r}; known: {sorted(EXPERIMENTS)}"
        ) from None
