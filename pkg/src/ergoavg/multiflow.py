"""Translation actions of R^d on the D-torus and trigonometric observables.

The action is T_s x = x + A s (mod 1) for a D x d matrix A.  It is ergodic
exactly when A^T k is nonzero for every nonzero integer frequency k; the
certificate below verifies this over a finite frequency box, which is
necessary-but-finite evidence rather than a proof.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import BudgetError, ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusMultiflow:
    """Action x -> x + A s (mod 1) of R^time_dim on the torus T^torus_dim."""

    torus_dim: int
    time_dim: int
    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.shape != (self.torus_dim, self.time_dim):
            raise ConfigurationError(
                f"matrix must be ({self.torus_dim}, {self.time_dim}), got {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("matrix entries must be finite")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "matrix", a)


def act(flow, s, x):
    """Apply T_s to torus points.  Broadcasts over leading axes of s and x."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    # small-dimension contraction kept in elementwise ops so results do not
    # depend on BLAS threading
    disp = np.sum(flow.matrix * s[..., None, :], axis=-1)
    return np.mod(x + disp, 1.0)


@dataclass(frozen=True)
class ErgodicityCertificate:
    """Result of scanning frequencies 0 < ||k||_inf <= K for A^T k = 0."""

    search_radius: int
    min_frequency_norm: float
    offending_k: tuple | None
    threshold: float

    @property
    def passed(self):
        return self.offending_k is None

    def describe(self):
        status = "PASS" if self.passed else f"FAIL at k={self.offending_k}"
        return (
            f"ergodicity certificate ({status}): min |A^T k| = "
            f"{self.min_frequency_norm:.6g} over 0 < ||k||_inf <= "
            f"{self.search_radius} (finite evidence, not a proof)"
        )


_CERT_CACHE: dict = {}


def _frequency_box(D, K):
    axes = [np.arange(-K, K + 1)] * D
    grid = np.meshgrid(*axes, indexing="ij")
    ks = np.stack([g.ravel() for g in grid], axis=1)
    nz = np.any(ks != 0, axis=1)
    ks = ks[nz]
    # keep one representative of each +-k pair: first nonzero entry positive
    first = np.argmax(ks != 0, axis=1)
    return ks[ks[np.arange(len(ks)), first] > 0]


def ergodicity_certificate(flow, K, threshold=1e-12, budget=4_000_000):
    """Scan all frequencies with sup-norm up to K for rational dependences.

    Reports the minimum of |A^T k| and, if any value falls below the
    threshold, the first offending k in (shell, lexicographic) order.
    A scan larger than ``budget`` lattice points raises
    :class:`~ergoavg.errors.BudgetError` carrying the largest affordable
    partial certificate.
    """
    if K < 1:
        raise ConfigurationError("certificate radius K must be >= 1")
    D = flow.torus_dim
    key = (flow.matrix.tobytes(), flow.matrix.shape, K, threshold)
    if key in _CERT_CACHE:
        return _CERT_CACHE[key]
    if (2 * K + 1) ** D > budget:
        feasible = max(1, int((budget ** (1.0 / D) - 1) // 2))
        partial = None
        if (2 * feasible + 1) ** D <= budget:
            partial = ergodicity_certificate(flow, feasible, threshold, budget)
        raise BudgetError(
            f"certificate scan at K={K} needs {(2 * K + 1) ** D} lattice points, "
            f"over budget {budget}; partial result computed at K={feasible}",
            partial=partial,
        )
    ks = _frequency_box(D, K)
    freq = np.sum(flow.matrix[None, :, :] * ks[:, :, None].astype(float), axis=1)
    norms = np.sqrt(np.sum(freq * freq, axis=1))
    min_norm = float(norms.min())
    offender = None
    below = norms < threshold
    if np.any(below):
        cand = ks[below]
        order = np.lexsort(tuple(cand[:, j] for j in range(D - 1, -1, -1)) + (np.max(np.abs(cand), axis=1),))
        offender = tuple(int(v) for v in cand[order[0]])
    cert = ErgodicityCertificate(K, min_norm, offender, threshold)
    _CERT_CACHE[key] = cert
    return cert


@dataclass(frozen=True)
class TrigObservable:
    """Trigonometric polynomial f(x) = sum_k c_k exp(2 pi i k . x) on the torus."""

    modes: np.ndarray
    coeffs: np.ndarray
    real_valued: bool = False

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes, dtype=np.int64))
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if modes.shape[0] != coeffs.shape[0]:
            raise ConfigurationError("one coefficient per frequency vector required")
        keys = [tuple(int(v) for v in row) for row in modes]
        if len(set(keys)) != len(keys):
            raise ConfigurationError("frequency vectors must be distinct")
        if not np.all(np.isfinite(coeffs)):
            raise ConfigurationError("coefficients must be finite")
        if self.real_valued:
            table = dict(zip(keys, coeffs))
            for k, c in table.items():
                neg = tuple(-v for v in k)
                if neg not in table or table[neg] != np.conj(c):
                    raise ConfigurationError(
                        "real-valued observables need c(-k) == conj(c(k)) exactly"
                    )
        modes = modes.copy()
        modes.flags.writeable = False
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def torus_dim(self):
        return self.modes.shape[1]


def evaluate(obs, x):
    """Evaluate the observable at torus points (real output when real_valued)."""
    x = np.asarray(x, dtype=float)
    phase = np.sum(obs.modes * x[..., None, :], axis=-1)
    vals = np.sum(obs.coeffs * np.exp(2j * np.pi * phase), axis=-1)
    return np.real(vals) if obs.real_valued else vals


def mean(obs):
    """Haar-measure space average: the zero-frequency coefficient."""
    zero = np.all(obs.modes == 0, axis=1)
    if np.any(zero):
        return complex(obs.coeffs[np.argmax(zero)])
    return 0j
