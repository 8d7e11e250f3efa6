"""Noise covariance model, circular complex Gaussian sampling and dataset synthesis."""

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

from .exceptions import DegenerateSignalError, InvalidParameterError
from .hydraulics import steering_vector

__all__ = [
    "CovarianceSpec",
    "Dataset",
    "build_covariance",
    "sample_circular_gaussian",
    "db_to_linear",
    "snr_to_noise_power",
    "generate_dataset",
    "trial_seed",
]


@dataclass(frozen=True)
class CovarianceSpec:
    """Exponentially correlated noise: ``C[i, j] = nu2 * r**|i - j|``."""

    nu2: float
    n: int
    r: float = 0.9

    def __post_init__(self):
        if not self.nu2 > 0:
            raise InvalidParameterError(f"noise power must be positive, got {self.nu2}")
        if not 0 <= self.r < 1:
            raise InvalidParameterError(f"correlation base must lie in [0, 1), got {self.r}")
        if self.n < 1:
            raise InvalidParameterError(f"dimension must be >= 1, got {self.n}")

    def with_nu2(self, nu2):
        return CovarianceSpec(nu2=nu2, n=self.n, r=self.r)


def build_covariance(spec):
    return spec.nu2 * toeplitz(spec.r ** np.arange(spec.n, dtype=float))


@lru_cache(maxsize=64)
def _cholesky(nu2, r, n):
    L = np.linalg.cholesky(build_covariance(CovarianceSpec(nu2=nu2, n=n, r=r)))
    L.setflags(write=False)
    return L


def sample_circular_gaussian(C, count, rng):
    """Draw ``count`` rows from CN(0, C).

    Real and imaginary parts of the white source each have variance 1/2,
    so ``E[x x^H] = C`` and ``E[x x^T] = 0``.

    Parameters
    ----------
    C : ndarray (N, N) or CovarianceSpec
        Hermitian positive definite covariance.
    count : int
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of shape (count, N)
    """
    if isinstance(C, CovarianceSpec):
        L = _cholesky(C.nu2, C.r, C.n)
    else:
        L = np.linalg.cholesky(np.asarray(C))
    n = L.shape[0]
    u = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    u *= np.sqrt(0.5)
    return u @ L.T


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def snr_to_noise_power(s, g, snr_linear):
    """Noise power ``nu2`` giving ``||s g||^2 / nu2 = snr_linear``."""
    if not snr_linear > 0:
        raise InvalidParameterError("SNR must be positive")
    energy = float(np.vdot(g, g).real) * s**2
    if not energy > 0:
        raise DegenerateSignalError("leak signature has zero energy")
    return energy / snr_linear


def trial_seed(master, tag, *indices):
    """Counter-based seed for one (phase, trial) cell.

    The stream depends only on ``master``, the phase ``tag`` and the integer
    ``indices``, never on scheduling order, so parallel runs reproduce
    serial ones exactly.
    """
    return np.random.SeedSequence(
        entropy=int(master), spawn_key=(zlib.crc32(tag.encode()), *map(int, indices))
    )


@dataclass
class Dataset:
    """Primary, optional auxiliary, and secondary snapshots for one test.

    ``secondary`` has shape ``(K, N)``: one leak-free snapshot per row.
    """

    z0: np.ndarray
    secondary: np.ndarray
    covariance: CovarianceSpec
    hypothesis: int
    leak: tuple | None = None
    y0: np.ndarray | None = None

    @property
    def n_features(self):
        return self.z0.shape[0]

    @property
    def n_secondary(self):
        return self.secondary.shape[0]


def generate_dataset(hypothesis, leak, grid, cov, K, with_y0=False, seed=None,
                     q_up=None, signal=None):
    """Simulate one detection problem.

    The primary snapshot, secondary block and auxiliary snapshot draw from
    three disjoint children of ``seed``; ``y0`` never shares a stream with
    ``z0`` or the secondary data.

    Parameters
    ----------
    hypothesis : {0, 1}
    leak : (s, phi) or None
        Required under H1, ignored otherwise.
    signal : ndarray, optional
        Precomputed ``s * g(phi)``; skips the hydraulic evaluation.
    """
    if hypothesis not in (0, 1):
        raise InvalidParameterError(f"hypothesis must be 0 or 1, got {hypothesis}")
    if hypothesis == 1 and leak is None:
        raise InvalidParameterError("H1 requires leak parameters (s, phi)")
    if K < 1:
        raise InvalidParameterError("need at least one secondary snapshot")
    if cov.n != grid.n_features:
        raise InvalidParameterError("covariance dimension does not match the grid")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    primary, secondary, auxiliary = (
        np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)))
        for i in range(3)
    )

    p = 0.0
    if hypothesis == 1:
        if signal is None:
            s, phi = leak
            signal = s * steering_vector(phi, grid, q_up)
        p = signal

    z0 = sample_circular_gaussian(cov, 1, primary)[0] + p
    Z = sample_circular_gaussian(cov, K, secondary)
    y0 = sample_circular_gaussian(cov, 1, auxiliary)[0] + p if with_y0 else None
    return Dataset(z0=z0, secondary=Z, covariance=cov, hypothesis=hypothesis,
                   leak=tuple(leak) if hypothesis == 1 else None, y0=y0)
