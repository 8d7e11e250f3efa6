"""Regularized-SCM leak detector with shrinkage tuned by large-dimensional asymptotics.

The shrinkage estimate is ``C(rho) = (1 - rho) N / tr(R) R + rho I`` with
``R`` the sample covariance of the secondary data. Everything that depends
on ``C(rho)`` is evaluated through one eigendecomposition of ``R``, whose
eigenvectors ``C(rho)`` shares for every ``rho``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_array, check_complex_vector, check_probability
from .detectors import DetectionReport, _need_full_rank
from .exceptions import ConvergenceError, DegenerateSignalError, InvalidParameterError, \
    RankDeficiencyError
from .special import q1_inv

__all__ = [
    "RscmEstimate",
    "RegularizedSCM",
    "AsymptoticQuantities",
    "rscm",
    "regularization_grid",
    "effective_shrinkage",
    "fixed_point_m",
    "asymptotic_quantities",
    "RscmSpectrum",
    "sigma2_hat",
    "theta_hat",
    "select_rho",
    "phi_hat_rscm",
    "LDRSCMDetector",
]


@dataclass
class RscmEstimate:
    rho: float
    covariance: np.ndarray
    source: np.ndarray


def rscm(R, rho):
    """Trace-normalised shrinkage of ``R`` towards the identity."""
    R = np.asarray(R)
    rho = float(rho)
    if not 0 <= rho <= 1:
        raise InvalidParameterError(f"rho must lie in [0, 1], got {rho}")
    tr = np.trace(R).real
    if not tr > 0:
        raise DegenerateSignalError("sample covariance has zero trace")
    N = R.shape[0]
    C = (1.0 - rho) * (N / tr) * R + rho * np.eye(N)
    if rho == 0 and np.linalg.matrix_rank(R) < N:
        raise RankDeficiencyError("rho = 0 with a rank-deficient sample covariance")
    return RscmEstimate(rho=rho, covariance=C, source=R)


class RegularizedSCM(BaseEstimator):
    """Covariance estimator in the scikit-learn mould (``covariance_``, ``precision_``).

    Parameters
    ----------
    rho : float, default=0.5
        Shrinkage weight on the identity, in (0, 1].
    """

    def __init__(self, rho=0.5):
        self.rho = rho

    def fit(self, X, y=None):
        X = check_complex_array(X)
        self.sample_covariance_ = X.T @ X.conj() / X.shape[0]
        est = rscm(self.sample_covariance_, self.rho)
        self.covariance_ = est.covariance
        self.precision_ = np.linalg.inv(est.covariance)
        self.n_features_in_ = X.shape[1]
        return self


def regularization_grid(kappa=0.05, step=0.01):
    """Shrinkage values on ``[kappa, 1]``, always including 1."""
    if not 0 < kappa < 1:
        raise InvalidParameterError("kappa must lie in (0, 1)")
    n = int(np.floor((1.0 - kappa) / step + 1e-9))
    grid = np.round(kappa + step * np.arange(n + 1), 12)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return grid


def effective_shrinkage(rho, trace_c, n):
    """``rho / (rho + (1 - rho) N / tr C)``."""
    return rho / (rho + (1.0 - rho) * n / trace_c)


def _eigs(C):
    ev = np.linalg.eigvalsh(C)
    if ev[0] <= 0:
        raise InvalidParameterError("covariance must be positive definite")
    return ev


def fixed_point_m(rho_bar, C, c, tol=1e-12, max_iter=10_000, damping=0.5):
    """Positive solution ``m`` at ``z = -rho_bar`` of

        m = 1 / (rho_bar + c (1 - rho_bar) tr[C (I + (1 - rho_bar) m C)^-1] / N)

    by damped fixed-point iteration from ``1 / rho_bar``. ``C`` may be a
    matrix or its eigenvalues.
    """
    if not 0 < rho_bar <= 1:
        raise InvalidParameterError("rho_bar must lie in (0, 1]")
    ev = np.asarray(C, dtype=float)
    ev = _eigs(ev) if ev.ndim == 2 else ev
    b = 1.0 - rho_bar

    def rhs(m):
        return 1.0 / (rho_bar + c * b * np.mean(ev / (1.0 + b * m * ev)))

    m = 1.0 / rho_bar
    for _ in range(max_iter):
        new = (1.0 - damping) * m + damping * rhs(m)
        if abs(new - m) < tol:
            return new
        m = new
    raise ConvergenceError(f"m fixed point did not converge in {max_iter} iterations")


@dataclass
class AsymptoticQuantities:
    """Deterministic equivalents for known covariance (validation path)."""

    rho: float
    rho_bar: float
    m: float
    resolvent: np.ndarray
    correction: float
    sigma2: float
    beta2: float
    theta: float
    c: float


def asymptotic_quantities(rho, g, C, c, s=1.0):
    """Limiting null scale ``sigma2`` and noncentrality ``beta2`` of ``L(rho, phi)``.

    ``g`` is the steering vector at the (fixed) location under test and
    ``C`` the true noise covariance. ``theta = beta2 / (2 s^2)`` does not
    depend on ``s``.
    """
    C = np.asarray(C)
    g = np.asarray(g, dtype=complex)
    N = C.shape[0]
    ev, V = np.linalg.eigh(C)
    rb = effective_shrinkage(rho, ev.sum(), N)
    m = fixed_point_m(rb, ev, c)
    q = 1.0 / (1.0 + (1.0 - rb) * m * ev)  # resolvent eigenvalues
    Q = (V * q) @ V.conj().T
    a = np.abs(V.conj().T @ g) ** 2
    gQg = np.dot(a, q)
    gCQ2g = np.dot(a, ev * q**2)
    correction = 1.0 - c * m**2 * (1.0 - rb) ** 2 * np.mean(ev**2 * q**2)
    sigma2 = gCQ2g / (2.0 * rho * gQg * correction)
    theta = gQg**2 * correction / gCQ2g
    return AsymptoticQuantities(rho=float(rho), rho_bar=float(rb), m=float(m), resolvent=Q,
                                correction=float(correction), sigma2=float(sigma2),
                                beta2=float(2.0 * s**2 * theta), theta=float(theta), c=float(c))


class RscmSpectrum:
    """Eigendecomposition of a sample covariance, reused across all ``rho``.

    Parameters
    ----------
    R : ndarray (N, N)
        Sample covariance ``(1/K) sum z_k z_k^H``.
    c : float
        Aspect ratio ``N / K``.
    """

    def __init__(self, R, c):
        self.R = np.asarray(R)
        self.c = float(c)
        self.n = self.R.shape[0]
        self.eigvals, self.eigvecs = np.linalg.eigh(self.R)
        self.trace = float(self.eigvals.sum())
        if not self.trace > 0:
            raise DegenerateSignalError("sample covariance has zero trace")
        self.eigvals = np.clip(self.eigvals, 0.0, None)

    def shrunk_eigvals(self, rho):
        rho = np.asarray(rho, dtype=float)[..., None]
        return (1.0 - rho) * (self.n / self.trace) * self.eigvals + rho

    def rotate(self, v):
        return self.eigvecs.conj().T @ v

    def _forms(self, rho, g_rot):
        d = self.shrunk_eigvals(rho)
        a = np.abs(g_rot) ** 2
        q1 = np.sum(a / d, axis=-1)
        q2 = np.sum(a / d**2, axis=-1)
        tr_inv = np.mean(1.0 / d, axis=-1)
        return q1, q2, tr_inv

    def sigma2(self, rho, g_rot):
        rho = np.asarray(rho, dtype=float)
        safe = np.where(rho < 1.0, rho, 0.5)
        q1, q2, tr_inv = self._forms(safe, g_rot)
        lead = 1.0 - self.c + self.c * safe * tr_inv
        val = self.trace / (2.0 * (1.0 - safe) * self.n) * (1.0 - safe * q2 / q1) / lead**2
        a = np.abs(g_rot) ** 2
        at_one = np.dot(a, self.eigvals) / (2.0 * a.sum())
        return np.where(rho < 1.0, val, at_one)

    def theta(self, rho, g_rot):
        rho = np.asarray(rho, dtype=float)
        safe = np.where(rho < 1.0, rho, 0.5)
        q1, q2, tr_inv = self._forms(safe, g_rot)
        lead = 1.0 - self.c + self.c * safe * tr_inv
        val = (1.0 - safe) * self.n / self.trace * lead**2 * q1**2 / (q1 - safe * q2)
        a = np.abs(g_rot) ** 2
        at_one = a.sum() ** 2 / np.dot(a, self.eigvals)
        return np.where(rho < 1.0, val, at_one)

    def statistic(self, rho, g_rot, z_rot):
        """``Re^2{g^H C(rho)^-1 z} / (g^H C(rho)^-1 g)`` and the matching size estimate."""
        d = self.shrunk_eigvals(rho)
        num = np.sum(g_rot.conj() * z_rot / d, axis=-1).real
        den = np.sum(np.abs(g_rot) ** 2 / d, axis=-1)
        return num**2 / den, num / den


def _spectrum(R, c):
    return R if isinstance(R, RscmSpectrum) else RscmSpectrum(R, c)


def sigma2_hat(rho, g, R, c):
    """Consistent estimate of the null scale of ``L(rho, phi)`` from secondary data only.

    At ``rho = 1`` the removable singularity is replaced by its limit
    ``g^H R g / (2 g^H g)``.
    """
    spec = _spectrum(R, c)
    return spec.sigma2(rho, spec.rotate(np.asarray(g, dtype=complex)))


def theta_hat(rho, g, R, c):
    """Consistent estimate of ``beta^2 / (2 s^2)``; at ``rho = 1`` uses ``(g^H g)^2 / g^H R g``."""
    spec = _spectrum(R, c)
    return spec.theta(rho, spec.rotate(np.asarray(g, dtype=complex)))


def select_rho(R, g, rho_grid, c):
    """Grid argmax of ``theta_hat``; ties resolve to the larger ``rho``."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    th = theta_hat(rho_grid, g, R, c)
    best = np.flatnonzero(th == th.max())
    return float(rho_grid[best[-1]])


def phi_hat_rscm(R, y0, family):
    """Location estimate from the auxiliary snapshot, weighted by ``R^-1``."""
    from .detectors import matched_peak

    return matched_peak(R, y0, family)[0]


class LDRSCMDetector(BaseEstimator):
    """Leak detector on the regularized SCM with data-driven shrinkage and threshold.

    For each primary snapshot: locate the leak on an auxiliary snapshot
    ``y0`` (weighted by the inverse SCM), pick the shrinkage maximising
    the estimated detection margin, and set the threshold from the
    estimated null scale so that the asymptotic false-alarm rate is
    ``pfa``.

    Parameters
    ----------
    family : SteeringFamily
    pfa : float, default=0.01
        Target false-alarm probability ``eta``.
    kappa : float, default=0.05
        Smallest shrinkage considered.
    rho_step : float, default=0.01
    location_source : {"auxiliary", "primary"}, default="auxiliary"
        ``"primary"`` locates the leak on ``z0`` itself. This breaks the
        independence the threshold relies on; kept for comparison only.
    """

    name = "ld_rscm"

    def __init__(self, family=None, pfa=0.01, kappa=0.05, rho_step=0.01,
                 location_source="auxiliary"):
        self.family = family
        self.pfa = pfa
        self.kappa = kappa
        self.rho_step = rho_step
        self.location_source = location_source

    def fit(self, X, y=None):
        X = check_complex_array(X, name="secondary data")
        K, N = X.shape
        _need_full_rank(K, N)
        if self.family is None:
            raise ValueError("LDRSCMDetector needs a steering family")
        if self.location_source not in ("auxiliary", "primary"):
            raise ValueError(f"unknown location_source {self.location_source!r}")
        check_probability(self.pfa)
        self.sample_covariance_ = X.T @ X.conj() / K
        self.spectrum_ = RscmSpectrum(self.sample_covariance_, N / K)
        lam = self.spectrum_.eigvals
        if lam[0] <= 0:
            raise RankDeficiencyError("sample covariance is singular")
        # whitened steering family for the location search, R^-1 = U diag(1/lam) U^H
        self._white_family = (self.spectrum_.rotate(self.family.vectors.T)
                              / np.sqrt(lam)[:, None])
        self._white_denom = np.sum(np.abs(self._white_family) ** 2, axis=0)
        self.rho_grid_ = regularization_grid(self.kappa, self.rho_step)
        self.q1_inv_ = q1_inv(self.pfa)
        self.n_features_in_ = N
        self.n_samples_ = K
        return self

    def _locate(self, v):
        wv = self.spectrum_.rotate(v) / np.sqrt(self.spectrum_.eigvals)
        numer = (self._white_family.conj().T @ wv).real
        ratios = np.divide(numer**2, self._white_denom, out=np.zeros_like(numer),
                           where=self._white_denom > 0)
        return int(np.argmax(ratios))

    def score(self, z0, y0=None):
        """Core of the procedure without the threshold comparison.

        Returns ``(statistic, sigma2_hat, rho_hat, phi_hat, s_hat)``; the
        asymptotic-level decision is ``statistic > sigma2_hat * q1_inv(pfa)``.
        """
        check_is_fitted(self, "spectrum_")
        z0 = check_complex_vector(z0, self.n_features_in_, name="z0")
        if self.location_source == "auxiliary":
            if y0 is None:
                raise ValueError("auxiliary snapshot y0 is required for location estimation")
            loc = check_complex_vector(y0, self.n_features_in_, name="y0")
        else:
            loc = z0
        i = self._locate(loc)
        spec = self.spectrum_
        g_rot = spec.rotate(self.family.vectors[i])
        th = spec.theta(self.rho_grid_, g_rot)
        rho = float(self.rho_grid_[np.flatnonzero(th == th.max())[-1]])
        sigma2 = float(spec.sigma2(rho, g_rot))
        stat, s_hat = spec.statistic(rho, g_rot, spec.rotate(z0))
        return float(stat), sigma2, rho, float(self.family.phis[i]), float(s_hat)

    def analyse(self, z0, y0=None):
        """Run the full procedure; returns a :class:`DetectionReport` with ``rho_hat`` set."""
        stat, sigma2, rho, phi, s_hat = self.score(z0, y0)
        threshold = sigma2 * self.q1_inv_
        report = DetectionReport(self.name, int(stat > threshold), stat, threshold,
                                 rho_hat=rho, sigma2_hat=sigma2)
        if report.decision:
            report.phi_hat = phi
            report.s_hat = s_hat
        return report

    detect = analyse

    def decision_function(self, Z0, Y0=None):
        """Statistic normalised by its estimated null scale, ``L / sigma2_hat``."""
        Z0 = check_complex_array(Z0, self.n_features_in_, name="primary data")
        Y0 = [None] * len(Z0) if Y0 is None else check_complex_array(Y0, self.n_features_in_)
        out = []
        for z, y in zip(Z0, Y0):
            r = self.analyse(z, y)
            out.append(r.statistic / r.sigma2_hat)
        return np.array(out).squeeze()

    def predict(self, Z0, Y0=None):
        return (np.atleast_1d(self.decision_function(Z0, Y0)) > self.q1_inv_).astype(int)
