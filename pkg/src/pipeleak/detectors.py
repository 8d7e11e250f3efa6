"""GLRT leak detectors built on the sample covariance of secondary data.

Three detectors share one scikit-learn style surface: ``fit`` consumes the
leak-free secondary snapshots (rows), ``decision_function`` returns the test
statistic for primary snapshots, ``predict`` thresholds it, and ``detect``
returns a full :class:`DetectionReport` including leak estimates.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._io import open_target
from ._parallel import run_trials
from ._validation import check_complex_array, check_complex_vector, check_hermitian_pd, \
    check_probability
from .exceptions import CalibrationError, DegenerateSignalError, RankDeficiencyError

__all__ = [
    "SteeringFamily",
    "DetectionReport",
    "ThresholdTable",
    "scm_sum",
    "scm_mean",
    "location_profile",
    "matched_peak",
    "ld_scm_statistic",
    "rd_scm_statistic",
    "ld_scm_calibrate",
    "rd_scm_calibrate",
    "oracle_statistic",
    "oracle_threshold",
    "OracleDetector",
    "RDSCMDetector",
    "LDSCMDetector",
]

MIN_TRIALS_PER_TAIL = 50


@dataclass(frozen=True, eq=False)
class SteeringFamily:
    """Candidate leak locations and their steering vectors (one row per location)."""

    phis: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        phis = np.asarray(self.phis, dtype=float)
        G = np.asarray(self.vectors, dtype=complex)
        if G.ndim != 2 or G.shape[0] != phis.size:
            raise ValueError("need one steering vector per candidate location")
        if np.any(np.diff(phis) <= 0):
            raise ValueError("candidate locations must be strictly increasing")
        if not np.any(np.abs(G) > 0):
            raise DegenerateSignalError("steering vectors vanish on the whole grid")
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "vectors", G)

    @classmethod
    def from_grid(cls, grid, step=1.0, guard=1.0, q_up=None):
        from .hydraulics import phi_grid, steering_matrix

        phis = phi_grid(grid.pipe, step=step, guard=guard)
        return cls(phis, steering_matrix(phis, grid, q_up))

    @property
    def n_features(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.phis.size


@dataclass
class DetectionReport:
    """Outcome of one test. Leak estimates are set only when H1 is decided."""

    detector: str
    decision: int
    statistic: float
    threshold: float
    s_hat: float | None = None
    phi_hat: float | None = None
    rho_hat: float | None = None
    sigma2_hat: float | None = None

    @property
    def leak_detected(self):
        return self.decision == 1


def scm_sum(X):
    """``S = sum_k z_k z_k^H`` over the rows of ``X``."""
    X = check_complex_array(X)
    return X.T @ X.conj()


def scm_mean(X):
    X = check_complex_array(X)
    return scm_sum(X) / X.shape[0]


def _chol(A, name="scatter matrix"):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"{name} is singular") from exc


def _need_full_rank(K, N):
    if K < N:
        raise RankDeficiencyError(f"need K >= N secondary snapshots to invert, got K={K}, N={N}")


def _whitened_profile(L, z, G):
    """Location profile given the Cholesky factor ``L`` of the weighting matrix.

    Returns ``(ratios, numer, denom, wz)`` where ``ratios[p]`` is
    ``Re^2{g_p^H A^-1 z} / (g_p^H A^-1 g_p)``.
    """
    wz = solve_triangular(L, z, lower=True, check_finite=False)
    WG = solve_triangular(L, G.T, lower=True, check_finite=False)
    numer = (WG.conj().T @ wz).real
    denom = np.einsum("np,np->p", WG.conj(), WG).real
    if not np.any(denom > 0):
        raise DegenerateSignalError("steering vectors vanish on the whole grid")
    ratios = np.divide(numer**2, denom, out=np.zeros_like(denom), where=denom > 0)
    return ratios, numer, denom, wz


def location_profile(A, z, G):
    """``Re^2{g^H A^-1 z} / (g^H A^-1 g)`` for every row ``g`` of ``G``."""
    return _whitened_profile(_chol(A), z, np.atleast_2d(G))[0]


def matched_peak(A, z, family):
    """Grid maximiser of the location profile; ties go to the smallest location.

    Returns
    -------
    phi_hat : float
    peak : float
    index : int
    """
    ratios = location_profile(A, z, family.vectors)
    i = int(np.argmax(ratios))
    return float(family.phis[i]), float(ratios[i]), i


def ld_scm_statistic(z0, S, g):
    """Leak-structured GLRT statistic; lies in ``[0, 1)``."""
    g = check_complex_vector(g, name="g")
    z0 = check_complex_vector(z0, g.size, name="z0")
    if not np.any(g):
        raise DegenerateSignalError("steering vector is zero")
    L = _chol(S)
    wz = solve_triangular(L, z0, lower=True)
    wg = solve_triangular(L, g, lower=True)
    num = np.vdot(wg, wz).real ** 2
    return float(num / ((1.0 + np.vdot(wz, wz).real) * np.vdot(wg, wg).real))


def rd_scm_statistic(z0, S):
    """Structure-agnostic radar GLRT statistic ``z0^H S^-1 z0``."""
    z0 = check_complex_vector(z0, name="z0")
    wz = solve_triangular(_chol(S), z0, lower=True)
    return float(np.vdot(wz, wz).real)


def _check_calibration(pfa, trials):
    check_probability(pfa)
    if trials < MIN_TRIALS_PER_TAIL / pfa:
        raise CalibrationError(
            f"{trials} trials cannot resolve P_FA={pfa}; need >= {MIN_TRIALS_PER_TAIL / pfa:.0f}"
        )


def _white(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def ld_scm_null_samples(N, K, trials, seed, family=None, n_jobs=1):
    """Null draws of the LD-SCM statistic under white noise.

    Without ``family`` the signature is fixed at ``e_1``. With ``family``
    the statistic includes the grid search over candidate locations, as
    it is actually computed at detection time.
    """
    _need_full_rank(K, N)
    G = None if family is None else family.vectors
    e1 = np.zeros((1, N), dtype=complex)
    e1[0, 0] = 1.0
    if G is not None and G.shape[1] != N:
        raise ValueError("steering family dimension does not match N")

    def one(rng, _):
        Z = _white(rng, (K, N))
        z0 = _white(rng, N)
        L = _chol(Z.T @ Z.conj())
        if G is None:
            ratios, _, _, wz = _whitened_profile(L, z0, e1)
            peak = ratios[0]
        else:
            ratios, _, _, wz = _whitened_profile(L, z0, G)
            peak = ratios.max()
        return peak / (1.0 + np.vdot(wz, wz).real)

    return np.array(run_trials(one, trials, seed, f"null-ld_scm-{N}-{K}", n_jobs))


def rd_scm_null_samples(N, K, trials, seed, n_jobs=1):
    _need_full_rank(K, N)

    def one(rng, _):
        Z = _white(rng, (K, N))
        z0 = _white(rng, N)
        wz = solve_triangular(_chol(Z.T @ Z.conj()), z0, lower=True, check_finite=False)
        return np.vdot(wz, wz).real

    return np.array(run_trials(one, trials, seed, f"null-rd_scm-{N}-{K}", n_jobs))


def _tail_quantile(samples, pfa):
    if pfa == 1.0:
        return 0.0
    return float(np.quantile(samples, 1.0 - pfa))


def ld_scm_calibrate(N, K, pfa, trials, seed=0, family=None, n_jobs=1):
    """CFAR threshold for the LD-SCM statistic at false-alarm rate ``pfa``."""
    _check_calibration(pfa, trials)
    if pfa == 1.0:
        return 0.0
    return _tail_quantile(ld_scm_null_samples(N, K, trials, seed, family, n_jobs), pfa)


def rd_scm_calibrate(N, K, pfa, trials, seed=0, n_jobs=1):
    _check_calibration(pfa, trials)
    if pfa == 1.0:
        return 0.0
    return _tail_quantile(rd_scm_null_samples(N, K, trials, seed, n_jobs), pfa)


def oracle_statistic(z0, s, g, C):
    """``Re{s g^H C^-1 z0}``, vectorised over rows of ``z0``."""
    w = s * cho_solve(cho_factor(C), g)
    return (np.atleast_2d(z0) @ w.conj()).real.squeeze()


def oracle_threshold(s, g, C, pfa):
    """Exact threshold from the Gaussian null law N(0, s^2 g^H C^-1 g / 2)."""
    pfa = check_probability(pfa)
    energy = s**2 * np.vdot(g, cho_solve(cho_factor(C), g)).real
    if pfa == 1.0:
        return -np.inf
    return float(np.sqrt(energy / 2.0) * norm.isf(pfa))


@dataclass
class ThresholdTable:
    """Calibrated thresholds keyed by ``(detector, N, K, pfa)``."""

    entries: dict = field(default_factory=dict)

    COLUMNS = ("detector", "N", "K", "pfa", "threshold", "trials", "seed")

    def add(self, detector, N, K, pfa, threshold, trials, seed):
        key = (detector, int(N), int(K), float(pfa))
        if key in self.entries:
            raise KeyError(f"threshold for {key} already recorded")
        if detector != "oracle" and not threshold >= 0:
            raise ValueError("CFAR thresholds must be non-negative")
        self.entries[key] = (float(threshold), int(trials), int(seed))

    def get(self, detector, N, K, pfa):
        return self.entries[(detector, int(N), int(K), float(pfa))][0]

    def __contains__(self, key):
        return key in self.entries

    def check_monotone(self):
        """Thresholds must decrease as the target P_FA grows."""
        groups = {}
        for (det, N, K, pfa), (thr, _, _) in self.entries.items():
            groups.setdefault((det, N, K), []).append((pfa, thr))
        for key, rows in groups.items():
            thr = [t for _, t in sorted(rows)]
            if any(b > a for a, b in zip(thr, thr[1:])):
                raise ValueError(f"thresholds for {key} are not decreasing in P_FA")

    def to_csv(self, path):
        with open_target(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for key in sorted(self.entries):
                thr, trials, seed = self.entries[key]
                w.writerow([key[0], key[1], key[2], repr(key[3]), repr(thr), trials, seed])

    @classmethod
    def from_csv(cls, path):
        table = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != cls.COLUMNS:
                raise ValueError(f"{path}: header must be {','.join(cls.COLUMNS)}")
            for row in reader:
                table.add(row["detector"], row["N"], row["K"], float(row["pfa"]),
                          float(row["threshold"]), row["trials"], row["seed"])
        return table


class _SecondaryDetector(BaseEstimator):
    """Shared ``fit`` for detectors that invert the secondary scatter matrix."""

    name = None

    def fit(self, X, y=None):
        """Factor the scatter matrix of secondary snapshots ``X`` (n_samples, n_features)."""
        X = check_complex_array(X, name="secondary data")
        K, N = X.shape
        _need_full_rank(K, N)
        self.scatter_ = X.T @ X.conj()
        self.chol_ = _chol(self.scatter_)
        self.n_features_in_ = N
        self.n_samples_ = K
        self.threshold_ = self._resolve_threshold(N, K)
        return self

    def _calibration_trials(self):
        if self.calibration_trials is not None:
            return self.calibration_trials
        return max(10_000, int(np.ceil(MIN_TRIALS_PER_TAIL / self.pfa)))

    def _resolve_threshold(self, N, K):
        if self.threshold is not None:
            return float(self.threshold)
        key = (N, K, self.pfa, self._calibration_trials(), self.random_state)
        cache = getattr(self, "_calibration_cache", None)
        if cache is None or cache[0] != key:
            self._calibration_cache = (key, self._calibrate(N, K))
        return self._calibration_cache[1]

    def predict(self, Z0):
        return (np.atleast_1d(self.decision_function(Z0)) > self.threshold_).astype(int)


class RDSCMDetector(_SecondaryDetector):
    """Radar-style GLRT that estimates the leak signature as an unstructured vector.

    Parameters
    ----------
    pfa : float, default=0.01
        Target false-alarm probability.
    threshold : float, optional
        Skip calibration and use this value.
    calibration_trials : int, optional
        Monte-Carlo trials for calibration; defaults to ``max(1e4, 50/pfa)``.
    random_state : int, default=0
        Master seed of the calibration run.
    """

    name = "rd_scm"

    def __init__(self, pfa=0.01, threshold=None, calibration_trials=None, random_state=0):
        self.pfa = pfa
        self.threshold = threshold
        self.calibration_trials = calibration_trials
        self.random_state = random_state

    def _calibrate(self, N, K):
        return rd_scm_calibrate(N, K, self.pfa, self._calibration_trials(), self.random_state)

    def decision_function(self, Z0):
        check_is_fitted(self, "chol_")
        Z0 = check_complex_array(Z0, self.n_features_in_, name="primary data")
        W = solve_triangular(self.chol_, Z0.T, lower=True)
        return np.sum(np.abs(W) ** 2, axis=0).squeeze()

    def detect(self, z0):
        stat = float(self.decision_function(z0))
        return DetectionReport(self.name, int(stat > self.threshold_), stat, self.threshold_)


class LDSCMDetector(_SecondaryDetector):
    """Leak-structured GLRT with a grid search over leak location.

    Parameters
    ----------
    family : SteeringFamily
        Candidate locations and steering vectors.
    pfa : float, default=0.01
    threshold : float, optional
    search_calibration : bool, default=True
        Calibrate the null law of the statistic including the location
        search. ``False`` calibrates a fixed signature ``e_1`` instead.
    calibration_trials : int, optional
    random_state : int, default=0
    """

    name = "ld_scm"

    def __init__(self, family=None, pfa=0.01, threshold=None, search_calibration=True,
                 calibration_trials=None, random_state=0):
        self.family = family
        self.pfa = pfa
        self.threshold = threshold
        self.search_calibration = search_calibration
        self.calibration_trials = calibration_trials
        self.random_state = random_state

    def _calibrate(self, N, K):
        fam = self.family if self.search_calibration else None
        return ld_scm_calibrate(N, K, self.pfa, self._calibration_trials(), self.random_state,
                                family=fam)

    def _analyse(self, z0):
        check_is_fitted(self, "chol_")
        if self.family is None:
            raise ValueError("LDSCMDetector needs a steering family")
        z0 = check_complex_vector(z0, self.n_features_in_, name="z0")
        ratios, numer, denom, wz = _whitened_profile(self.chol_, z0, self.family.vectors)
        i = int(np.argmax(ratios))
        stat = ratios[i] / (1.0 + np.vdot(wz, wz).real)
        return float(stat), i, float(numer[i] / denom[i])

    def decision_function(self, Z0):
        Z0 = check_complex_array(Z0, name="primary data")
        return np.array([self._analyse(z)[0] for z in Z0]).squeeze()

    def detect(self, z0):
        stat, i, s_hat = self._analyse(z0)
        report = DetectionReport(self.name, int(stat > self.threshold_), stat, self.threshold_)
        if report.decision:
            report.phi_hat = float(self.family.phis[i])
            report.s_hat = s_hat
        return report


class OracleDetector(BaseEstimator):
    """Likelihood-ratio benchmark with known leak size, signature and covariance.

    ``fit`` ignores its data; everything is known up front.
    """

    name = "oracle"

    def __init__(self, leak_size=1.0, signature=None, covariance=None, pfa=0.01, phi=None):
        self.leak_size = leak_size
        self.signature = signature
        self.covariance = covariance
        self.pfa = pfa
        self.phi = phi

    def fit(self, X=None, y=None):
        C = check_hermitian_pd(self.covariance, name="covariance")
        g = check_complex_vector(self.signature, C.shape[0], name="signature")
        self.weights_ = self.leak_size * cho_solve(cho_factor(C), g)
        self.n_features_in_ = C.shape[0]
        self.null_variance_ = 0.5 * self.leak_size * np.vdot(g, self.weights_).real
        self.threshold_ = float(np.sqrt(self.null_variance_) * norm.isf(self.pfa)) \
            if self.pfa < 1 else -np.inf
        return self

    def decision_function(self, Z0):
        check_is_fitted(self, "weights_")
        Z0 = check_complex_array(Z0, self.n_features_in_, name="primary data")
        return (Z0 @ self.weights_.conj()).real.squeeze()

    def predict(self, Z0):
        return (np.atleast_1d(self.decision_function(Z0)) > self.threshold_).astype(int)

    def detect(self, z0):
        stat = float(self.decision_function(z0))
        report = DetectionReport(self.name, int(stat > self.threshold_), stat, self.threshold_)
        if report.decision:
            report.s_hat, report.phi_hat = float(self.leak_size), self.phi
        return report
