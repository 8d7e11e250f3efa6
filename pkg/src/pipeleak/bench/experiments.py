"""Monte-Carlo experiments: calibration, P_D vs SNR, ROC and asymptotic-theory checks.

All randomness flows from ``config.seed`` through per-trial seed
sequences (see :func:`pipeleak.stochastics.trial_seed`). Trial ``t`` of a
given phase uses the same noise realisation at every SNR point; only the
noise power changes.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .._parallel import run_trials
from ..detectors import LDSCMDetector, RDSCMDetector, SteeringFamily, ThresholdTable, \
    ld_scm_null_samples, oracle_threshold, rd_scm_null_samples, _tail_quantile
from ..hydraulics import steering_vector
from ..rmt import LDRSCMDetector, RscmSpectrum, asymptotic_quantities
from ..special import q1, q1_inv, q2_survival
from ..stochastics import CovarianceSpec, build_covariance, db_to_linear, generate_dataset, \
    sample_circular_gaussian, snr_to_noise_power
from .config import CFAR_DETECTORS

log = logging.getLogger(__name__)

__all__ = [
    "SweepRow",
    "SweepResult",
    "TheoryRow",
    "TheoryResult",
    "Bench",
    "calibrate_thresholds",
    "run_pd_sweep",
    "run_roc",
    "known_location_trials",
    "run_validate_theory",
]


@dataclass
class SweepRow:
    detector: str
    snr_db: float
    pfa_target: float
    pfa_hat: float
    pd_hat: float
    trials: int
    phi_mae_m: float
    s_rel_err: float
    seed: int
    wall_ms: float


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    COLUMNS = ("detector", "snr_db", "pfa_target", "pfa_hat", "pd_hat", "trials",
               "phi_mae_m", "s_rel_err", "seed", "wall_ms")
    TIMING_COLUMNS = ("wall_ms",)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.detector, r.snr_db, r.pfa_target))

    def select(self, detector, snr_db=None, pfa_target=None):
        out = [r for r in self.rows if r.detector == detector
               and (snr_db is None or r.snr_db == snr_db)
               and (pfa_target is None or r.pfa_target == pfa_target)]
        return sorted(out, key=lambda r: (r.snr_db, r.pfa_target))


@dataclass
class TheoryRow:
    rho: float
    phi: float
    sigma2_hat: float
    sigma2_theory: float
    theta_hat: float
    theta_theory: float
    pfa_emp: float
    pfa_theory: float
    pd_emp: float
    pd_theory: float


@dataclass
class TheoryResult:
    rows: list = field(default_factory=list)

    COLUMNS = ("rho", "phi", "sigma2_hat", "sigma2_theory", "theta_hat", "theta_theory",
               "pfa_emp", "pfa_theory", "pd_emp", "pd_theory")
    TIMING_COLUMNS = ()

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.rho, r.phi))


class Bench:
    """Shared, read-only state of one experiment: geometry, steering family, true signal."""

    def __init__(self, config):
        self.config = config
        self.grid = config.grid
        self.N = self.grid.n_features
        self.family = SteeringFamily.from_grid(self.grid, config.phi_step, config.phi_guard)
        self.g = steering_vector(config.leak_location, self.grid)
        self.signal = config.leak_size * self.g
        self.leak = (config.leak_size, config.leak_location)

    def noise_power(self, snr_db):
        return snr_to_noise_power(self.config.leak_size, self.g, float(db_to_linear(snr_db)))

    def covariance(self, snr_db):
        return CovarianceSpec(self.noise_power(snr_db), self.N, self.config.correlation)

    def score_trial(self, seed, cov, hypothesis, oracle_w):
        """Scores of every configured detector on one simulated dataset.

        Returns ``{detector: (score, phi_hat, s_hat, seconds)}``. Scores are
        on each detector's own scale (see :meth:`score_thresholds`).
        """
        cfg = self.config
        dets = cfg.detectors
        data = generate_dataset(hypothesis, self.leak, self.grid, cov, cfg.K,
                                with_y0="ld_rscm" in dets, seed=seed, signal=self.signal)
        out = {}
        for name in dets:
            t0 = time.perf_counter()
            if name == "oracle":
                w, gw = oracle_w
                stat = float((data.z0 @ w.conj()).real)
                res = (stat, cfg.leak_location, stat / (cfg.leak_size * gw))
            elif name == "rd_scm":
                det = RDSCMDetector(threshold=0.0).fit(data.secondary)
                res = (float(det.decision_function(data.z0)), np.nan, np.nan)
            elif name == "ld_scm":
                det = LDSCMDetector(self.family, threshold=0.0).fit(data.secondary)
                stat, i, s_hat = det._analyse(data.z0)
                res = (stat, float(self.family.phis[i]), s_hat)
            else:
                det = LDRSCMDetector(self.family, pfa=cfg.pfa[0], kappa=cfg.kappa,
                                     rho_step=cfg.rho_step).fit(data.secondary)
                stat, sigma2, _, phi, s_hat = det.score(data.z0, data.y0)
                res = (stat / sigma2, phi, s_hat)
            out[name] = res + (time.perf_counter() - t0,)
        return out

    def oracle_weights(self, cov):
        from scipy.linalg import cho_factor, cho_solve

        w = self.config.leak_size * cho_solve(cho_factor(build_covariance(cov)), self.g)
        return w, float((self.g.conj() @ w).real) / self.config.leak_size

    def score_thresholds(self, name, cov, pfa, table):
        if name == "oracle":
            return oracle_threshold(self.config.leak_size, self.g, build_covariance(cov), pfa)
        if name == "ld_rscm":
            return q1_inv(pfa)
        return table.get(name, self.N, self.config.K, pfa)

    def run_phase(self, cov, hypothesis, n_jobs=1, trials=None):
        trials = self.config.trials if trials is None else trials
        w = self.oracle_weights(cov)
        return run_trials(lambda ss, t: self.score_trial(ss, cov, hypothesis, w), trials,
                          self.config.seed, f"h{hypothesis}", n_jobs, as_seed=True)


def calibrate_thresholds(config, n_jobs=1, bench=None):
    """Monte-Carlo thresholds for the CFAR detectors over the configured P_FA list.

    LD-SCM is calibrated with its location search included, so the
    threshold controls the false-alarm rate of the statistic actually used.
    """
    bench = Bench(config) if bench is None else bench
    table = ThresholdTable()
    T = config.n_calibration_trials
    for name in CFAR_DETECTORS:
        if name not in config.detectors:
            continue
        t0 = time.perf_counter()
        if name == "ld_scm":
            null = ld_scm_null_samples(bench.N, config.K, T, config.seed, bench.family, n_jobs)
        else:
            null = rd_scm_null_samples(bench.N, config.K, T, config.seed, n_jobs)
        for pfa in sorted(config.pfa):
            table.add(name, bench.N, config.K, pfa, _tail_quantile(null, pfa), T, config.seed)
        log.info("calibrated %s on %d null trials in %.1fs", name, T, time.perf_counter() - t0)
    table.check_monotone()
    return table


def _mean_or_nan(x):
    return float(np.mean(x)) if len(x) else float("nan")


def run_pd_sweep(config, n_jobs=1, thresholds=None):
    """Empirical P_FA and P_D of every detector at every SNR and target P_FA."""
    bench = Bench(config)
    table = calibrate_thresholds(config, n_jobs, bench) if thresholds is None else thresholds
    result = SweepResult()
    s, phi = bench.leak
    # Under H0 every decision is invariant to the noise power (each statistic
    # and its threshold scale together), and the null phase reuses the same
    # noise at each SNR, so it is simulated once.
    cov0 = bench.covariance(config.snr_db[0])
    h0 = bench.run_phase(cov0, 0, n_jobs)
    null = {}
    for name in config.detectors:
        s0 = np.array([t[name][0] for t in h0])
        null[name] = {pfa: float(np.mean(s0 > bench.score_thresholds(name, cov0, pfa, table)))
                      for pfa in config.pfa}
    for snr in config.snr_db:
        cov = bench.covariance(snr)
        h1 = bench.run_phase(cov, 1, n_jobs)
        for name in config.detectors:
            s1 = np.array([t[name][0] for t in h1])
            phis = np.array([t[name][1] for t in h1])
            sizes = np.array([t[name][2] for t in h1])
            wall = 1e3 * sum(t[name][3] for t in h0 + h1)
            for pfa in config.pfa:
                thr = bench.score_thresholds(name, cov, pfa, table)
                hit = s1 > thr
                result.rows.append(SweepRow(
                    detector=name, snr_db=float(snr), pfa_target=float(pfa),
                    pfa_hat=null[name][pfa], pd_hat=float(np.mean(hit)),
                    trials=config.trials,
                    phi_mae_m=_mean_or_nan(np.abs(phis[hit] - phi)) if np.any(hit) else np.nan,
                    s_rel_err=_mean_or_nan(np.abs(sizes[hit] - s) / s) if np.any(hit) else np.nan,
                    seed=config.seed, wall_ms=wall,
                ))
        log.info("SNR %+.1f dB done", snr)
    return result


def roc_levels(n_points):
    return np.concatenate([[0.0], np.logspace(-3, 0, n_points)])


def run_roc(config, n_jobs=1):
    """ROC at ``config.roc_snr_db``: thresholds at empirical null quantiles.

    ``pfa_target`` holds the nominal level of each quantile; the endpoints
    0 and 1 correspond to thresholds of +inf and -inf.
    """
    bench = Bench(config)
    cov = bench.covariance(config.roc_snr_db)
    h0 = bench.run_phase(cov, 0, n_jobs)
    h1 = bench.run_phase(cov, 1, n_jobs)
    result = SweepResult()
    for name in config.detectors:
        s0 = np.array([t[name][0] for t in h0])
        s1 = np.array([t[name][0] for t in h1])
        wall = 1e3 * sum(t[name][3] for t in h0 + h1)
        for p in roc_levels(config.roc_points):
            if p == 0:
                thr = np.inf
            elif p == 1:
                thr = -np.inf
            else:
                thr = np.quantile(s0, 1.0 - p)
            result.rows.append(SweepRow(
                detector=name, snr_db=float(config.roc_snr_db), pfa_target=float(p),
                pfa_hat=float(np.mean(s0 > thr)), pd_hat=float(np.mean(s1 > thr)),
                trials=config.trials, phi_mae_m=np.nan, s_rel_err=np.nan,
                seed=config.seed, wall_ms=wall,
            ))
    return result


def known_location_trials(config, rhos, trials=None, K=None, n_jobs=1, tag="theory"):
    """Regularized statistic at the true location, for many independent datasets.

    Returns a dict of arrays with shape ``(trials, len(rhos))``: ``L0`` and
    ``L1`` (statistic under H0 and H1, sharing noise), ``sigma2_hat`` and
    ``theta_hat``.
    """
    bench = Bench(config)
    K = config.K if K is None else K
    trials = config.trials if trials is None else trials
    cov = bench.covariance(config.theory_snr_db)
    C = build_covariance(cov)
    rhos = np.asarray(rhos, dtype=float)
    c = bench.N / K
    g, p = bench.g, bench.signal

    def one(rng, _):
        Z = sample_circular_gaussian(C, K, rng)
        n0 = sample_circular_gaussian(C, 1, rng)[0]
        spec = RscmSpectrum(Z.T @ Z.conj() / K, c)
        gr, nr, pr = spec.rotate(g), spec.rotate(n0), spec.rotate(p)
        L0 = np.array([spec.statistic(r, gr, nr)[0] for r in rhos])
        L1 = np.array([spec.statistic(r, gr, nr + pr)[0] for r in rhos])
        return L0, L1, spec.sigma2(rhos, gr), spec.theta(rhos, gr)

    res = run_trials(one, trials, config.seed, f"{tag}-{K}", n_jobs)
    keys = ("L0", "L1", "sigma2_hat", "theta_hat")
    return {k: np.array([r[i] for r in res]) for i, k in enumerate(keys)}


def theory_quantities(config, rhos, K=None):
    bench = Bench(config)
    K = config.K if K is None else K
    C = build_covariance(bench.covariance(config.theory_snr_db))
    return [asymptotic_quantities(r, bench.g, C, bench.N / K, config.leak_size) for r in rhos]


def run_validate_theory(config, n_jobs=1):
    """Empirical vs asymptotic false-alarm / detection rates at the true leak location."""
    rhos = sorted(config.theory_rho)
    sims = known_location_trials(config, rhos, n_jobs=n_jobs)
    theory = theory_quantities(config, rhos)
    pfa = config.pfa[0]
    result = TheoryResult()
    for k, (rho, aq) in enumerate(zip(rhos, theory)):
        alpha = aq.sigma2 * q1_inv(pfa)
        result.rows.append(TheoryRow(
            rho=float(rho), phi=float(config.leak_location),
            sigma2_hat=float(np.mean(sims["sigma2_hat"][:, k])), sigma2_theory=aq.sigma2,
            theta_hat=float(np.mean(sims["theta_hat"][:, k])), theta_theory=aq.theta,
            pfa_emp=float(np.mean(sims["L0"][:, k] > alpha)),
            pfa_theory=float(q1(alpha / aq.sigma2)),
            pd_emp=float(np.mean(sims["L1"][:, k] > alpha)),
            pd_theory=q2_survival(aq.beta2, alpha / aq.sigma2),
        ))
    return result
