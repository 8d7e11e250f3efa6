"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line; the lines are printed in the
pytest terminal summary, or directly when this file is run as a script::

    python tests/test_acceptance.py

The Monte-Carlo criteria are slow (about half an hour in total on one core).
"""

import sys
import time

import mpmath as mp
import numpy as np
import pytest

from pipeleak._parallel import run_trials
from pipeleak.bench.cli import main as cli_main
from pipeleak.bench.config import ExperimentConfig
from pipeleak.bench.experiments import Bench, known_location_trials, run_pd_sweep, \
    theory_quantities
from pipeleak.detectors import LDSCMDetector, SteeringFamily, ld_scm_calibrate, ld_scm_null_samples, \
    ld_scm_statistic, rd_scm_calibrate, rd_scm_statistic, _tail_quantile
from pipeleak.hydraulics import MeasurementGrid, PipeSystem, field_matrix, forward_heads, \
    junction_matrix, leak_field_matrix, no_leak_head, steering_vector
from pipeleak.rmt import LDRSCMDetector
from pipeleak.special import q1, q1_inv, q2_survival
from pipeleak.stochastics import CovarianceSpec, build_covariance, generate_dataset

pytestmark = pytest.mark.slow

RESULTS = []


def record(number, ok, detail, elapsed, budget):
    within = elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"{status} criterion {number:>2}: {detail} [{elapsed:.1f}s / budget {budget:.0f}s]"
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert within, line


def se_diff(p, q, n):
    return np.sqrt((p * (1 - p) + q * (1 - q)) / n)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def test_criterion_01_hydraulic_factorization():
    t0 = time.perf_counter()
    pipe = PipeSystem()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        x = rng.uniform(1.0, pipe.length)
        phi = rng.uniform(0.0, x)
        w = rng.uniform(0.05, 32 * pipe.fundamental_frequency)
        s = rng.uniform(0.0, 1e-2)
        lhs = field_matrix(x - phi, w, pipe) @ junction_matrix(s, pipe) @ field_matrix(phi, w, pipe)
        rhs = field_matrix(x, w, pipe) + s * leak_field_matrix(phi, x, w, pipe)
        worst = max(worst, np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    grid = MeasurementGrid.harmonic(pipe)
    h0 = np.concatenate([no_leak_head(x, grid.frequencies, 1.0, pipe) for x in grid.sensors])
    fwd = 0.0
    for phi in np.linspace(1.0, 2000.0, 40):
        h = forward_heads(phi, 1.4e-4, grid)
        want = h0 + 1.4e-4 * steering_vector(phi, grid)
        fwd = max(fwd, np.max(np.abs(h - want)) / np.max(np.abs(want)))
    record(1, worst < 1e-10 and fwd < 1e-8,
           f"factorization max rel err {worst:.2e} (<1e-10), forward vs h0+s*g {fwd:.2e} (<1e-8)",
           time.perf_counter() - t0, 5)


def _null_rates(stat_fn, thr, covs, trials, tag):
    rates = []
    for k, C in enumerate(covs):
        L = np.linalg.cholesky(C)

        def one(rng, _):
            Z = cn(rng, 64, C.shape[0]) @ L.T
            z0 = cn(rng, C.shape[0]) @ L.T
            return stat_fn(z0, Z.T @ Z.conj())

        rates.append(float(np.mean(np.array(run_trials(one, trials, 11, f"{tag}-{k}")) > thr)))
    return rates


def test_criterion_02_cfar():
    t0 = time.perf_counter()
    N, K, pfa, T = 16, 64, 0.05, 20_000
    grid = MeasurementGrid.harmonic(PipeSystem(), n_frequencies=N // 2)
    g = steering_vector(600.0, grid)
    covs = [np.eye(N), build_covariance(CovarianceSpec(3.7, N, 0.9))]
    thr_ld = ld_scm_calibrate(N, K, pfa, T, seed=2)
    thr_rd = rd_scm_calibrate(N, K, pfa, T, seed=2)
    ld = _null_rates(lambda z, S: ld_scm_statistic(z, S, g), thr_ld, covs, T, "c2-ld")
    rd = _null_rates(rd_scm_statistic, thr_rd, covs, T, "c2-rd")
    ok = all(0.04 <= p <= 0.06 for p in ld + rd)
    # informational: statistic including the location search, calibrated the same way
    fam = SteeringFamily.from_grid(grid, step=5.0, guard=5.0)
    thr_s = _tail_quantile(ld_scm_null_samples(N, K, 4000, 3, fam), pfa)
    L = np.linalg.cholesky(covs[1])

    def searched(rng, _):
        Z = cn(rng, K, N) @ L.T
        z0 = cn(rng, N) @ L.T
        return LDSCMDetector(fam, threshold=thr_s).fit(Z)._analyse(z0)[0]

    det_rates = float(np.mean(np.array(run_trials(searched, 4000, 12, "c2-search")) > thr_s))
    record(2, ok,
           f"P_FA LD-SCM I/Toeplitz {ld[0]:.4f}/{ld[1]:.4f}, RD-SCM {rd[0]:.4f}/{rd[1]:.4f} "
           f"in [0.04,0.06]; info: grid-searched LD-SCM under Toeplitz {det_rates:.4f} (4e3 trials)",
           time.perf_counter() - t0, 120)


def test_criterion_03_detector_ordering():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(K=600, trials=10_000, detectors=("oracle", "ld_scm", "rd_scm"),
                           snr_db=(-6.0, -3.0, 0.0), pfa=(0.01,)).validate()
    res = run_pd_sweep(cfg)
    n = cfg.trials
    pd = {(r.detector, r.snr_db): r.pd_hat for r in res.rows}
    o, l, r = (pd[(d, -3.0)] for d in ("oracle", "ld_scm", "rd_scm"))
    ordered = (o - l >= -2 * se_diff(o, l, n)) and (l - r >= -2 * se_diff(l, r, n))
    strict = [s for s in cfg.snr_db
              if pd[("ld_scm", s)] - pd[("rd_scm", s)] > 2 * se_diff(pd[("ld_scm", s)],
                                                                    pd[("rd_scm", s)], n)]
    detail = "; ".join(f"{s:+.0f} dB: oracle {pd[('oracle', s)]:.3f} LD {pd[('ld_scm', s)]:.3f} "
                       f"RD {pd[('rd_scm', s)]:.3f}" for s in cfg.snr_db)
    record(3, ordered and bool(strict),
           f"P_D ordering at -3 dB {'holds' if ordered else 'violated'}, LD>RD+2SE at "
           f"{strict} dB ({detail})", time.perf_counter() - t0, 1800)


@pytest.fixture(scope="module")
def theory_setting():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(K=128, trials=10_000).validate()
    sims = known_location_trials(cfg, [0.5], tag="acceptance")
    aq = theory_quantities(cfg, [0.5])[0]
    return cfg, sims, aq, time.perf_counter() - t0


def test_criterion_04_theorem1(theory_setting):
    t0 = time.perf_counter()
    cfg, sims, aq, sim_time = theory_setting
    t0 -= sim_time  # the shared simulation counts towards each criterion
    L0 = sims["L0"][:, 0]
    s2hat = sims["sigma2_hat"][:, 0]
    levels = np.logspace(np.log10(0.005), np.log10(0.5), 10)
    alphas = aq.sigma2 * np.array([q1_inv(p) for p in levels])
    emp = np.array([np.mean(L0 > a) for a in alphas])
    dev = np.max(np.abs(emp - q1(alphas / aq.sigma2)))
    plug = np.array([np.mean(q1(a / s2hat)) for a in alphas])
    dev_hat = np.max(np.abs(emp - plug))
    record(4, dev <= 0.02 and dev_hat <= 0.02,
           f"max |P_FA emp - q1(a/sigma2)| {dev:.4f}, with sigma2_hat {dev_hat:.4f} (<=0.02)",
           time.perf_counter() - t0, 600)


def test_criterion_05_theorem2(theory_setting):
    t0 = time.perf_counter()
    cfg, sims, aq, sim_time = theory_setting
    t0 -= sim_time
    L1 = sims["L1"][:, 0]
    alpha = aq.sigma2 * q1_inv(0.01)
    emp = float(np.mean(L1 > alpha))
    theory = q2_survival(aq.beta2, alpha / aq.sigma2)
    s2 = cfg.leak_size**2
    plug = float(np.mean([q2_survival(2 * s2 * th, alpha / sg)
                          for th, sg in zip(sims["theta_hat"][:, 0], sims["sigma2_hat"][:, 0])]))
    record(5, abs(emp - theory) <= 0.03 and abs(emp - plug) <= 0.03,
           f"P_D emp {emp:.4f} vs q2 {theory:.4f} (|d|={abs(emp - theory):.4f}), "
           f"plug-in {plug:.4f} (|d|={abs(emp - plug):.4f}) (<=0.03)",
           time.perf_counter() - t0, 600)


def test_criterion_06_estimator_consistency():
    t0 = time.perf_counter()
    rhos = [0.1, 0.5, 0.9]
    cfg = ExperimentConfig(trials=10_000).validate()
    N = cfg.n_features
    med = {}
    for K in (2 * N, 8 * N, 32 * N):
        sims = known_location_trials(cfg, rhos, trials=200, K=K, tag="consistency")
        for k, aq in enumerate(theory_quantities(cfg, rhos, K=K)):
            med[("sigma2", K, rhos[k])] = np.median(
                np.abs(sims["sigma2_hat"][:, k] - aq.sigma2) / aq.sigma2)
            med[("theta", K, rhos[k])] = np.median(
                np.abs(sims["theta_hat"][:, k] - aq.theta) / aq.theta)
    K0 = 2 * N
    bound = all(med[("sigma2", K0, r)] <= 0.05 and med[("theta", K0, r)] <= 0.07 for r in rhos)
    shrink = all(med[(q, 2 * N, r)] > med[(q, 8 * N, r)] > med[(q, 32 * N, r)]
                 for q in ("sigma2", "theta") for r in rhos)
    detail = ", ".join(f"rho={r}: s2 {med[('sigma2', K0, r)]:.3f} th {med[('theta', K0, r)]:.3f}"
                       for r in rhos)
    record(6, bound and shrink,
           f"K=128 median rel err ({detail}) bounds 0.05/0.07 {'met' if bound else 'NOT met'}; "
           f"shrinking over K=128,512,2048 {'yes' if shrink else 'no'}",
           time.perf_counter() - t0, 600)


def test_criterion_07_rscm_vs_scm():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(K=128, trials=10_000, detectors=("ld_scm", "ld_rscm"),
                           snr_db=(-9.0, -6.0, -3.0, 0.0), pfa=(0.01, 0.05)).validate()
    res = run_pd_sweep(cfg)
    n = cfg.trials
    pd = {(r.detector, r.snr_db, r.pfa_target): r for r in res.rows}
    no_worse, better = True, []
    parts = []
    for s in cfg.snr_db:
        a, b = pd[("ld_rscm", s, 0.01)].pd_hat, pd[("ld_scm", s, 0.01)].pd_hat
        se = se_diff(a, b, n)
        no_worse &= a >= b - 2 * se
        if a - b > 2 * se:
            better.append(s)
        parts.append(f"{s:+.0f} dB RSCM {a:.3f} SCM {b:.3f}")
    pfa5 = pd[("ld_rscm", -3.0, 0.05)].pfa_hat
    ok = no_worse and bool(better) and 0.035 <= pfa5 <= 0.065
    record(7, ok,
           f"{'; '.join(parts)}; strictly better at {better} dB; LD-RSCM P_FA at eta=0.05 "
           f"{pfa5:.4f} in [0.035,0.065]", time.perf_counter() - t0, 2400)


def test_criterion_08_location_source():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(K=128, trials=10_000).validate()
    bench = Bench(cfg)
    cov = bench.covariance(-3.0)
    eta = 0.05
    aux = LDRSCMDetector(bench.family, pfa=eta)
    prim = LDRSCMDetector(bench.family, pfa=eta, location_source="primary")

    def one(ss, _):
        d = generate_dataset(0, None, bench.grid, cov, cfg.K, with_y0=True, seed=ss)
        a = aux.fit(d.secondary).analyse(d.z0, d.y0).decision
        p = prim.fit(d.secondary).analyse(d.z0).decision
        return a, p

    out = np.array(run_trials(one, cfg.trials, cfg.seed, "location-source", as_seed=True))
    pa, pp = out.mean(axis=0)
    record(8, pp > 2 * eta and 0.035 <= pa <= 0.065,
           f"P_FA with phi from (R_N, z0) {pp:.4f} (>{2 * eta}), from (R_N, y0) {pa:.4f} "
           f"(in [0.035,0.065]) at eta={eta}", time.perf_counter() - t0, 900)


def test_criterion_09_special_functions():
    t0 = time.perf_counter()
    mp.mp.dps = 30
    xs = np.linspace(0.0, 20.0, 20)
    erfc_err = max(abs(q1(x) - float(mp.erfc(mp.sqrt(mp.mpf(x) / 2)))) for x in xs)
    inv_err = max(abs(q1_inv(q1(x)) - x) for x in xs[1:])
    rng = np.random.default_rng(9)
    z = rng.standard_normal(1_000_000)
    mc_err = 0.0
    for lam in (0.5, 2.0, 8.0):
        v = (z + np.sqrt(lam)) ** 2
        for x in (1.0, 4.0, 9.0):
            mc_err = max(mc_err, abs(q2_survival(lam, x) - np.mean(v > x)))
    record(9, erfc_err < 1e-10 and inv_err < 1e-10 and mc_err < 0.005,
           f"q1-erfc {erfc_err:.1e}, q1_inv round trip {inv_err:.1e} (<1e-10), "
           f"q2 vs 1e6-draw MC {mc_err:.4f} (<0.005)", time.perf_counter() - t0, 60)


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    ini = tmp_path / "det.ini"
    ini.write_text("[experiment]\nK = 128\npfa = 0.1\nsnr_db = -3, 0\ntrials = 500\n"
                   "detectors = oracle, ld_scm, rd_scm, ld_rscm\n")
    blobs = []
    for threads in (1, 4):
        out = tmp_path / f"sweep-{threads}.csv"
        assert cli_main(["sweep-snr", "--config", str(ini), "--threads", str(threads),
                         "--seed", "77", "--out", str(out)]) == 0
        blobs.append(out.read_bytes())
    record(10, blobs[0] == blobs[1],
           f"sweep CSV with 1 vs 4 threads byte-identical: {blobs[0] == blobs[1]} "
           f"({len(blobs[0])} bytes)", time.perf_counter() - t0, 300)


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
