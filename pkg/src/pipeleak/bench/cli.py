"""Command-line entry point: ``pipeleak <subcommand> [options]``."""

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict

import numpy as np

from ..detectors import LDSCMDetector, OracleDetector, RDSCMDetector, ThresholdTable
from ..exceptions import ConfigError
from ..rmt import LDRSCMDetector
from ..stochastics import build_covariance, generate_dataset
from .config import load_config
from .experiments import Bench, calibrate_thresholds, run_pd_sweep, run_roc, run_validate_theory
from .io import emit_csv

log = logging.getLogger("pipeleak")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="INI experiment file (defaults if omitted)")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed")
    p.add_argument("--trials", type=int, metavar="N", help="Monte-Carlo trials per phase")
    p.add_argument("--out", metavar="PATH", help="output file (default: config output or stdout)")
    p.add_argument("--paper-scale", action="store_true",
                   help="1e5 trials at P_FA = 1e-3 (slow)")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="pipeleak", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="Monte-Carlo thresholds for the CFAR detectors")
    _common(p)

    p = sub.add_parser("detect", help="run the configured detectors on one dataset")
    _common(p)
    p.add_argument("--data", metavar="NPZ",
                   help="arrays z0 (N,), secondary (K, N) and optionally y0 (N,)")
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=1,
                   help="simulated hypothesis when --data is not given")
    p.add_argument("--snr-db", type=float, default=None, help="simulated SNR (default: theory SNR)")
    p.add_argument("--thresholds", metavar="CSV", help="table written by 'calibrate'")

    for name, helptext in (("sweep-snr", "empirical P_FA/P_D over the SNR grid"),
                           ("roc", "ROC curves at a fixed SNR")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--timing", action="store_true",
                       help="fill the wall_ms column (breaks byte-identical reruns)")
        if name == "sweep-snr":
            p.add_argument("--thresholds", metavar="CSV", help="table written by 'calibrate'")

    p = sub.add_parser("validate-theory", help="empirical vs asymptotic RSCM quantities")
    _common(p)
    return parser


def _resolve_config(args):
    cfg = load_config(args.config)
    if args.paper_scale:
        cfg = cfg.paper_scale()
    return cfg.override(seed=args.seed, trials=args.trials)


def _out_path(args, cfg):
    return args.out or cfg.output or sys.stdout


def _write(result, target, timing=False):
    if isinstance(result, ThresholdTable):
        result.to_csv(target)
    else:
        emit_csv(result, target, timing)
    if target is not sys.stdout:
        log.info("wrote %s", target)


def _load_dataset(args, cfg, bench):
    if args.data:
        arrays = np.load(args.data)
        y0 = arrays["y0"] if "y0" in arrays.files else None
        return arrays["z0"], arrays["secondary"], y0, None
    snr = cfg.theory_snr_db if args.snr_db is None else args.snr_db
    cov = bench.covariance(snr)
    data = generate_dataset(args.hypothesis, bench.leak, bench.grid, cov, cfg.K,
                            with_y0=True, seed=cfg.seed)
    return data.z0, data.secondary, data.y0, cov


def _detect(args, cfg):
    bench = Bench(cfg)
    z0, Z, y0, cov = _load_dataset(args, cfg, bench)
    table = ThresholdTable.from_csv(args.thresholds) if args.thresholds else None
    pfa = cfg.pfa[0]
    N, K = Z.shape[1], Z.shape[0]

    def threshold(name):
        key = (name, N, K, float(pfa))
        return table.get(*key) if table is not None and key in table else None

    reports = []
    for name in cfg.detectors:
        if name == "oracle":
            if cov is None:
                log.warning("oracle needs the true covariance; skipped for external data")
                continue
            det = OracleDetector(cfg.leak_size, bench.g, build_covariance(cov), pfa,
                                 phi=cfg.leak_location).fit()
            rep = det.detect(z0)
        elif name == "rd_scm":
            rep = RDSCMDetector(pfa, threshold("rd_scm"), cfg.n_calibration_trials,
                                cfg.seed).fit(Z).detect(z0)
        elif name == "ld_scm":
            rep = LDSCMDetector(bench.family, pfa, threshold("ld_scm"),
                                calibration_trials=cfg.n_calibration_trials,
                                random_state=cfg.seed).fit(Z).detect(z0)
        else:
            if y0 is None:
                log.warning("ld_rscm needs an auxiliary snapshot y0; skipped")
                continue
            rep = LDRSCMDetector(bench.family, pfa, cfg.kappa, cfg.rho_step).fit(Z).detect(z0, y0)
        reports.append(asdict(rep))
    text = json.dumps(reports, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"pipeleak: config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        _dispatch(args, cfg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"pipeleak: {args.command}: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return 0


def _dispatch(args, cfg):
    if args.command == "calibrate":
        _write(calibrate_thresholds(cfg, args.threads), _out_path(args, cfg))
    elif args.command == "detect":
        _detect(args, cfg)
    elif args.command == "sweep-snr":
        table = ThresholdTable.from_csv(args.thresholds) if args.thresholds else None
        _write(run_pd_sweep(cfg, args.threads, table), _out_path(args, cfg), args.timing)
    elif args.command == "roc":
        _write(run_roc(cfg, args.threads), _out_path(args, cfg), args.timing)
    else:
        _write(run_validate_theory(cfg, args.threads), _out_path(args, cfg))


if __name__ == "__main__":
    sys.exit(main())
