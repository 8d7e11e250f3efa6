"""Deterministic trial-level parallelism.

Every trial gets its own generator derived from (master seed, tag, index),
and results are gathered by index. Chunking is fixed and independent of
the worker count, so output does not depend on ``n_jobs``.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .stochastics import trial_seed

CHUNK = 128


def _run_chunk(fn, master, tag, lo, hi, as_seed):
    out = []
    for i in range(lo, hi):
        seed = trial_seed(master, tag, i)
        out.append(fn(seed if as_seed else np.random.default_rng(seed), i))
    return out


def run_trials(fn, n_trials, master, tag, n_jobs=1, as_seed=False):
    """Evaluate ``fn(rng, index)`` for ``index in range(n_trials)``, in order.

    With ``as_seed=True`` the first argument is the trial's ``SeedSequence``
    instead of a generator.
    """
    bounds = [(lo, min(lo + CHUNK, n_trials)) for lo in range(0, n_trials, CHUNK)]
    if n_jobs is None or n_jobs <= 1 or len(bounds) <= 1:
        chunks = [_run_chunk(fn, master, tag, lo, hi, as_seed) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(lambda b: _run_chunk(fn, master, tag, *b, as_seed), bounds))
    return [r for chunk in chunks for r in chunk]
