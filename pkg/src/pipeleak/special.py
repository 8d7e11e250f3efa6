"""Chi-square tail functions with one degree of freedom."""

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc
from scipy.stats import poisson

__all__ = ["q1", "q1_inv", "q2_survival"]

_TAIL_TOL = 1e-14


def q1(x):
    """Central chi-square(1) survival, ``Q(1/2, x/2)`` (regularized upper gamma)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("q1 is defined for x >= 0")
    return gammaincc(0.5, x / 2.0)


def q1_inv(p, xtol=1e-12):
    """Inverse of :func:`q1` on ``(0, 1]``, by bracketed root finding."""
    p = float(p)
    if not 0 < p <= 1:
        raise ValueError(f"q1_inv needs p in (0, 1], got {p}")
    if p == 1.0:
        return 0.0
    hi = 1.0
    while q1(hi) > p:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"p={p} is below the representable tail")
    return brentq(lambda x: q1(x) - p, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def q2_survival(lam, x):
    """Survival ``P[X > x]`` of a noncentral chi-square(1) with noncentrality ``lam``.

    Summed as a Poisson(lam/2) mixture of central chi-square tails with
    ``1 + 2j`` degrees of freedom; truncated once the Poisson tail mass is
    below 1e-14, which bounds the truncation error.
    """
    lam = float(lam)
    x = float(x)
    if lam < 0 or x < 0:
        raise ValueError("q2_survival needs lam >= 0 and x >= 0")
    half = lam / 2.0
    jmax = 0 if half == 0 else int(poisson.isf(_TAIL_TOL, half)) + 1
    while half > 0 and poisson.sf(jmax, half) > _TAIL_TOL:
        jmax += 1
    j = np.arange(jmax + 1)
    weights = poisson.pmf(j, half)
    tails = gammaincc(0.5 + j, x / 2.0)
    return float(min(1.0, np.dot(weights, tails)))
