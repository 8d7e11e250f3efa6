"""Input validation helpers for complex-valued snapshot data.

scikit-learn's ``check_array`` rejects complex input, so the estimators in
this package route through these instead.
"""

import numpy as np


def check_complex_vector(z, n_features=None, name="z"):
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {z.shape}")
    z = z.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite entries")
    if n_features is not None and z.shape[0] != n_features:
        raise ValueError(f"{name} has {z.shape[0]} entries, expected {n_features}")
    return z


def check_complex_array(X, n_features=None, min_samples=1, name="X"):
    """Return ``X`` as a 2-D complex128 array of shape (n_samples, n_features)."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    X = X.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    if X.shape[0] < min_samples:
        raise ValueError(f"{name} needs at least {min_samples} samples, got {X.shape[0]}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_hermitian_pd(A, name="A", rtol=1e-10):
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.conj().T)) > rtol * scale:
        raise ValueError(f"{name} is not Hermitian")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{name} is not positive definite") from exc
    return A


def check_probability(p, name="pfa", allow_one=True):
    p = float(p)
    hi_ok = p <= 1.0 if allow_one else p < 1.0
    if not (p > 0.0 and hi_ok):
        raise ValueError(f"{name} must lie in (0, 1], got {p}")
    return p
