import numpy as np
import pytest

from pipeleak.exceptions import DegenerateSignalError, InvalidParameterError
from pipeleak.hydraulics import steering_vector
from pipeleak.stochastics import (
    CovarianceSpec, build_covariance, db_to_linear, generate_dataset,
    sample_circular_gaussian, snr_to_noise_power, trial_seed,
)


def test_covariance_examples():
    np.testing.assert_allclose(build_covariance(CovarianceSpec(1.0, 3)),
                               [[1, 0.9, 0.81], [0.9, 1, 0.9], [0.81, 0.9, 1]], rtol=1e-15)
    np.testing.assert_allclose(build_covariance(CovarianceSpec(4.0, 2)),
                               [[4, 3.6], [3.6, 4]], rtol=1e-15)
    assert np.array_equal(build_covariance(CovarianceSpec(2.5, 5, r=0.0)), 2.5 * np.eye(5))


def test_covariance_rejects_bad_parameters():
    for kw in ({"nu2": 1.0, "n": 3, "r": 1.0}, {"nu2": 0.0, "n": 3}, {"nu2": 1.0, "n": 0}):
        with pytest.raises(InvalidParameterError):
            CovarianceSpec(**kw)


@pytest.mark.parametrize("r,n", [(0.9, 64), (0.99, 256), (0.5, 17)])
def test_covariance_toeplitz_pd(r, n):
    C = build_covariance(CovarianceSpec(1.0, n, r))
    assert np.array_equal(C, C.T)
    assert np.all(np.diff(np.diagonal(C, 3)) == 0)
    assert np.linalg.eigvalsh(C)[0] > 0


def test_sampler_second_moments():
    count = 100_000
    x = sample_circular_gaussian(np.eye(3), count, np.random.default_rng(1))
    assert x.shape == (count, 3)
    # |mean|^2 * count ~ chi2(2N)/2 with mean N; 4 sigma is generous
    assert np.linalg.norm(x.mean(0)) < 4 * np.sqrt(3 / count)
    R = x.T @ x.conj() / count
    assert np.all(np.abs(np.diag(R).real - 1) < 0.05)
    pseudo = x.T @ x / count
    assert np.max(np.abs(pseudo)) < 5 / np.sqrt(count)


def test_sampler_matches_covariance():
    C = build_covariance(CovarianceSpec(2.0, 4))
    x = sample_circular_gaussian(C, 10_000, np.random.default_rng(2))
    R = x.T @ x.conj() / len(x)
    assert np.linalg.norm(R - C, 2) < 0.05 * np.linalg.norm(C, 2)


def test_sampler_scale_equivariance_and_spec_path():
    a = sample_circular_gaussian(CovarianceSpec(1.0, 8), 5, np.random.default_rng(3))
    b = sample_circular_gaussian(CovarianceSpec(4.0, 8), 5, np.random.default_rng(3))
    np.testing.assert_allclose(b, 2 * a, rtol=1e-14)
    c = sample_circular_gaussian(build_covariance(CovarianceSpec(1.0, 8)), 5,
                                 np.random.default_rng(3))
    np.testing.assert_allclose(a, c, rtol=1e-13)


def test_sampler_rejects_non_pd():
    with pytest.raises(np.linalg.LinAlgError):
        sample_circular_gaussian(np.array([[1.0, 2.0], [2.0, 1.0]]), 3, np.random.default_rng(0))


def test_snr_conversion(grid):
    g = np.array([2.0, 0.0])
    assert snr_to_noise_power(1.0, g, 2.0) == pytest.approx(2.0)
    assert db_to_linear(-3) == pytest.approx(0.5012, abs=1e-4)
    with pytest.raises(DegenerateSignalError):
        snr_to_noise_power(1.0, np.zeros(3), 1.0)
    g = steering_vector(600.0, grid)
    p2 = np.sum(np.abs(1.4e-4 * g) ** 2)
    assert snr_to_noise_power(1.4e-4, g, 0.5) == pytest.approx(p2 / 0.5, rel=1e-14)


def _datasets(hyp, grid, n, K=1, with_y0=False, snr=1.0):
    g = steering_vector(600.0, grid)
    cov = CovarianceSpec(snr_to_noise_power(1.4e-4, g, snr), grid.n_features)
    return g, [generate_dataset(hyp, (1.4e-4, 600.0), grid, cov, K, with_y0, seed=trial_seed(7, "t", i))
               for i in range(n)]


def test_dataset_means(grid):
    g, d0 = _datasets(0, grid, 10_000)
    z = np.array([d.z0 for d in d0])
    nu2 = d0[0].covariance.nu2
    assert np.linalg.norm(z.mean(0)) < 4 * np.sqrt(grid.n_features * nu2 / len(z))
    # E||mean - p||^2 = N nu2 / n, i.e. 0.025 ||p|| at 10 dB
    _, d1 = _datasets(1, grid, 10_000, snr=10.0)
    z = np.array([d.z0 for d in d1])
    p = 1.4e-4 * g
    assert np.linalg.norm(z.mean(0) - p) < 0.05 * np.linalg.norm(p)


def test_dataset_shapes_and_streams(grid):
    g, (d,) = _datasets(1, grid, 1, K=10, with_y0=True)
    assert d.secondary.shape == (10, grid.n_features) and d.y0.shape == (grid.n_features,)
    assert d.n_secondary == 10 and d.n_features == grid.n_features
    assert not np.allclose(d.y0, d.z0)
    _, (again,) = _datasets(1, grid, 1, K=10, with_y0=True)
    assert np.array_equal(d.z0, again.z0) and np.array_equal(d.y0, again.y0)
    _, (no_aux,) = _datasets(1, grid, 1, K=10)
    assert no_aux.y0 is None
    # the auxiliary stream does not perturb the others
    assert np.array_equal(no_aux.z0, d.z0) and np.array_equal(no_aux.secondary, d.secondary)


def test_dataset_errors(grid):
    cov = CovarianceSpec(1.0, grid.n_features)
    with pytest.raises(InvalidParameterError):
        generate_dataset(1, None, grid, cov, 5)
    with pytest.raises(InvalidParameterError):
        generate_dataset(2, None, grid, cov, 5)
    with pytest.raises(InvalidParameterError):
        generate_dataset(0, None, grid, cov, 0)
    with pytest.raises(InvalidParameterError):
        generate_dataset(0, None, grid, CovarianceSpec(1.0, 3), 5)


def test_trial_seed_is_counter_based():
    a = np.random.default_rng(trial_seed(1, "x", 5)).random()
    assert a == np.random.default_rng(trial_seed(1, "x", 5)).random()
    assert a != np.random.default_rng(trial_seed(1, "y", 5)).random()
    assert a != np.random.default_rng(trial_seed(1, "x", 6)).random()
    assert a != np.random.default_rng(trial_seed(2, "x", 5)).random()
