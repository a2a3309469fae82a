import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from liouville.distributions import (
    AnalyticGaussian,
    GaussianMixture,
    GridDensity,
    ParticleEnsemble,
    density_at,
    mean_and_cov,
    moments,
    pushforward,
    read_ensemble_csv,
    sample,
    to_grid,
    write_ensemble_csv,
)
from liouville.dynamics import step_map
from liouville.errors import (
    DegenerateDistributionError,
    InvalidDistributionError,
    UnsupportedPushforwardError,
    UnsupportedRepresentationError,
)
from liouville.phase_space import PhaseMap
from liouville.scenarios import dilate_map, pendulum, rotate_map, scale_map, two_blob_mixture

ELONGATED = AnalyticGaussian([0.0, 0.0], np.diag([4.0, 0.25]))
STANDARD = AnalyticGaussian([0.0, 0.0], np.eye(2))


def test_gaussian_rejects_bad_covariance():
    with pytest.raises(InvalidDistributionError):
        AnalyticGaussian([0, 0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidDistributionError):
        AnalyticGaussian([0, 0], [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(InvalidDistributionError):
        AnalyticGaussian([0, 0, 0], np.eye(3))


def test_ensemble_invariants():
    with pytest.raises(InvalidDistributionError):
        ParticleEnsemble(np.zeros((1, 2)))
    with pytest.raises(InvalidDistributionError):
        ParticleEnsemble(np.zeros((3, 2)), [0.5, 0.5, 0.5])
    ens = ParticleEnsemble(np.arange(6.0).reshape(3, 2))
    assert ens.equal_weights and abs(ens.weights.sum() - 1) < 1e-12


def test_moments_read_off_covariance():
    m = moments(ELONGATED)
    assert m.sigma_q[0] == 2.0 and m.sigma_k[0] == 0.5 and m.corr_qk[0] == 0.0


def test_mixture_moments_total_variance_with_monte_carlo_crosscheck():
    a = 3.0
    mix = two_blob_mixture(a)
    m = moments(mix)
    assert m.sigma_q[0] ** 2 == pytest.approx(1 + a * a, rel=1e-14)
    assert m.sigma_k[0] == pytest.approx(1.0, rel=1e-14)
    mc = moments(sample(mix, 1_000_000, seed=7))
    assert mc.sigma_q[0] ** 2 == pytest.approx(1 + a * a, rel=1e-2)
    assert mc.sigma_k[0] == pytest.approx(1.0, rel=5e-3)


def test_large_ensemble_moments():
    m = moments(sample(STANDARD, 1_000_000, seed=3))
    assert 0.997 <= m.sigma_q[0] <= 1.003
    assert 0.997 <= m.sigma_k[0] <= 1.003


def test_degenerate_ensemble():
    with pytest.raises(DegenerateDistributionError):
        moments(ParticleEnsemble(np.ones((10, 2))))


def test_sampling_is_deterministic():
    a = sample(ELONGATED, 100_000, seed=11)
    b = sample(ELONGATED, 100_000, seed=11)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.seed == 11


def test_sample_ks_statistic():
    ens = sample(STANDARD, 100_000, seed=5)
    d = stats.kstest(ens.points[:, 0], "norm").statistic
    assert d < 1.63 / math.sqrt(100_000)


def test_mixture_sample_symmetry():
    ens = sample(two_blob_mixture(3.0), 100_000, seed=9)
    frac = np.mean(ens.points[:, 0] > 0)
    assert 0.495 <= frac <= 0.505


def test_grid_sampling_and_zero_grid():
    with pytest.raises(InvalidDistributionError):
        GridDensity([[0, 1], [0, 1]], np.zeros((4, 4)))
    g = GridDensity.uniform([[0, 2], [0, 2]], (5, 5))
    ens = sample(g, 10_000, seed=1)
    assert ens.points.min() >= 0 and ens.points.max() <= 2


def test_pushforward_linear_gaussian_exact():
    out = pushforward(ELONGATED, scale_map(2.0))
    np.testing.assert_allclose(out.cov, np.diag([16.0, 0.0625]), rtol=1e-15)
    assert np.linalg.det(out.cov) == pytest.approx(1.0, abs=1e-12)


def test_pushforward_rotation_by_quarter_pi():
    out = pushforward(ELONGATED, rotate_map(math.pi / 4))
    np.testing.assert_allclose(out.cov, [[2.125, -1.875], [-1.875, 2.125]], atol=1e-14)
    assert np.linalg.det(out.cov) == pytest.approx(1.0, abs=1e-12)


def test_pushforward_ensemble_keeps_weights(rng):
    w = rng.random(50)
    w /= w.sum()
    ens = ParticleEnsemble(rng.normal(size=(50, 2)), w)
    out = pushforward(ens, step_map(pendulum(), "leapfrog", 0.1))
    assert len(out) == 50
    np.testing.assert_array_equal(out.weights, ens.weights)


def test_pushforward_nonlinear_gaussian_becomes_ensemble():
    out = pushforward(STANDARD, step_map(pendulum(), "leapfrog", 0.1), count=1000, seed=0)
    assert isinstance(out, ParticleEnsemble) and len(out) == 1000
    assert abs(out.weights.sum() - 1.0) < 1e-12


def test_pushforward_mixture_linear():
    out = pushforward(two_blob_mixture(2.0), rotate_map(0.3))
    assert isinstance(out, GaussianMixture)
    _, cov_before = mean_and_cov(two_blob_mixture(2.0))
    _, cov_after = mean_and_cov(out)
    assert np.linalg.det(cov_after) == pytest.approx(np.linalg.det(cov_before), rel=1e-12)


def test_grid_pushforward_normalization():
    g = to_grid(ELONGATED, bounds=[[-16, 16], [-4, 4]], shape=(200, 200))
    for m in (rotate_map(math.pi / 4), scale_map(2.0), dilate_map(1.5)):
        out = pushforward(g, m)
        assert abs(out.remap_mass - 1.0) < 1e-6
    nonlinear = pushforward(to_grid(STANDARD, shape=(120, 120)), step_map(pendulum(), "leapfrog", 0.2))
    assert abs(nonlinear.remap_mass - 1.0) < 1e-3


def test_grid_pushforward_needs_inverse():
    m = PhaseMap(n=1, forward=lambda x: x**3)
    with pytest.raises(UnsupportedPushforwardError):
        pushforward(GridDensity.uniform([[0, 1], [0, 1]]), m)


def test_grid_moments_are_exact_for_uniform():
    L = 3.0
    m = moments(GridDensity.uniform([[0, L], [0, L]]))
    assert m.sigma_q[0] ** 2 == pytest.approx(L * L / 12, rel=1e-14)
    assert m.mean_q[0] == pytest.approx(L / 2)


def test_density_at():
    assert density_at(STANDARD, np.zeros(2)) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    sq, sk = 1.7, 0.3
    g = AnalyticGaussian.uncorrelated(sq, sk, mean_q=0.4, mean_k=-1.0)
    assert density_at(g, g.mean) == pytest.approx(1 / (2 * math.pi * sq * sk), rel=1e-14)
    assert density_at(GridDensity.uniform([[0, 1], [0, 1]]), np.array([0.3, 0.6])) == 1.0
    assert density_at(GridDensity.uniform([[0, 1], [0, 1]]), np.array([1.3, 0.6])) == 0.0
    with pytest.raises(UnsupportedRepresentationError):
        density_at(sample(STANDARD, 10, seed=0), np.zeros(2))


def test_density_matches_scipy_for_correlated(rng):
    cov = np.array([[2.0, 0.7], [0.7, 0.5]])
    g = AnalyticGaussian([0.1, 0.2], cov)
    x = rng.normal(size=(20, 2))
    np.testing.assert_allclose(density_at(g, x), stats.multivariate_normal([0.1, 0.2], cov).pdf(x), rtol=1e-12)


def _random_matrix(vals):
    return np.array(vals, dtype=float).reshape(2, 2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_covariance_determinant_transforms_with_det_squared(vals):
    M = _random_matrix(vals)
    detM = np.linalg.det(M)
    if abs(detM) < 1e-2:
        return
    out = pushforward(ELONGATED, PhaseMap.linear(M))
    assert np.linalg.det(out.cov) == pytest.approx(detM**2 * np.linalg.det(ELONGATED.cov), rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(-math.pi, math.pi), a=st.floats(0.2, 5.0))
def test_canonical_linear_maps_preserve_covariance_determinant(theta, a):
    M = rotate_map(theta).matrix @ scale_map(a).matrix
    out = pushforward(ELONGATED, PhaseMap.linear(M))
    assert abs(np.linalg.det(out.cov) - 1.0) <= 1e-12 * max(1.0, np.abs(out.cov).max() ** 2)


def test_sample_moments_converge():
    g = AnalyticGaussian([0.5, -0.2], [[2.0, 0.4], [0.4, 0.5]])
    exact = moments(g)
    m = moments(sample(g, 1_000_000, seed=2))
    for name in ("sigma_q", "sigma_k"):
        assert abs(getattr(m, name)[0] / getattr(exact, name)[0] - 1) < 5e-3


def test_ensemble_csv_round_trip(rng):
    ens = ParticleEnsemble(rng.normal(size=(20, 4)))
    buf = io.StringIO()
    write_ensemble_csv(ens, buf)
    header = buf.getvalue().splitlines()[0]
    assert header == "q1,q2,k1,k2,weight"
    back = read_ensemble_csv(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.points, ens.points)
    with pytest.raises(InvalidDistributionError):
        read_ensemble_csv(io.StringIO("a,b,c\n1,2,3\n"))
