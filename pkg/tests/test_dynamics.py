import math

import numpy as np
import pytest

from liouville.distributions import AnalyticGaussian, ParticleEnsemble, sample
from liouville.dynamics import (
    SCHEMES,
    EntropyConfig,
    HamiltonianSystem,
    IntegratorConfig,
    backward,
    centroid_track,
    check_gradients,
    evolve,
    propagate,
    step,
    step_map,
)
from liouville.errors import ConfigError, DomainError, UnsupportedSchemeError
from liouville.phase_space import PhasePoint, check_canonical, symplectic_residual
from liouville.scenarios import SYSTEMS, free, harmonic, inverted, pendulum, pendulum_period, quartic

LN_2PIE = math.log(2 * math.pi * math.e)


def _nonseparable():
    # H = (q^2 + k^2)^2 / 4: a nonlinear oscillator whose frequency depends on energy
    def r2(q, k):
        return q * q + k * k

    return HamiltonianSystem(
        name="nonseparable", n=1,
        H=lambda q, k: 0.25 * np.sum(r2(q, k) ** 2, axis=-1),
        grad_q=lambda q, k: q * r2(q, k),
        grad_k=lambda q, k: k * r2(q, k),
        separable=False,
    )


def test_free_flight_is_exact_for_leapfrog():
    out = step(free(), PhasePoint([0.0], [1.0]), "leapfrog", 0.1)
    assert out.q[0] == pytest.approx(0.1, abs=1e-16) and out.k[0] == 1.0


def test_harmonic_leapfrog_period():
    x = propagate(harmonic(), np.array([1.0, 0.0]), "leapfrog", 0.01, 628)
    np.testing.assert_allclose(x, [math.cos(6.28), -math.sin(6.28)], atol=1e-3)


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_step_consistency(scheme, name):
    sys = SYSTEMS[name].factory()
    x = np.array([0.7, -0.4])
    speed = np.linalg.norm(sys.vector_field(x))
    for dt in (1e-2, 1e-3, 1e-4):
        assert np.linalg.norm(step(sys, x, scheme, dt) - x) <= 1.5 * speed * dt


@pytest.mark.parametrize("scheme, order", [("symplectic_euler", 1), ("leapfrog", 2), ("yoshida4", 4)])
def test_convergence_order(scheme, order):
    sys = harmonic()
    x0 = np.array([1.0, 0.0])
    t = 1.0
    exact = sys.linear_flow(t) @ x0
    errs = []
    for n in (20, 40, 80):
        errs.append(np.linalg.norm(propagate(sys, x0, scheme, t / n, n) - exact))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(r - order) < 0.25 for r in rates), rates


def test_splitting_schemes_need_separable():
    sys = _nonseparable()
    for scheme in ("leapfrog", "yoshida4"):
        with pytest.raises(UnsupportedSchemeError):
            step(sys, np.array([0.1, 0.2]), scheme, 0.01)


def test_implicit_euler_on_nonseparable_is_symplectic_and_reversible():
    sys = _nonseparable()
    m = step_map(sys, "symplectic_euler", 0.05)
    assert check_canonical(m, np.random.default_rng(0).uniform(-1, 1, (20, 2)), 1e-6).passed
    x = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    back = backward(sys, propagate(sys, x, "symplectic_euler", 0.01, 200), "symplectic_euler", 0.01, 200)
    assert np.max(np.abs(back - x)) < 1e-9


def test_nan_gradient_is_domain_error():
    sys = HamiltonianSystem(
        name="bad", n=1,
        H=lambda q, k: np.sum(k * k / 2 + q ** 1.5, axis=-1),
        grad_q=lambda q, k: 1.5 * np.sqrt(q),
        grad_k=lambda q, k: k,
    )
    with np.errstate(invalid="ignore"), pytest.raises(DomainError):
        step(sys, np.array([-1.0, 0.0]), "leapfrog", 0.1)


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_registry_gradients_match_finite_differences(name):
    sys = SYSTEMS[name].factory()
    pts = np.random.default_rng(2).uniform(-2, 2, (100, 2))
    assert check_gradients(sys, pts) < 1e-6


@pytest.mark.parametrize("factory", [free, harmonic, inverted, lambda: harmonic(2.5)])
def test_linear_flow_is_a_symplectic_one_parameter_group(factory):
    sys = factory()
    np.testing.assert_array_equal(sys.linear_flow(0.0), np.eye(2))
    for t, s in [(0.3, 0.9), (1.7, -0.4), (2.0, 2.0)]:
        Mt, Ms = sys.linear_flow(t), sys.linear_flow(s)
        assert symplectic_residual(Mt) < 1e-12 * max(1.0, np.abs(Mt).max() ** 2)
        np.testing.assert_allclose(sys.linear_flow(t + s), Mt @ Ms, atol=1e-12 * np.abs(Mt @ Ms).max())
    # the exact flow solves Hamilton's equations: dM/dt = X M with X the vector-field matrix
    h = 1e-6
    dM = (sys.linear_flow(0.5 + h) - sys.linear_flow(0.5 - h)) / (2 * h)
    X = np.array([sys.vector_field(e) for e in np.eye(2)]).T
    np.testing.assert_allclose(dM, X @ sys.linear_flow(0.5), atol=1e-6)


def test_harmonic_omega_two_has_period_pi():
    np.testing.assert_allclose(harmonic(2.0).linear_flow(math.pi), np.eye(2), atol=1e-14)


def test_evolve_harmonic_exact_quarter_period():
    g = AnalyticGaussian([0, 0], np.diag([4.0, 0.25]))
    cfg = IntegratorConfig(dt=math.pi / 400, t_final=math.pi / 4, output_every=100)
    rec = evolve(harmonic(), g, cfg, EntropyConfig("analytic"))
    last = rec.rows[-1]
    assert last.t == pytest.approx(math.pi / 4)
    assert last.moments.sigma_q[0] == pytest.approx(math.sqrt(2.125), rel=1e-13)
    assert last.moments.sigma_k[0] == pytest.approx(math.sqrt(2.125), rel=1e-13)
    assert last.entropy.value == pytest.approx(LN_2PIE, abs=1e-12)
    assert last.product == pytest.approx(2.125, rel=1e-13)
    assert last.product >= rec.rows[0].product


def test_evolve_free_gaussian_shear():
    cfg = IntegratorConfig(dt=0.5, t_final=2.0, output_every=1)
    rec = evolve(free(), AnalyticGaussian([0, 0], np.eye(2)), cfg, EntropyConfig("analytic"))
    np.testing.assert_allclose(rec.final.cov, [[5.0, 2.0], [2.0, 1.0]], atol=1e-14)
    assert np.linalg.det(rec.final.cov) == pytest.approx(1.0, abs=1e-12)
    assert rec.rows[-1].product == pytest.approx(math.sqrt(5), rel=1e-14)
    assert np.ptp(rec.column("entropy")) < 1e-12


def test_evolve_zero_horizon_records_initial_state():
    g = AnalyticGaussian([0.3, 0.1], np.diag([2.0, 0.5]))
    rec = evolve(harmonic(), g, IntegratorConfig(t_final=0.0), EntropyConfig("analytic"))
    assert len(rec.rows) == 1
    row = rec.rows[0]
    assert row.t == 0.0
    assert row.entropy.value == pytest.approx(math.log(2 * math.pi * math.e), abs=1e-14)
    assert row.product == pytest.approx(1.0)


def test_evolve_nonlinear_gaussian_becomes_ensemble():
    g = AnalyticGaussian([1.0, 0.0], np.eye(2) * 0.01)
    rec = evolve(pendulum(), g, IntegratorConfig(dt=0.01, t_final=0.5, output_every=10),
                 EntropyConfig("knn"), count=5000, seed=1)
    assert isinstance(rec.final, ParticleEnsemble) and len(rec.final) == 5000
    assert np.all(np.diff(rec.times) > 0)


@pytest.mark.parametrize("system", [harmonic(2.0), inverted(0.5)], ids=lambda s: s.name)
def test_ensemble_entropy_within_two_stderr(system):
    g = AnalyticGaussian([0.3, -0.2], np.diag([0.5, 0.2]))
    rec = evolve(system, sample(g, 20_000, 4), IntegratorConfig(dt=0.01, t_final=2.0, output_every=25),
                 EntropyConfig("knn"), seed=4)
    ent, se = rec.column("entropy"), rec.column("entropy_stderr")
    assert np.all(np.abs(ent - ent[0]) <= 2 * se)


def test_integrator_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=-1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(scheme="rk4")
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_final=0.05)


def test_centroid_tracks_point_for_linear_flows():
    g = AnalyticGaussian([1.0, -0.5], [[0.7, 0.2], [0.2, 0.3]])
    track = centroid_track(harmonic(1.3), g, IntegratorConfig(dt=0.01, t_final=5.0, output_every=50))
    assert track.deviation.max() <= 1e-12
    ens = sample(g, 20_000, seed=3)
    track = centroid_track(free(), ens, IntegratorConfig(dt=0.01, t_final=3.0, output_every=50))
    assert track.deviation.max() <= 1e-12


def test_centroid_diverges_for_pendulum_blob():
    T = pendulum_period(math.pi / 2)
    g = AnalyticGaussian([math.pi / 2, 0.0], np.eye(2) * 0.25)
    cfg = IntegratorConfig(dt=0.01, t_final=3 * T, output_every=100)
    track = centroid_track(pendulum(), g, cfg, count=5000, seed=0)
    env = track.envelope
    assert np.all(np.diff(env) >= 0)
    assert track.deviation[0] < 1e-12
    assert env[-1] > 5 * env[1]


@pytest.mark.slow
def test_leapfrog_energy_has_no_secular_drift():
    # 10^6 steps: the energy error oscillates at O(dt^2) and does not accumulate
    sys = pendulum()
    x = np.array([[1.0, 0.0], [2.0, 0.3], [0.2, -0.5]])
    e0 = sys.energy(x)
    devs = []
    for _ in range(1000):
        x = propagate(sys, x, "leapfrog", 0.05, 1000)
        devs.append(np.abs(sys.energy(x) - e0))
    devs = np.array(devs)
    assert devs.max() < 0.05**2
    first, last = devs[:100].max(axis=0), devs[-100:].max(axis=0)
    assert np.all(last < 2 * first)


def test_quartic_and_inverted_are_integrable_stepwise():
    for sys in (quartic(0.5), inverted(0.8)):
        x = np.array([[0.4, 0.2]])
        back = backward(sys, propagate(sys, x, "yoshida4", 0.01, 300), "yoshida4", 0.01, 300)
        assert np.max(np.abs(back - x)) < 1e-12
