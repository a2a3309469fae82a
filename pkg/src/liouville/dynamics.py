"""Hamiltonian flows of phase-space distributions.

Quadratic Hamiltonians carry an exact flow matrix M(t) so Gaussians evolve as
Sigma(t) = M Sigma M^T. Everything else is stepped by a symplectic integrator,
one particle at a time (vectorized, no cross-particle coupling inside a step).
Diagnostics reduce with numpy's fixed-order pairwise summation, so results do
not depend on scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import entropy as entropy_mod
from .distributions import (
    AnalyticGaussian,
    Distribution,
    GaussianMixture,
    GridDensity,
    Moments,
    ParticleEnsemble,
    moments,
    pushforward,
    sample,
)
from .errors import (
    ConfigError,
    DomainError,
    LiouvilleError,
    UnsupportedRepresentationError,
    UnsupportedSchemeError,
)
from .phase_space import PhaseMap, as_array, split
from .rng import substream

SCHEMES = ("symplectic_euler", "leapfrog", "yoshida4")

_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_W1 = 1.0 / (2.0 - _CBRT2)
YOSHIDA_W0 = -_CBRT2 / (2.0 - _CBRT2)


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """Energy function with gradients.

    For separable systems ``grad_q`` depends on q only and ``grad_k`` on k
    only. ``linear_flow(t)`` returns the exact 2n x 2n flow matrix, and
    ``quadratic_form`` the matrix A with H = x^T A x / 2, for quadratic H.
    """

    name: str
    n: int
    H: Callable
    grad_q: Callable
    grad_k: Callable
    separable: bool = True
    linear_flow: Optional[Callable[[float], np.ndarray]] = None
    quadratic_form: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def energy(self, x) -> np.ndarray:
        q, k = split(as_array(x))
        return self.H(q, k)

    def vector_field(self, x) -> np.ndarray:
        q, k = split(as_array(x))
        return np.concatenate([self.grad_k(q, k), -self.grad_q(q, k)], axis=-1)


def check_gradients(sys: HamiltonianSystem, points, rtol: float = 1e-6) -> float:
    """Largest relative mismatch between analytic gradients and central differences of H."""
    worst = 0.0
    for x in np.atleast_2d(points):
        x = np.asarray(x, dtype=float)
        h = 1e-6 * max(1.0, float(np.max(np.abs(x))))
        fd = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd[j] = (sys.energy(x + e) - sys.energy(x - e)) / (2 * h)
        q, k = split(x)
        grad = np.concatenate([sys.grad_q(q, k), sys.grad_k(q, k)])
        scale = max(1.0, float(np.max(np.abs(grad))))
        worst = max(worst, float(np.max(np.abs(grad - fd))) / scale)
    return worst


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "leapfrog"
    dt: float = 1e-3
    t_final: float = 10.0
    output_every: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}", "integrator.scheme")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be positive", "integrator.dt")
        if not (np.isfinite(self.t_final) and self.t_final >= 0):
            raise ConfigError("t_final must be >= 0", "integrator.t_final")
        if 0 < self.t_final < self.dt:
            raise ConfigError("t_final must be 0 or >= dt", "integrator.t_final")
        if int(self.output_every) != self.output_every or self.output_every < 1:
            raise ConfigError("output_every must be a positive integer", "integrator.output_every")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


# -- integrators ---------------------------------------------------------------

def _check(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite {what} during integration")


def _advance(sys: HamiltonianSystem, q: np.ndarray, k: np.ndarray, scheme: str, dt: float,
             n_steps: int, adjoint: bool = False) -> None:
    """Advance (q, k) in place by ``n_steps`` steps of ``scheme``."""
    if n_steps <= 0:
        return
    if scheme not in SCHEMES:
        raise UnsupportedSchemeError(f"unknown scheme {scheme!r}")
    if scheme != "symplectic_euler" and not sys.separable:
        raise UnsupportedSchemeError(f"{scheme} needs a separable Hamiltonian; {sys.name} is not")
    if scheme == "symplectic_euler":
        if sys.separable:
            _euler_separable(sys, q, k, dt, n_steps, adjoint)
        else:
            _euler_implicit(sys, q, k, dt, n_steps, adjoint)
    elif scheme == "leapfrog":
        _leapfrog(sys, q, k, dt, n_steps)
    else:
        for _ in range(n_steps):
            for w in (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1):
                _leapfrog(sys, q, k, w * dt, 1)
    _check(q, "position")
    _check(k, "momentum")


def _leapfrog(sys, q, k, dt, n_steps):
    # kick-drift-kick; consecutive half kicks are merged into full kicks
    g = sys.grad_q(q, k)
    _check(g, "gradient")
    k -= 0.5 * dt * g
    for i in range(n_steps):
        q += dt * sys.grad_k(q, k)
        g = sys.grad_q(q, k)
        k -= (dt if i < n_steps - 1 else 0.5 * dt) * g
    _check(g, "gradient")


def _euler_separable(sys, q, k, dt, n_steps, adjoint):
    for _ in range(n_steps):
        if adjoint:
            q += dt * sys.grad_k(q, k)
            k -= dt * sys.grad_q(q, k)
        else:
            k -= dt * sys.grad_q(q, k)
            q += dt * sys.grad_k(q, k)


def _euler_implicit(sys, q, k, dt, n_steps, adjoint, tol=1e-14, max_iter=100):
    # fixed-point solve of the implicit half of symplectic Euler
    for _ in range(n_steps):
        if adjoint:
            q_new = q.copy()
            for _ in range(max_iter):
                prev = q_new
                q_new = q + dt * sys.grad_k(q_new, k)
                if np.max(np.abs(q_new - prev)) <= tol * max(1.0, np.max(np.abs(q_new))):
                    break
            k -= dt * sys.grad_q(q_new, k)
            q[...] = q_new
        else:
            k_new = k.copy()
            for _ in range(max_iter):
                prev = k_new
                k_new = k - dt * sys.grad_q(q, k_new)
                if np.max(np.abs(k_new - prev)) <= tol * max(1.0, np.max(np.abs(k_new))):
                    break
            q += dt * sys.grad_k(q, k_new)
            k[...] = k_new


def propagate(sys: HamiltonianSystem, x, scheme: str, dt: float, n_steps: int,
              adjoint: bool = False) -> np.ndarray:
    """Return ``x`` (shape ``(..., 2n)``) after ``n_steps`` integrator steps."""
    x = np.array(as_array(x), dtype=float)
    q, k = split(x)
    q, k = q.copy(), k.copy()
    _check(x, "initial state")
    _advance(sys, q, k, scheme, dt, n_steps, adjoint)
    return np.concatenate([q, k], axis=-1)


def step(sys: HamiltonianSystem, x, scheme: str = "leapfrog", dt: float = 1e-3, adjoint: bool = False):
    """One integrator step. Accepts a ``PhasePoint`` or an array ``(..., 2n)``."""
    from .phase_space import PhasePoint

    out = propagate(sys, x, scheme, dt, 1, adjoint)
    return PhasePoint.from_array(out) if isinstance(x, PhasePoint) else out


def backward(sys: HamiltonianSystem, x, scheme: str, dt: float, n_steps: int) -> np.ndarray:
    """Exact inverse of ``propagate(sys, x, scheme, dt, n_steps)``.

    Leapfrog and Yoshida are symmetric and invert with -dt; symplectic Euler
    inverts with its adjoint at -dt.
    """
    return propagate(sys, x, scheme, -dt, n_steps, adjoint=(scheme == "symplectic_euler"))


def step_map(sys: HamiltonianSystem, scheme: str, dt: float) -> PhaseMap:
    """One step viewed as a phase-space map (finite-difference Jacobian)."""
    return PhaseMap(
        n=sys.n,
        forward=lambda x: propagate(sys, x, scheme, dt, 1),
        inverse=lambda y: backward(sys, y, scheme, dt, 1),
        name=f"{sys.name}:{scheme}(dt={dt})",
    )


def flow_map(sys: HamiltonianSystem, t: float) -> PhaseMap:
    if sys.linear_flow is None:
        raise UnsupportedRepresentationError(f"{sys.name} has no exact linear flow")
    return PhaseMap.linear(sys.linear_flow(t), name=f"{sys.name}:flow(t={t})")


# -- trajectory diagnostics ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryRow:
    t: float
    moments: Moments
    entropy: entropy_mod.EntropyEstimate
    product: float
    energy: float
    bound: float


@dataclass(eq=False)
class TrajectoryRecord:
    rows: list
    final: Distribution
    entropy_initial: float

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        if name == "entropy":
            return np.array([r.entropy.value for r in self.rows])
        if name == "entropy_stderr":
            return np.array([np.nan if r.entropy.stderr is None else r.entropy.stderr for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows])


@dataclass(frozen=True)
class EntropyConfig:
    method: str = "knn"
    k: int = entropy_mod.DEFAULT_K
    jitter: bool = False


def mean_energy(sys: HamiltonianSystem, dist: Distribution) -> float:
    if isinstance(dist, ParticleEnsemble):
        return float(dist.weights @ sys.energy(dist.points))
    if isinstance(dist, AnalyticGaussian) and sys.quadratic_form is not None:
        A = sys.quadratic_form
        return float(0.5 * (np.trace(A @ dist.cov) + dist.mean @ A @ dist.mean))
    if isinstance(dist, GridDensity):
        mass = dist.values.ravel() * dist.cell_volume
        return float(mass @ sys.energy(dist.centers()))
    return float("nan")


def _diagnose(sys, dist, t, ent_cfg: EntropyConfig, seed, entropy_initial=None):
    from .uncertainty import bound_from_entropy

    m = moments(dist)
    try:
        est = entropy_mod.estimate(dist, ent_cfg.method, k=ent_cfg.k, jitter=ent_cfg.jitter, seed=seed)
    except LiouvilleError as exc:
        raise type(exc)(f"t={t:.12g}: {exc}") from exc
    if entropy_initial is None:
        entropy_initial = est.value
    return TrajectoryRow(
        t=float(t),
        moments=m,
        entropy=est,
        product=float(np.prod(m.products)),
        energy=mean_energy(sys, dist),
        bound=bound_from_entropy(entropy_initial, sys.n),
    ), entropy_initial


def _output_steps(cfg: IntegratorConfig) -> list:
    n = cfg.n_steps
    steps = list(range(0, n + 1, cfg.output_every))
    if steps[-1] != n:
        steps.append(n)
    return steps


def prepare(sys: HamiltonianSystem, dist: Distribution, ent_cfg: EntropyConfig, count: int = 100_000,
            seed=0) -> Distribution:
    """Pick the representation that ``evolve`` will actually transport."""
    if isinstance(dist, AnalyticGaussian) and sys.linear_flow is not None:
        return dist
    if isinstance(dist, GridDensity) and sys.linear_flow is not None:
        return dist
    if isinstance(dist, (AnalyticGaussian, GaussianMixture, GridDensity)):
        return sample(dist, count, substream(seed, "sampling"))
    return dist


def evolve(sys: HamiltonianSystem, dist: Distribution, cfg: IntegratorConfig,
           ent_cfg: EntropyConfig = EntropyConfig(), count: int = 100_000, seed=0) -> TrajectoryRecord:
    """Transport ``dist`` under ``sys`` and record diagnostics every ``output_every`` steps.

    Gaussians and grids use the exact flow when the system has one; other
    inputs are converted to a ``count``-particle ensemble and integrated. The
    uncertainty bound in every row uses the entropy at t = 0.
    """
    dist = prepare(sys, dist, ent_cfg, count, seed)
    if ent_cfg.method == "analytic" and not isinstance(dist, AnalyticGaussian):
        raise UnsupportedRepresentationError("analytic entropy needs an analytic Gaussian with an exact flow")
    rows = []
    row, I0 = _diagnose(sys, dist, 0.0, ent_cfg, seed)
    rows.append(row)
    steps = _output_steps(cfg)
    if isinstance(dist, ParticleEnsemble):
        q, k = split(np.array(dist.points))
        q, k = q.copy(), k.copy()
        done = 0
        current = dist
        for s in steps[1:]:
            try:
                _advance(sys, q, k, cfg.scheme, cfg.dt, s - done)
            except DomainError as exc:
                raise DomainError(f"t={s * cfg.dt:.12g}: {exc}") from exc
            done = s
            current = ParticleEnsemble(np.concatenate([q, k], axis=1), dist.weights, seed=dist.seed)
            rows.append(_diagnose(sys, current, s * cfg.dt, ent_cfg, seed, I0)[0])
        final = current
    else:
        final = dist
        for s in steps[1:]:
            t = s * cfg.dt
            final = pushforward(dist, flow_map(sys, t))
            rows.append(_diagnose(sys, final, t, ent_cfg, seed, I0)[0])
    return TrajectoryRecord(rows=rows, final=final, entropy_initial=I0)


def round_trip_error(sys: HamiltonianSystem, ens: ParticleEnsemble, cfg: IntegratorConfig) -> float:
    """Max per-coordinate deviation after evolving forward to t_final and back."""
    fwd = propagate(sys, ens.points, cfg.scheme, cfg.dt, cfg.n_steps)
    back = backward(sys, fwd, cfg.scheme, cfg.dt, cfg.n_steps)
    return float(np.max(np.abs(back - ens.points)))


@dataclass(frozen=True, eq=False)
class CentroidTrack:
    times: np.ndarray
    centroid: np.ndarray
    point: np.ndarray
    deviation: np.ndarray

    @property
    def envelope(self) -> np.ndarray:
        """Running maximum of the deviation (nondecreasing by construction)."""
        return np.maximum.accumulate(self.deviation)


def centroid_track(sys: HamiltonianSystem, dist: Distribution, cfg: IntegratorConfig,
                   count: int = 100_000, seed=0) -> CentroidTrack:
    """Compare the ensemble centroid with a single particle started at the initial mean."""
    dist = prepare(sys, dist, EntropyConfig(), count, seed)
    steps = _output_steps(cfg)
    times = np.array(steps, dtype=float) * cfg.dt
    mean0 = moments(dist).mean
    cents, pts = [], []
    if isinstance(dist, ParticleEnsemble):
        x = np.array(dist.points)
        p = mean0.copy()
        done = 0
        for s in steps:
            x = propagate(sys, x, cfg.scheme, cfg.dt, s - done)
            p = propagate(sys, p, cfg.scheme, cfg.dt, s - done)
            done = s
            cents.append(dist.weights @ x)
            pts.append(p)
    else:
        for t in times:
            M = sys.linear_flow(t)
            cents.append(moments(pushforward(dist, PhaseMap.linear(M))).mean)
            pts.append(M @ mean0)
    cents, pts = np.array(cents), np.array(pts)
    return CentroidTrack(times, cents, pts, np.max(np.abs(cents - pts), axis=1))
