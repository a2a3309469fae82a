"""Differential entropy -int rho ln rho, in nats.

Closed form for Gaussians, plug-in sum for grids, and the Kozachenko-Leonenko
nearest-neighbor estimator for equal-weight ensembles.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .distributions import (
    AnalyticGaussian,
    GaussianMixture,
    GridDensity,
    ParticleEnsemble,
    pushforward,
    sample,
    to_grid,
)
from .errors import (
    DuplicatePointsError,
    InsufficientSamplesError,
    UnsupportedRepresentationError,
)
from .phase_space import PhaseMap
from .rng import substream

METHODS = ("analytic", "grid", "knn")
DEFAULT_K = 4
BOOTSTRAP_RESAMPLES = 20
JITTER_SCALE = 1e-12


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    method: str
    stderr: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite entropy estimate {self.value}")
        if self.stderr is not None and self.stderr < 0:
            raise ValueError("stderr must be nonnegative")

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "stderr": self.stderr}


def entropy_analytic(g: AnalyticGaussian) -> EntropyEstimate:
    """ln((2 pi e)^n sqrt(det cov)); for n = 1 and no correlation, ln(2 pi e sigma_q sigma_k).

    A piecewise-constant grid density also has an exact entropy, the cell sum.
    """
    if isinstance(g, GridDensity):
        return EntropyEstimate(entropy_grid(g).value, "analytic")
    if not isinstance(g, AnalyticGaussian):
        raise UnsupportedRepresentationError(f"no closed-form entropy for {type(g).__name__}")
    sign, logdet = np.linalg.slogdet(g.cov)
    value = g.n * np.log(2 * np.pi * np.e) + 0.5 * logdet
    return EntropyEstimate(float(value), "analytic")


def entropy_grid(g: GridDensity) -> EntropyEstimate:
    v = g.values[g.values > 0]
    return EntropyEstimate(float(-np.sum(v * np.log(v)) * g.cell_volume), "grid_plugin")


def _workers() -> int:
    threads = int(os.environ.get("LIOUVILLE_THREADS", "0") or 0)
    return -1 if threads <= 0 else threads


def knn_distances(points: np.ndarray, k: int, nearest: bool = False):
    """Euclidean distance from every point to its k-th nearest other point.

    With ``nearest`` the distance to the closest other point is returned too.
    """
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=k + 1, workers=_workers())
    return (dist[:, k], dist[:, 1]) if nearest else dist[:, k]


def entropy_knn(ens: ParticleEnsemble, k: int = DEFAULT_K, jitter: bool = False, seed=0) -> EntropyEstimate:
    """Kozachenko-Leonenko estimate.

    H = psi(N) - psi(k) + ln V_d + (d/N) sum_i ln eps_i, with V_d the volume of
    the unit d-ball and eps_i the distance to the k-th neighbor. The stderr is a
    seeded 20-resample bootstrap of the per-particle terms.
    """
    if not isinstance(ens, ParticleEnsemble):
        raise UnsupportedRepresentationError("kNN entropy needs a particle ensemble")
    k = int(k)
    N, d = ens.points.shape
    if k < 1:
        raise InsufficientSamplesError("k must be >= 1")
    if N <= k:
        raise InsufficientSamplesError(f"need more than k={k} samples, got {N}")
    if not ens.equal_weights:
        raise UnsupportedRepresentationError("weighted kNN entropy is not supported")
    points = ens.points
    if jitter:
        scale = float(np.max(np.std(points, axis=0)))
        rng = substream(seed, "jitter")
        points = points + rng.uniform(-1.0, 1.0, points.shape) * JITTER_SCALE * max(scale, 1.0)
    eps, first = knn_distances(points, k, nearest=True)
    if np.any(first == 0):
        count = int(np.sum(first == 0))
        raise DuplicatePointsError(f"{count} particles coincide with another particle; rerun with jitter enabled")
    log_unit_ball = 0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1)
    const = digamma(N) - digamma(k) + log_unit_ball
    terms = d * np.log(eps)
    value = const + terms.mean()
    rng = substream(seed, "bootstrap")
    boots = np.array([terms[rng.integers(0, N, N)].mean() for _ in range(BOOTSTRAP_RESAMPLES)])
    return EntropyEstimate(float(value), "knn", float(np.std(boots, ddof=1)))


def estimate(dist, method: str = "knn", k: int = DEFAULT_K, jitter: bool = False, seed=0,
             count: int = 100_000, grid_shape=None) -> EntropyEstimate:
    """Dispatch on ``method``; analytic forms are sampled (kNN) or tabulated (grid) as needed."""
    if method == "analytic":
        return entropy_analytic(dist)
    if method == "grid":
        if isinstance(dist, (AnalyticGaussian, GaussianMixture)):
            dist = to_grid(dist, shape=grid_shape)
        if not isinstance(dist, GridDensity):
            raise UnsupportedRepresentationError(f"grid entropy not available for {type(dist).__name__}")
        return entropy_grid(dist)
    if method == "knn":
        if isinstance(dist, (AnalyticGaussian, GaussianMixture, GridDensity)):
            dist = sample(dist, count, substream(seed, "sampling"))
        return entropy_knn(dist, k=k, jitter=jitter, seed=seed)
    raise ValueError(f"unknown entropy method {method!r}; expected one of {METHODS}")


def entropy_under_map(dist, phase_map: PhaseMap, method: str = "analytic", count: int = 100_000,
                      seed=0, **kwargs) -> tuple[EntropyEstimate, EntropyEstimate]:
    """Entropy before and after pushing ``dist`` through ``phase_map``, same method both times.

    For the kNN method, analytic inputs are sampled once and the same particles
    are mapped, so the difference isolates the effect of the map.
    """
    if method == "knn" and not isinstance(dist, ParticleEnsemble):
        dist = sample(dist, count, substream(seed, "sampling"))
    after_dist = pushforward(dist, phase_map, count=count, seed=substream(seed, "pushforward"))
    if method == "analytic" and not isinstance(after_dist, AnalyticGaussian):
        raise UnsupportedRepresentationError("map is nonlinear; analytic entropy is unavailable after it")
    before = estimate(dist, method, seed=seed, count=count, **kwargs)
    after = estimate(after_dist, method, seed=seed, count=count, **kwargs)
    return before, after
