"""Classical uncertainty relation between spread and entropy.

At fixed entropy I the uncorrelated Gaussian has the smallest sigma_q * sigma_k,
and its entropy is ln(2 pi e sigma_q sigma_k). Hence every distribution obeys

    sigma_q * sigma_k >= exp(I) / (2 pi e)

with equality exactly for uncorrelated Gaussian packets. Because Hamiltonian
flow conserves I, the initial entropy sets a floor on the spread for all times.
Note the direction: it is a lower bound on the spread.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import entropy as entropy_mod
from .distributions import (
    AnalyticGaussian,
    Distribution,
    GaussianMixture,
    GridDensity,
    ParticleEnsemble,
    moments,
    sample,
)
from .rng import substream

TWO_PI_E = 2 * np.pi * np.e
ANALYTIC_TOL = 1e-9


def bound_from_entropy(I0: float, n: int = 1) -> float:
    """exp(I0) / (2 pi e)^n, the smallest spread product reachable at entropy I0."""
    if not np.isfinite(I0):
        raise ValueError("entropy must be finite")
    return float(np.exp(I0 - n * np.log(TWO_PI_E)))


def minimal_spread_distribution(I0: float, means=(0.0, 0.0)) -> AnalyticGaussian:
    """Uncorrelated Gaussian with sigma_q = sigma_k whose entropy is ``I0``.

    For n > 1 degrees of freedom the entropy is split evenly across pairs.
    """
    means = np.asarray(means, dtype=float)
    n = means.size // 2
    sigma = np.sqrt(bound_from_entropy(I0 / n, 1))
    return AnalyticGaussian(means, np.eye(2 * n) * sigma**2)


@dataclass(frozen=True)
class PairReport:
    index: int
    product: float
    entropy: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class QuantumComparison:
    floor: float
    entropy: float = 0.0
    label: str = "pure state: 0"


def quantum_comparison(hbar_like: float = 1.0) -> QuantumComparison:
    """Quantum spread floor hbar/2 and the fixed pure-state entropy 0, for side-by-side reports."""
    if not (np.isfinite(hbar_like) and hbar_like > 0):
        raise ValueError("hbar_like must be positive")
    return QuantumComparison(floor=0.5 * hbar_like)


@dataclass(frozen=True)
class UncertaintyReport:
    product: float
    entropy_initial: float
    bound: float
    ratio: float
    saturated: bool
    tol: float
    stderr: Optional[float] = None
    method: str = "analytic"
    pairs: tuple = field(default=())
    quantum: Optional[QuantumComparison] = None

    def to_dict(self) -> dict:
        out = {
            "product": self.product,
            "entropy": self.entropy_initial,
            "bound": self.bound,
            "ratio": self.ratio,
            "saturated": self.saturated,
            "quantum_floor": None if self.quantum is None else self.quantum.floor,
        }
        if self.quantum is not None:
            out["quantum_entropy"] = self.quantum.entropy
        out["method"] = self.method
        out["stderr"] = self.stderr
        if len(self.pairs) > 1:
            out["pairs"] = [vars(p) for p in self.pairs]
        return out


def _marginal(dist: Distribution, i: int, n: int) -> Distribution:
    """The (q_i, k_i) marginal of a multi-dof distribution."""
    idx = [i, n + i]
    if isinstance(dist, AnalyticGaussian):
        return AnalyticGaussian(dist.mean[idx], dist.cov[np.ix_(idx, idx)])
    if isinstance(dist, GaussianMixture):
        return GaussianMixture(dist.weights, [_marginal(c, i, n) for c in dist.components])
    if isinstance(dist, ParticleEnsemble):
        return ParticleEnsemble(dist.points[:, idx], dist.weights)
    if isinstance(dist, GridDensity):
        axes = tuple(a for a in range(2 * n) if a not in idx)
        widths = dist.widths[list(axes)]
        values = dist.values.sum(axis=axes) * float(np.prod(widths))
        return GridDensity.normalized(dist.bounds[idx], values)
    raise TypeError(type(dist).__name__)


def check_bound(dist: Distribution, method: str = "analytic", hbar_like: Optional[float] = None,
                **entropy_kwargs) -> UncertaintyReport:
    """Compare the spread product with the bound implied by the entropy of ``dist``.

    ``saturated`` holds when the ratio is within tolerance of 1: 1e-9 for exact
    entropies, 3 stderr for estimates. With several degrees of freedom the
    top-level numbers are totals (product over pairs vs exp(I)/(2 pi e)^n) and
    ``pairs`` holds one report per (q_i, k_i) marginal.
    """
    n = dist.n
    if method == "knn" and not isinstance(dist, ParticleEnsemble):
        seed = entropy_kwargs.get("seed", 0)
        dist = sample(dist, entropy_kwargs.pop("count", 100_000), substream(seed, "sampling"))
    m = moments(dist)
    est = entropy_mod.estimate(dist, method, **entropy_kwargs)
    product = float(np.prod(m.products))
    bound = bound_from_entropy(est.value, n)
    ratio = product / bound
    tol = ANALYTIC_TOL if est.stderr is None else 3.0 * est.stderr
    pairs = []
    if n > 1:
        for i in range(n):
            marg = _marginal(dist, i, n)
            e_i = entropy_mod.estimate(marg, method, **entropy_kwargs)
            p_i = float(m.products[i])
            b_i = bound_from_entropy(e_i.value, 1)
            pairs.append(PairReport(i, p_i, e_i.value, b_i, p_i / b_i))
    else:
        pairs.append(PairReport(0, product, est.value, bound, ratio))
    return UncertaintyReport(
        product=product,
        entropy_initial=est.value,
        bound=bound,
        ratio=float(ratio),
        saturated=bool(abs(ratio - 1.0) <= tol),
        tol=float(tol),
        stderr=est.stderr,
        method=est.method,
        pairs=tuple(pairs),
        quantum=None if hbar_like is None else quantum_comparison(hbar_like),
    )

