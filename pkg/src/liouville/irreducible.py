"""Internal-variable transforms of an irreducible system.

The internal pair (U, V) has equal spread sigma and no correlation. The
transforms U' = a U + b V, V' = -b U + a V form a family closed under
composition and are labelled by c = a + ib: composing transforms multiplies
their labels, |c| scales sigma, and the U-U' Pearson coefficient is
a / |c| = cos(arg c).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidTransformError, UnsupportedError
from .rng import make_rng


@dataclass(frozen=True)
class InternalState:
    sigma: float = 1.0
    corr_uv: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be positive")
        if not abs(self.corr_uv) < 1:
            raise ValueError("corr_uv must lie in (-1, 1)")


@dataclass(frozen=True)
class InternalTransform:
    c: complex

    def __post_init__(self):
        c = complex(self.c)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise InvalidTransformError("transform coefficients must be finite")
        if c == 0:
            raise InvalidTransformError("a = b = 0 is not a transform")
        object.__setattr__(self, "c", c)

    @classmethod
    def from_ab(cls, a: float, b: float) -> "InternalTransform":
        return cls(complex(a, b))

    @property
    def a(self) -> float:
        return self.c.real

    @property
    def b(self) -> float:
        return self.c.imag

    @property
    def norm(self) -> float:
        return abs(self.c)

    @property
    def phase(self) -> float:
        return cmath.phase(self.c)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [-self.b, self.a]])

    def __call__(self, u, v):
        """Apply to samples: returns (U', V')."""
        return self.a * u + self.b * v, -self.b * u + self.a * v


class TransformResult(NamedTuple):
    state: InternalState
    pearson: float


def apply(t: InternalTransform, s: InternalState) -> TransformResult:
    """New common spread |c| sigma and the predicted corr(U, U') = a / |c|."""
    if s.corr_uv != 0:
        raise UnsupportedError("transforms are defined on the uncorrelated reference configuration")
    # U', V' stay uncorrelated with equal variance, so the family is closed
    return TransformResult(InternalState(t.norm * s.sigma, 0.0), t.a / t.norm)


def compose(t1: InternalTransform, t2: InternalTransform) -> InternalTransform:
    """Transform equal to applying ``t2`` first and then ``t1``."""
    return InternalTransform(t1.c * t2.c)


def invariant_integral(s: InternalState) -> float:
    """sigma_U * sigma_V = sigma^2, proportional to the integral of the unit density."""
    return s.sigma**2


def draw_internal(count: int, sigma: float = 1.0, seed=None, kind: str = "uniform"):
    """Independent (U, V) samples with zero mean and standard deviation ``sigma``."""
    rng = make_rng(seed)
    if kind == "uniform":
        half = math.sqrt(3.0) * sigma
        u, v = rng.uniform(-half, half, (2, count))
    elif kind == "gaussian":
        u, v = rng.normal(0.0, sigma, (2, count))
    else:
        raise ValueError(f"unknown generator {kind!r}")
    return u, v


@dataclass(frozen=True)
class MonteCarloCheck:
    sigma_u: float
    sigma_v: float
    pearson_u_uhat: float
    pearson_uhat_vhat: float

    @property
    def phase(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.pearson_u_uhat)))


def monte_carlo(transforms, samples: int = 1_000_000, sigma: float = 1.0, seed=0,
                kind: str = "uniform") -> MonteCarloCheck:
    """Apply one transform, or a sequence applied left to right, to sampled (U, V)."""
    if isinstance(transforms, InternalTransform):
        transforms = [transforms]
    u, v = draw_internal(samples, sigma, seed, kind)
    uh, vh = u, v
    for t in transforms:
        uh, vh = t(uh, vh)
    return MonteCarloCheck(
        sigma_u=float(np.std(uh)),
        sigma_v=float(np.std(vh)),
        pearson_u_uhat=float(np.corrcoef(u, uh)[0, 1]),
        pearson_uhat_vhat=float(np.corrcoef(uh, vh)[0, 1]),
    )


def summary(a: float, b: float, samples: int = 100_000, seed=0) -> dict:
    """Everything the ``internal`` CLI command prints."""
    t = InternalTransform.from_ab(a, b)
    res = apply(t, InternalState())
    mc = monte_carlo(t, samples=samples, seed=seed)
    return {
        "norm": t.norm,
        "phase": t.phase,
        "sigma_factor": res.state.sigma,
        "predicted_pearson": res.pearson,
        "mc_pearson": mc.pearson_u_uhat,
        "mc_error": abs(mc.pearson_u_uhat - res.pearson),
    }
