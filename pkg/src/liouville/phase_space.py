"""Phase-space points, maps, and the canonical (symplectic) condition.

Coordinates are always ordered ``(q_1..q_n, k_1..k_n)``. Maps act on arrays
of shape ``(..., 2n)`` so that a whole ensemble can be pushed through one call.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class PhasePoint:
    q: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        if q.ndim != 1 or q.shape != k.shape or q.size < 1:
            raise ValueError("q and k must be 1-d vectors of equal length n >= 1")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k))):
            raise DomainError("phase point has non-finite components")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return self.q.size

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.k])

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise ValueError("expected a flat array of even length 2n")
        n = x.size // 2
        return cls(x[:n], x[n:])


def as_array(x) -> np.ndarray:
    if isinstance(x, PhasePoint):
        return x.to_array()
    return np.asarray(x, dtype=float)


def split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Views on the q and k halves of ``x[..., 2n]``."""
    n = x.shape[-1] // 2
    return x[..., :n], x[..., n:]


def symplectic_form(n: int) -> np.ndarray:
    """Return Omega = [[0, I], [-I, 0]] for the (q, k) ordering."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass(frozen=True, eq=False)
class PhaseMap:
    """A differentiable map of 2n-dimensional phase space.

    ``forward`` must accept arrays of shape ``(..., 2n)``. ``jacobian`` (if
    given) takes a single point ``(2n,)`` and returns a ``(2n, 2n)`` matrix;
    otherwise central finite differences are used. ``matrix`` marks a linear
    map ``x -> M x``; ``inverse`` is needed for grid pushforward of
    nonlinear maps.
    """

    n: int
    forward: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    matrix: Optional[np.ndarray] = None
    name: str = "map"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        if isinstance(x, PhasePoint):
            return PhasePoint.from_array(self.forward(x.to_array()))
        return self.forward(np.asarray(x, dtype=float))

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None

    @classmethod
    def linear(cls, matrix, name="linear", **params) -> "PhaseMap":
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise ValueError("linear phase map needs a square 2n x 2n matrix")
        M.setflags(write=False)
        inverse = None
        if abs(np.linalg.det(M)) > 0:
            Minv = np.linalg.inv(M)
            inverse = lambda x: x @ Minv.T  # noqa: E731
        return cls(
            n=M.shape[0] // 2,
            forward=lambda x: x @ M.T,
            jacobian=lambda x: M.copy(),
            inverse=inverse,
            matrix=M,
            name=name,
            params=params,
        )


def identity_map(n: int = 1) -> PhaseMap:
    return PhaseMap.linear(np.eye(2 * n), name="identity")


def compose(outer: PhaseMap, inner: PhaseMap) -> PhaseMap:
    """Return ``outer o inner`` with a chain-rule Jacobian."""
    if outer.n != inner.n:
        raise ValueError("cannot compose maps of different dimension")
    if outer.is_linear and inner.is_linear:
        return PhaseMap.linear(outer.matrix @ inner.matrix, name=f"{outer.name}*{inner.name}")

    def jac(x):
        return jacobian_at(outer, inner.forward(x)) @ jacobian_at(inner, x)

    inverse = None
    if outer.inverse is not None and inner.inverse is not None:
        inverse = lambda y: inner.inverse(outer.inverse(y))  # noqa: E731
    return PhaseMap(
        n=outer.n,
        forward=lambda x: outer.forward(inner.forward(x)),
        jacobian=jac,
        inverse=inverse,
        name=f"{outer.name}*{inner.name}",
    )


def fd_step(x: np.ndarray) -> float:
    return 1e-5 * max(1.0, float(np.max(np.abs(x))))


def jacobian_at(phase_map: PhaseMap, x, h: Optional[float] = None) -> np.ndarray:
    """Jacobian of ``phase_map`` at one point.

    Analytic when the map provides one, otherwise central differences with
    step ``h`` (default ``1e-5 * max(1, |x|_inf)``), error O(h^2) per entry.
    """
    x = as_array(x)
    dim = 2 * phase_map.n
    if x.shape != (dim,):
        raise ValueError(f"expected a point of shape ({dim},), got {x.shape}")
    if phase_map.jacobian is not None:
        J = np.asarray(phase_map.jacobian(x), dtype=float)
    else:
        if h is None:
            h = fd_step(x)
        if not h > 0:
            raise ValueError("finite-difference step must be positive")
        offsets = h * np.eye(dim)
        # one vectorized call: rows are x + h e_j followed by x - h e_j
        stencil = np.concatenate([x + offsets, x - offsets])
        with np.errstate(all="ignore"):
            values = np.asarray(phase_map.forward(stencil), dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{phase_map.name}: non-finite forward evaluation near {x}", point=x)
        J = ((values[:dim] - values[dim:]) / (2 * h)).T
    if not np.all(np.isfinite(J)):
        raise DomainError(f"{phase_map.name}: non-finite Jacobian at {x}", point=x)
    return J


@dataclass(frozen=True)
class CanonicalReport:
    passed: bool
    max_residual: float
    max_det_residual: float
    n_points: int
    tol: float
    worst_point: Optional[list] = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "max_det_residual": self.max_det_residual,
            "n_points": self.n_points,
            "tol": self.tol,
            "worst_point": self.worst_point,
        }


def symplectic_residual(J: np.ndarray) -> float:
    """max-norm of J^T Omega J - Omega."""
    omega = symplectic_form(J.shape[0] // 2)
    return float(np.max(np.abs(J.T @ omega @ J - omega)))


def check_canonical(phase_map: PhaseMap, points: Sequence, tol: float) -> CanonicalReport:
    """Sample the symplectic condition J^T Omega J = Omega at ``points``.

    Passes iff the max-norm residual is within ``tol`` at every point. The
    ``|det J - 1|`` residual is reported alongside as an independent check.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    pts = [as_array(p) for p in points]
    if not pts:
        raise ValueError("need at least one sample point")
    worst = 0.0
    worst_det = 0.0
    worst_point = None
    for x in pts:
        J = jacobian_at(phase_map, x)
        r = symplectic_residual(J)
        d = abs(np.linalg.det(J) - 1.0)
        if r > worst or worst_point is None:
            worst, worst_point = max(r, worst), x
        worst_det = max(worst_det, d)
    return CanonicalReport(
        passed=bool(worst <= tol),
        max_residual=float(worst),
        max_det_residual=float(worst_det),
        n_points=len(pts),
        tol=float(tol),
        worst_point=[float(v) for v in worst_point],
    )


def random_points(n: int, count: int, rng: np.random.Generator, scale: float = 3.0) -> np.ndarray:
    """``count`` points drawn uniformly from the box [-scale, scale]^(2n)."""
    return rng.uniform(-scale, scale, size=(count, 2 * n))
