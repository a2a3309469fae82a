"""Normalized densities over phase space in four representations.

``AnalyticGaussian`` and ``GaussianMixture`` are closed-form, ``ParticleEnsemble``
is a weighted point cloud (Liouville transport moves points, never weights), and
``GridDensity`` is piecewise constant on an axis-aligned box.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateDistributionError,
    DomainError,
    InvalidDistributionError,
    UnsupportedPushforwardError,
    UnsupportedRepresentationError,
)
from .phase_space import PhaseMap, as_array, fd_step
from .rng import make_rng

DEFAULT_PUSHFORWARD_COUNT = 100_000


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AnalyticGaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.size
        if mean.ndim != 1 or d % 2 or cov.shape != (d, d):
            raise InvalidDistributionError(f"mean must have length 2n and cov shape (2n, 2n); got {mean.shape}, {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidDistributionError("non-finite Gaussian parameters")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14 * np.max(np.abs(cov))):
            raise InvalidDistributionError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        eig = np.linalg.eigvalsh(cov)
        if eig[0] <= 1e-12 * eig[-1] or eig[-1] <= 0:
            raise InvalidDistributionError("covariance is not positive definite")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidDistributionError("covariance factorization failed") from exc
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def n(self) -> int:
        return self.mean.size // 2

    @classmethod
    def uncorrelated(cls, sigma_q, sigma_k, mean_q=0.0, mean_k=0.0) -> "AnalyticGaussian":
        sq = np.atleast_1d(np.asarray(sigma_q, dtype=float))
        sk = np.atleast_1d(np.asarray(sigma_k, dtype=float))
        n = max(sq.size, sk.size)
        sq, sk = np.broadcast_to(sq, n), np.broadcast_to(sk, n)
        mean = np.concatenate([np.broadcast_to(mean_q, n), np.broadcast_to(mean_k, n)])
        return cls(mean, np.diag(np.concatenate([sq, sk]) ** 2))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        comps = tuple(self.components)
        if not comps or w.size != len(comps):
            raise InvalidDistributionError("need one positive weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidDistributionError("mixture weights must be positive and sum to 1")
        if len({c.mean.size for c in comps}) != 1:
            raise InvalidDistributionError("components live in different dimensions")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return self.components[0].n


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    points: np.ndarray
    weights: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] % 2 or pts.shape[1] == 0:
            raise InvalidDistributionError("points must have shape (N, 2n)")
        N = pts.shape[0]
        if N < 2:
            raise InvalidDistributionError("an ensemble needs at least 2 particles")
        if self.weights is None:
            w = np.full(N, 1.0 / N)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (N,):
                raise InvalidDistributionError("one weight per particle required")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidDistributionError("weights must be positive and sum to 1")
        if not np.all(np.isfinite(pts)):
            raise DomainError("ensemble contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.points.shape[1] // 2

    def __len__(self):
        return self.points.shape[0]

    @property
    def equal_weights(self) -> bool:
        N = len(self)
        return bool(np.all(np.abs(self.weights * N - 1.0) <= 1e-9))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Piecewise-constant density on the box ``bounds`` (shape ``(2n, 2)``).

    ``values[i, j, ...]`` is the density in the cell with those indices.
    ``remap_mass`` records the total mass a pushforward produced before it was
    renormalized; ``None`` for grids built directly.
    """

    bounds: np.ndarray
    values: np.ndarray
    remap_mass: Optional[float] = None

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] % 2 or v.ndim != b.shape[0]:
            raise InvalidDistributionError("bounds must be (2n, 2) with a 2n-dimensional value array")
        if np.any(b[:, 1] <= b[:, 0]):
            raise InvalidDistributionError("grid bounds must have hi > lo on every axis")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidDistributionError("grid values must be finite and nonnegative")
        object.__setattr__(self, "bounds", _frozen(b))
        object.__setattr__(self, "values", _frozen(v))
        mass = float(v.sum() * self.cell_volume)
        if mass == 0.0:
            raise InvalidDistributionError("grid density is identically zero")
        if abs(mass - 1.0) > 1e-9:
            raise InvalidDistributionError(f"grid density integrates to {mass!r}, not 1")

    @classmethod
    def normalized(cls, bounds, values, remap_mass=None) -> "GridDensity":
        b = np.asarray(bounds, dtype=float)
        v = np.asarray(values, dtype=float)
        vol = float(np.prod((b[:, 1] - b[:, 0]) / np.array(v.shape)))
        mass = float(v.sum() * vol)
        if not mass > 0:
            raise InvalidDistributionError("grid density is identically zero")
        return cls(b, v / mass, remap_mass=remap_mass)

    @classmethod
    def uniform(cls, bounds, shape=None) -> "GridDensity":
        """Exactly uniform density on a box (a single cell unless ``shape`` given)."""
        b = np.asarray(bounds, dtype=float)
        shape = tuple(shape) if shape is not None else (1,) * b.shape[0]
        volume = float(np.prod(b[:, 1] - b[:, 0]))
        return cls(b, np.full(shape, 1.0 / volume))

    @property
    def n(self) -> int:
        return self.bounds.shape[0] // 2

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def widths(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def axis_centers(self) -> list:
        return [lo + (np.arange(m) + 0.5) * h for (lo, _), m, h in zip(self.bounds, self.shape, self.widths)]

    def centers(self) -> np.ndarray:
        """All cell centers, shape ``(cells, 2n)`` in C order."""
        mesh = np.meshgrid(*self.axis_centers(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


Distribution = Union[AnalyticGaussian, GaussianMixture, ParticleEnsemble, GridDensity]


@dataclass(frozen=True, eq=False)
class Moments:
    mean_q: np.ndarray
    mean_k: np.ndarray
    sigma_q: np.ndarray
    sigma_k: np.ndarray
    corr_qk: np.ndarray
    cov: np.ndarray

    @property
    def products(self) -> np.ndarray:
        """sigma_q * sigma_k for each conjugate pair."""
        return self.sigma_q * self.sigma_k

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.mean_q, self.mean_k])


def mean_and_cov(dist: Distribution) -> tuple[np.ndarray, np.ndarray]:
    """Exact for analytic forms and grids, weighted sample moments for ensembles.

    Grid moments treat each cell as uniform, so the within-cell variance
    ``h^2 / 12`` is included.
    """
    if isinstance(dist, AnalyticGaussian):
        return dist.mean.copy(), dist.cov.copy()
    if isinstance(dist, GaussianMixture):
        w = dist.weights
        means = np.array([c.mean for c in dist.components])
        mu = w @ means
        dev = means - mu
        cov = sum(wi * (c.cov + np.outer(d, d)) for wi, c, d in zip(w, dist.components, dev))
        return mu, cov
    if isinstance(dist, ParticleEnsemble):
        x, w = dist.points, dist.weights
        mu = w @ x
        dev = x - mu
        return mu, (dev * w[:, None]).T @ dev
    if isinstance(dist, GridDensity):
        mass = dist.values.ravel() * dist.cell_volume
        c = dist.centers()
        mu = mass @ c
        dev = c - mu
        cov = (dev * mass[:, None]).T @ dev + np.diag(dist.widths ** 2 / 12.0)
        return mu, cov
    raise TypeError(f"not a distribution: {type(dist).__name__}")


def moments(dist: Distribution) -> Moments:
    mu, cov = mean_and_cov(dist)
    n = mu.size // 2
    var = np.diag(cov)
    scale = max(1.0, float(np.max(np.abs(mu))))
    if np.any(var <= (1e-15 * scale) ** 2):
        raise DegenerateDistributionError("distribution has zero spread along some axis")
    sigma = np.sqrt(var)
    sq, sk = sigma[:n], sigma[n:]
    cross = cov[np.arange(n), n + np.arange(n)]
    corr = np.clip(cross / (sq * sk), -1.0, 1.0)
    return Moments(mu[:n], mu[n:], sq, sk, corr, cov)


def sample(dist: Distribution, count: int, seed=None) -> ParticleEnsemble:
    """Draw ``count`` i.i.d. equal-weight particles; deterministic for a fixed seed."""
    count = int(count)
    if count < 2:
        raise ValueError("count must be >= 2")
    rng = make_rng(seed)
    record_seed = seed if isinstance(seed, (int, np.integer)) else None
    if isinstance(dist, AnalyticGaussian):
        pts = _gaussian_draw(dist, count, rng)
    elif isinstance(dist, GaussianMixture):
        labels = rng.choice(len(dist.components), size=count, p=dist.weights)
        pts = np.empty((count, 2 * dist.n))
        for i, comp in enumerate(dist.components):
            idx = np.flatnonzero(labels == i)
            pts[idx] = _gaussian_draw(comp, idx.size, rng)
    elif isinstance(dist, ParticleEnsemble):
        idx = rng.choice(len(dist), size=count, p=dist.weights)
        pts = dist.points[idx]
    elif isinstance(dist, GridDensity):
        mass = dist.values.ravel()
        total = mass.sum()
        if not total > 0:
            raise InvalidDistributionError("cannot sample an all-zero grid")
        flat = rng.choice(mass.size, size=count, p=mass / total)
        cell = np.stack(np.unravel_index(flat, dist.shape), axis=-1)
        offset = rng.random((count, cell.shape[1]))
        pts = dist.bounds[:, 0] + (cell + offset) * dist.widths
    else:
        raise TypeError(f"not a distribution: {type(dist).__name__}")
    return ParticleEnsemble(pts, seed=record_seed)


def _gaussian_draw(g: AnalyticGaussian, count: int, rng) -> np.ndarray:
    L = np.linalg.cholesky(g.cov)
    z = rng.standard_normal((count, g.mean.size))
    return g.mean + z @ L.T


def density_at(dist: Distribution, x) -> Union[float, np.ndarray]:
    """Pointwise density; ``x`` may be one point or an array ``(..., 2n)``."""
    x = as_array(x)
    if isinstance(dist, AnalyticGaussian):
        d = dist.mean.size
        L = np.linalg.cholesky(dist.cov)
        r = np.linalg.solve(L, (x - dist.mean).reshape(-1, d).T)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        logp = -0.5 * np.sum(r * r, axis=0) - 0.5 * d * np.log(2 * np.pi) - 0.5 * logdet
        out = np.exp(logp).reshape(x.shape[:-1])
    elif isinstance(dist, GaussianMixture):
        out = sum(w * np.asarray(density_at(c, x)) for w, c in zip(dist.weights, dist.components))
    elif isinstance(dist, GridDensity):
        lo, hi = dist.bounds[:, 0], dist.bounds[:, 1]
        inside = np.all((x >= lo) & (x <= hi), axis=-1)
        idx = np.floor((x - lo) / dist.widths).astype(np.int64)
        idx = np.clip(idx, 0, np.array(dist.shape) - 1)
        out = np.where(inside, dist.values[tuple(np.moveaxis(idx, -1, 0))], 0.0)
    elif isinstance(dist, ParticleEnsemble):
        raise UnsupportedRepresentationError("particle ensembles have no pointwise density")
    else:
        raise TypeError(f"not a distribution: {type(dist).__name__}")
    return float(out) if np.ndim(out) == 0 else out


def to_grid(dist: Distribution, bounds=None, shape=None) -> GridDensity:
    """Tabulate an analytic density at cell centers and renormalize.

    Default box is the mean +/- 8 sigma per axis with 400 cells per axis in 2-d
    (64 in higher dimension).
    """
    if isinstance(dist, GridDensity):
        return dist
    if isinstance(dist, ParticleEnsemble):
        raise UnsupportedRepresentationError("ensembles cannot be tabulated without density estimation")
    mu, cov = mean_and_cov(dist)
    if bounds is None:
        s = np.sqrt(np.diag(cov))
        bounds = np.stack([mu - 8 * s, mu + 8 * s], axis=-1)
    bounds = np.asarray(bounds, dtype=float)
    if shape is None:
        shape = (400,) * 2 if bounds.shape[0] == 2 else (64,) * bounds.shape[0]
    proto = GridDensity.uniform(bounds, shape)
    values = np.asarray(density_at(dist, proto.centers())).reshape(shape)
    return GridDensity.normalized(bounds, values)


def pushforward(dist: Distribution, phase_map: PhaseMap, count: int = DEFAULT_PUSHFORWARD_COUNT,
                seed=None, grid_shape=None, grid_bounds=None) -> Distribution:
    """Transport ``dist`` through ``phase_map``.

    Linear maps act exactly on Gaussians and mixtures; nonlinear maps turn them
    into an ensemble of ``count`` particles first. Grids are rebuilt by inverse
    lookup, scaled by the inverse-Jacobian determinant.
    """
    if isinstance(dist, ParticleEnsemble):
        with np.errstate(all="ignore"):
            pts = np.asarray(phase_map.forward(dist.points), dtype=float)
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(pts), axis=1))[0])
            raise DomainError(f"{phase_map.name}: non-finite image of particle {bad}", point=dist.points[bad])
        return ParticleEnsemble(pts, dist.weights, seed=dist.seed)
    if isinstance(dist, AnalyticGaussian):
        if phase_map.is_linear:
            M = phase_map.matrix
            return AnalyticGaussian(M @ dist.mean, M @ dist.cov @ M.T)
        return pushforward(sample(dist, count, seed), phase_map)
    if isinstance(dist, GaussianMixture):
        if phase_map.is_linear:
            return GaussianMixture(dist.weights, [pushforward(c, phase_map) for c in dist.components])
        return pushforward(sample(dist, count, seed), phase_map)
    if isinstance(dist, GridDensity):
        return _remap_grid(dist, phase_map, grid_shape, grid_bounds)
    raise TypeError(f"not a distribution: {type(dist).__name__}")


def _image_bounds(grid: GridDensity, phase_map: PhaseMap) -> np.ndarray:
    d = grid.bounds.shape[0]
    per_axis = 65 if d == 2 else 9
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in grid.bounds]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    # only the box surface matters for a continuous bijection
    on_face = np.any((mesh == grid.bounds[:, 0]) | (mesh == grid.bounds[:, 1]), axis=1)
    image = np.asarray(phase_map.forward(mesh[on_face]), dtype=float)
    if not np.all(np.isfinite(image)):
        raise DomainError(f"{phase_map.name}: non-finite image of grid boundary")
    return np.stack([image.min(axis=0), image.max(axis=0)], axis=-1)


def _remap_grid(grid: GridDensity, phase_map: PhaseMap, shape=None, bounds=None) -> GridDensity:
    inverse = phase_map.inverse
    if inverse is None:
        raise UnsupportedPushforwardError(f"{phase_map.name} has no inverse; grid pushforward needs one")
    if phase_map.is_linear:
        det = abs(np.linalg.det(phase_map.matrix))
        if det == 0:
            raise UnsupportedPushforwardError("singular linear map")
    shape = tuple(shape) if shape is not None else grid.shape
    bounds = np.asarray(bounds, dtype=float) if bounds is not None else _image_bounds(grid, phase_map)
    target = GridDensity.uniform(bounds, shape)
    y = target.centers()
    x = np.asarray(inverse(y), dtype=float)
    if not np.all(np.isfinite(x)):
        raise UnsupportedPushforwardError(f"{phase_map.name} is not invertible on the grid support")
    # fractional cell-center index of each preimage in the source grid
    coords = ((x - grid.bounds[:, 0]) / grid.widths - 0.5).T
    if all(m == 1 for m in grid.shape):
        inside = np.all((x >= grid.bounds[:, 0]) & (x <= grid.bounds[:, 1]), axis=1)
        src = np.where(inside, grid.values.ravel()[0], 0.0)
    else:
        src = ndimage.map_coordinates(grid.values, coords, order=3, mode="constant", cval=0.0)
        src = np.clip(src, 0.0, None)
    if phase_map.is_linear:
        factor = 1.0 / det
    else:
        factor = _inverse_jacobian_det(inverse, y)
    values = (src * factor).reshape(shape)
    mass = float(values.sum() * target.cell_volume)
    return GridDensity.normalized(bounds, values, remap_mass=mass)


def _inverse_jacobian_det(inverse, y: np.ndarray) -> np.ndarray:
    """|det d(inverse)/dy| at every row of ``y`` by vectorized central differences."""
    d = y.shape[1]
    h = fd_step(y)
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((np.asarray(inverse(y + e)) - np.asarray(inverse(y - e))) / (2 * h))
    jac = np.stack(cols, axis=-1)
    return np.abs(np.linalg.det(jac))


# -- ensemble CSV --------------------------------------------------------------

def ensemble_header(n: int) -> list:
    return [f"q{i + 1}" for i in range(n)] + [f"k{i + 1}" for i in range(n)] + ["weight"]


def write_ensemble_csv(ens: ParticleEnsemble, path_or_file) -> None:
    """Write ``q1..qn,k1..kn,weight`` rows at full (round-trip) precision."""
    header = ",".join(ensemble_header(ens.n))
    data = np.column_stack([ens.points, ens.weights])
    buf = io.StringIO()
    np.savetxt(buf, data, delimiter=",", fmt="%.17g", header=header, comments="")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)


def read_ensemble_csv(path_or_file) -> ParticleEnsemble:
    """Parse the ensemble CSV; weights are renormalized if they sum to 1 within 1e-6."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidDistributionError("empty ensemble file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or len(header) % 2 == 0 or header != ensemble_header((len(header) - 1) // 2):
        raise InvalidDistributionError(f"bad ensemble header {header!r}")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise InvalidDistributionError(f"malformed ensemble rows: {exc}") from exc
    w = data[:, -1]
    if data.shape[0] >= 1 and abs(w.sum() - 1.0) <= 1e-6 and np.all(w > 0):
        w = w / w.sum()
    return ParticleEnsemble(data[:, :-1], w)
