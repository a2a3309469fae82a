"""Built-in systems, maps and distributions, and the JSON scenario schema.

Scenario documents are strict: unknown keys are errors and every error names
the path of the offending key, e.g. ``integrator.dt``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .distributions import AnalyticGaussian, GaussianMixture, GridDensity, sample, to_grid
from .dynamics import SCHEMES, EntropyConfig, HamiltonianSystem, IntegratorConfig
from .entropy import METHODS
from .errors import ConfigError, RegistryError
from .phase_space import PhaseMap, identity_map
from .rng import substream

DEFAULT_COUNT = 100_000
DEFAULT_GRID_SHAPE = (400, 400)


# -- systems -------------------------------------------------------------------

def _blocks(a, b, c, d, n):
    eye = np.eye(n)
    return np.block([[a * eye, b * eye], [c * eye, d * eye]])


def free(n: int = 1) -> HamiltonianSystem:
    return HamiltonianSystem(
        name="free", n=n,
        H=lambda q, k: 0.5 * np.sum(k * k, axis=-1),
        grad_q=lambda q, k: np.zeros_like(q),
        grad_k=lambda q, k: k,
        linear_flow=lambda t: _blocks(1.0, t, 0.0, 1.0, n),
        quadratic_form=_blocks(0.0, 0.0, 0.0, 1.0, n),
        params={"n": n},
    )


def harmonic(omega: float = 1.0, n: int = 1) -> HamiltonianSystem:
    w2 = omega * omega

    def flow(t):
        c, s = math.cos(omega * t), math.sin(omega * t)
        return _blocks(c, s / omega, -omega * s, c, n)

    return HamiltonianSystem(
        name="harmonic", n=n,
        H=lambda q, k: 0.5 * np.sum(k * k + w2 * q * q, axis=-1),
        grad_q=lambda q, k: w2 * q,
        grad_k=lambda q, k: k,
        linear_flow=flow,
        quadratic_form=_blocks(w2, 0.0, 0.0, 1.0, n),
        params={"omega": omega, "n": n},
    )


def inverted(omega: float = 1.0, n: int = 1) -> HamiltonianSystem:
    w2 = omega * omega

    def flow(t):
        c, s = math.cosh(omega * t), math.sinh(omega * t)
        return _blocks(c, s / omega, omega * s, c, n)

    return HamiltonianSystem(
        name="inverted", n=n,
        H=lambda q, k: 0.5 * np.sum(k * k - w2 * q * q, axis=-1),
        grad_q=lambda q, k: -w2 * q,
        grad_k=lambda q, k: k,
        linear_flow=flow,
        quadratic_form=_blocks(-w2, 0.0, 0.0, 1.0, n),
        params={"omega": omega, "n": n},
    )


def pendulum(n: int = 1) -> HamiltonianSystem:
    return HamiltonianSystem(
        name="pendulum", n=n,
        H=lambda q, k: np.sum(0.5 * k * k - np.cos(q), axis=-1),
        grad_q=lambda q, k: np.sin(q),
        grad_k=lambda q, k: k,
        params={"n": n},
    )


def quartic(lam: float = 1.0, n: int = 1) -> HamiltonianSystem:
    return HamiltonianSystem(
        name="quartic", n=n,
        H=lambda q, k: np.sum(0.5 * k * k + 0.25 * lam * q**4, axis=-1),
        grad_q=lambda q, k: lam * q**3,
        grad_k=lambda q, k: k,
        params={"lam": lam, "n": n},
    )


def pendulum_period(amplitude: float) -> float:
    """Period of the unit pendulum released from rest at angle ``amplitude``: 4 K(sin^2(amp/2))."""
    from scipy.special import ellipk

    return 4.0 * float(ellipk(math.sin(0.5 * amplitude) ** 2))


# -- maps ----------------------------------------------------------------------

def _linear(name, m2, n, **params):
    return PhaseMap.linear(_blocks(m2[0][0], m2[0][1], m2[1][0], m2[1][1], n), name=name, **params)


def scale_map(a: float, n: int = 1) -> PhaseMap:
    """Canonical rescaling (q, k) -> (a q, k / a)."""
    return _linear("scale", [[a, 0.0], [0.0, 1.0 / a]], n, a=a)


def dilate_map(a: float, n: int = 1) -> PhaseMap:
    """Uniform dilation (q, k) -> (a q, a k); not canonical unless a = +-1."""
    return _linear("dilate", [[a, 0.0], [0.0, a]], n, a=a)


def rotate_map(theta: float, n: int = 1) -> PhaseMap:
    """Rotation of each (q_i, k_i) plane; equals the unit harmonic flow for time theta."""
    c, s = math.cos(theta), math.sin(theta)
    return _linear("rotate", [[c, s], [-s, c]], n, theta=theta)


def shear_map(s: float, n: int = 1) -> PhaseMap:
    """(q, k) -> (q + s k, k); the free flow for time s."""
    return _linear("shear", [[1.0, s], [0.0, 1.0]], n, s=s)


# -- distributions ---------------------------------------------------------------

def gaussian(mean=None, cov=None, sigma_q=None, sigma_k=None, n: int = 1) -> AnalyticGaussian:
    if cov is not None and (sigma_q is not None or sigma_k is not None):
        raise ConfigError("give either cov or sigma_q/sigma_k, not both")
    if mean is None:
        dim = len(cov) if cov is not None else 2 * n
        mean = np.zeros(dim)
    mean = np.asarray(mean, dtype=float)
    if cov is None:
        half = mean.size // 2
        sq = np.broadcast_to(np.asarray(1.0 if sigma_q is None else sigma_q, dtype=float), half)
        sk = np.broadcast_to(np.asarray(1.0 if sigma_k is None else sigma_k, dtype=float), half)
        cov = np.diag(np.concatenate([sq, sk]) ** 2)
    return AnalyticGaussian(mean, cov)


def uniform_box(bounds=((0.0, 1.0), (0.0, 1.0))) -> GridDensity:
    return GridDensity.uniform(bounds)


def two_blob_mixture(a: float = 3.0, sigma: float = 1.0) -> GaussianMixture:
    """Equal-weight Gaussians of spread ``sigma`` centred at (+-a, 0)."""
    comps = [gaussian(mean=[s * a, 0.0], sigma_q=sigma, sigma_k=sigma) for s in (-1.0, 1.0)]
    return GaussianMixture([0.5, 0.5], comps)


@dataclass(frozen=True)
class Entry:
    factory: Callable
    params: dict  # name -> (kind, default, check description or None)


def _pos(x):
    return x > 0


def _nonzero(x):
    return x != 0


SYSTEMS = {
    "free": Entry(free, {"n": ("int", 1, _pos)}),
    "harmonic": Entry(harmonic, {"omega": ("num", 1.0, _pos), "n": ("int", 1, _pos)}),
    "inverted": Entry(inverted, {"omega": ("num", 1.0, _pos), "n": ("int", 1, _pos)}),
    "pendulum": Entry(pendulum, {"n": ("int", 1, _pos)}),
    "quartic": Entry(quartic, {"lam": ("num", 1.0, _pos), "n": ("int", 1, _pos)}),
}

MAPS = {
    "identity": Entry(lambda n=1: identity_map(n), {"n": ("int", 1, _pos)}),
    "scale": Entry(scale_map, {"a": ("num", 2.0, _nonzero), "n": ("int", 1, _pos)}),
    "dilate": Entry(dilate_map, {"a": ("num", 2.0, _nonzero), "n": ("int", 1, _pos)}),
    "rotate": Entry(rotate_map, {"theta": ("num", math.pi / 4, None), "n": ("int", 1, _pos)}),
    "shear": Entry(shear_map, {"s": ("num", 1.0, None), "n": ("int", 1, _pos)}),
}

CANONICAL_MAPS = ("identity", "scale", "rotate", "shear")

DISTRIBUTIONS = {
    "gaussian": Entry(gaussian, {"mean": ("vector", None, None), "cov": ("matrix", None, None),
                                 "sigma_q": ("num", None, _pos), "sigma_k": ("num", None, _pos)}),
    "uniform_box": Entry(uniform_box, {"bounds": ("matrix", [[0.0, 1.0], [0.0, 1.0]], None)}),
    "two_blob_mixture": Entry(two_blob_mixture, {"a": ("num", 3.0, None), "sigma": ("num", 1.0, _pos)}),
}


def builtin_registry() -> dict:
    """Names of every built-in system, map and distribution."""
    return {"systems": sorted(SYSTEMS), "maps": sorted(MAPS), "distributions": sorted(DISTRIBUTIONS)}


def _lookup(table: dict, name, path: str, what: str) -> Entry:
    if not isinstance(name, str):
        raise ConfigError("name must be a string", path)
    if name not in table:
        raise RegistryError(f"unknown {what} {name!r}; valid names: {', '.join(sorted(table))}", path)
    return table[name]


def _coerce(kind: str, value, path: str):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path)
        return value
    if kind == "num":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError("expected a finite number", path)
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path)
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    if kind == "vector":
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a non-empty list of numbers", path)
        return [_coerce("num", v, f"{path}[{i}]") for i, v in enumerate(value)]
    if kind == "ivector":
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a non-empty list of integers", path)
        return [_coerce("int", v, f"{path}[{i}]") for i, v in enumerate(value)]
    if kind == "matrix":
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a list of rows", path)
        rows = [_coerce("vector", r, f"{path}[{i}]") for i, r in enumerate(value)]
        if len({len(r) for r in rows}) != 1:
            raise ConfigError("rows have different lengths", path)
        return rows
    raise AssertionError(kind)


def _params(entry: Entry, doc: dict, path: str, skip=("name",)) -> dict:
    out = {}
    for key in doc:
        if key not in skip and key not in entry.params:
            raise ConfigError(f"unknown key; allowed: {', '.join(sorted(entry.params))}", f"{path}.{key}")
    for key, (kind, default, check) in entry.params.items():
        if key in doc:
            value = _coerce(kind, doc[key], f"{path}.{key}")
            if check is not None and not check(value):
                raise ConfigError(f"value {value!r} out of range", f"{path}.{key}")
            out[key] = value
        elif default is not None:
            out[key] = default
    return out


def _section(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError("expected an object", key)
    return value


def _build(entry: Entry, params: dict, path: str):
    try:
        return entry.factory(**params)
    except ConfigError as exc:
        raise ConfigError(str(exc), path) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc


@dataclass(frozen=True)
class Scenario:
    hamiltonian: str
    hamiltonian_params: dict
    initial: str
    initial_params: dict
    representation: str
    count: int
    grid_shape: tuple
    grid_bounds: Any
    integrator: IntegratorConfig
    entropy: EntropyConfig
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def system(self) -> HamiltonianSystem:
        return SYSTEMS[self.hamiltonian].factory(**self.hamiltonian_params)

    def analytic_initial(self):
        return DISTRIBUTIONS[self.initial].factory(**self.initial_params)

    def initial_distribution(self):
        """The initial state in the requested representation."""
        dist = self.analytic_initial()
        if self.representation == "ensemble":
            return sample(dist, self.count, substream(self.seed, "sampling"))
        if self.representation == "grid":
            return to_grid(dist, bounds=self.grid_bounds, shape=self.grid_shape)
        return dist

    def to_document(self) -> dict:
        rep = {"kind": self.representation}
        if self.representation == "ensemble":
            rep["count"] = self.count
        if self.representation == "grid":
            rep["shape"] = list(self.grid_shape)
            if self.grid_bounds is not None:
                rep["bounds"] = [list(b) for b in self.grid_bounds]
        return {
            "hamiltonian": {"name": self.hamiltonian, **self.hamiltonian_params},
            "initial": {"name": self.initial, **self.initial_params},
            "representation": rep,
            "integrator": {
                "scheme": self.integrator.scheme,
                "dt": self.integrator.dt,
                "t_final": self.integrator.t_final,
                "output_every": self.integrator.output_every,
            },
            "entropy": {"method": self.entropy.method, "k": self.entropy.k, "jitter": self.entropy.jitter},
            "seed": self.seed,
        }


TOP_KEYS = ("hamiltonian", "initial", "representation", "integrator", "entropy", "seed")
DEFAULT_METHOD = {"analytic": "analytic", "ensemble": "knn", "grid": "grid"}


def load_scenario(document) -> Scenario:
    """Validate a scenario given as JSON text or an already-parsed dict."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError("scenario must be a JSON object")
    for key in document:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown key; allowed: {', '.join(TOP_KEYS)}", key)

    ham = _section(document, "hamiltonian")
    if "name" not in ham:
        raise ConfigError("missing required key", "hamiltonian.name")
    sys_entry = _lookup(SYSTEMS, ham["name"], "hamiltonian.name", "hamiltonian")
    ham_params = _params(sys_entry, ham, "hamiltonian")

    init = _section(document, "initial")
    init_name = init.get("name", "gaussian")
    dist_entry = _lookup(DISTRIBUTIONS, init_name, "initial.name", "distribution")
    init_params = _params(dist_entry, init, "initial")

    rep = _section(document, "representation")
    kind = _coerce("str", rep.get("kind", "ensemble"), "representation.kind")
    if kind not in DEFAULT_METHOD:
        raise ConfigError("expected one of analytic, ensemble, grid", "representation.kind")
    allowed = {"analytic": {"kind"}, "ensemble": {"kind", "count"}, "grid": {"kind", "shape", "bounds"}}[kind]
    for key in rep:
        if key not in allowed:
            raise ConfigError(f"unknown key for representation {kind!r}", f"representation.{key}")
    count = _coerce("int", rep.get("count", DEFAULT_COUNT), "representation.count")
    if count < 2:
        raise ConfigError("ensemble needs at least 2 particles", "representation.count")
    shape = tuple(_coerce("ivector", rep.get("shape", list(DEFAULT_GRID_SHAPE)), "representation.shape"))
    if any(m < 1 for m in shape):
        raise ConfigError("grid cells per axis must be >= 1", "representation.shape")
    bounds = rep.get("bounds")
    if bounds is not None:
        bounds = tuple(tuple(r) for r in _coerce("matrix", bounds, "representation.bounds"))

    integ = _section(document, "integrator")
    for key in integ:
        if key not in ("scheme", "dt", "t_final", "output_every"):
            raise ConfigError("unknown key", f"integrator.{key}")
    scheme = _coerce("str", integ.get("scheme", "leapfrog"), "integrator.scheme")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme; expected one of {', '.join(SCHEMES)}", "integrator.scheme")
    cfg = IntegratorConfig(
        scheme=scheme,
        dt=_coerce("num", integ.get("dt", 1e-3), "integrator.dt"),
        t_final=_coerce("num", integ.get("t_final", 10.0), "integrator.t_final"),
        output_every=_coerce("int", integ.get("output_every", 100), "integrator.output_every"),
    )

    ent = _section(document, "entropy")
    for key in ent:
        if key not in ("method", "k", "jitter"):
            raise ConfigError("unknown key", f"entropy.{key}")
    method = _coerce("str", ent.get("method", DEFAULT_METHOD[kind]), "entropy.method")
    if method not in METHODS:
        raise ConfigError(f"expected one of {', '.join(METHODS)}", "entropy.method")
    k = _coerce("int", ent.get("k", 4), "entropy.k")
    if k < 1:
        raise ConfigError("k must be >= 1", "entropy.k")
    if kind == "ensemble" and count <= k:
        raise ConfigError(f"ensemble of {count} particles is too small for k={k}", "representation.count")
    jitter = _coerce("bool", ent.get("jitter", False), "entropy.jitter")

    seed = _coerce("int", document.get("seed", 0), "seed")
    if seed < 0:
        raise ConfigError("seed must be nonnegative", "seed")

    scn = Scenario(
        hamiltonian=ham["name"], hamiltonian_params=ham_params,
        initial=init_name, initial_params=init_params,
        representation=kind, count=count, grid_shape=shape, grid_bounds=bounds,
        integrator=cfg, entropy=EntropyConfig(method, k, jitter), seed=seed,
    )
    # surface parameter-level problems (bad covariance etc.) at load time
    _build(sys_entry, ham_params, "hamiltonian")
    dist = _build(dist_entry, init_params, "initial")
    if dist.n != scn.system().n:
        raise ConfigError(f"initial distribution has n={dist.n}, system has n={scn.system().n}", "initial")
    return scn


def dump_scenario(scn: Scenario) -> str:
    return json.dumps(scn.to_document(), indent=2, sort_keys=False)


def build_map(name: str, **params) -> PhaseMap:
    entry = _lookup(MAPS, name, "map", "map")
    return _build(entry, _params(entry, params, "map", skip=()), "map")


def build_system(name: str, **params) -> HamiltonianSystem:
    entry = _lookup(SYSTEMS, name, "hamiltonian", "hamiltonian")
    return _build(entry, _params(entry, params, "hamiltonian", skip=()), "hamiltonian")
