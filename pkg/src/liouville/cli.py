"""Command-line front end.

Exit codes: 0 success, 1 runtime/physics error, 2 usage or configuration
error, 3 a requested check failed. Structured output on stdout is JSON; time
series go to the ``--out`` CSV.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import entropy as entropy_mod
from . import irreducible, uncertainty
from .distributions import read_ensemble_csv
from .dynamics import TrajectoryRecord, evolve
from .errors import ConfigError, DuplicatePointsError, InvalidDistributionError, LiouvilleError
from .phase_space import check_canonical, random_points
from .scenarios import MAPS, Scenario, build_map, builtin_registry, load_scenario

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

TRAJECTORY_COLUMNS = ("t", "mean_q", "mean_k", "sigma_q", "sigma_k", "corr_qk", "product",
                      "entropy", "entropy_stderr", "bound", "energy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return "%.12g" % x


def trajectory_header(n: int) -> list:
    if n == 1:
        return list(TRAJECTORY_COLUMNS)
    cols = ["t"]
    for name in ("mean_q", "mean_k", "sigma_q", "sigma_k", "corr_qk"):
        cols += [f"{name}{i + 1}" for i in range(n)]
    return cols + ["product", "entropy", "entropy_stderr", "bound", "energy"]


def trajectory_csv(record: TrajectoryRecord) -> str:
    """Fixed column order, ``%.12g`` numbers; an empty field means no stderr."""
    n = record.rows[0].moments.mean_q.size
    lines = [",".join(trajectory_header(n))]
    for r in record.rows:
        m = r.moments
        vals = [r.t, *m.mean_q, *m.mean_k, *m.sigma_q, *m.sigma_k, *m.corr_qk,
                r.product, r.entropy.value, r.entropy.stderr, r.bound, r.energy]
        lines.append(",".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def _load(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc
    return load_scenario(text)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=False))


def cmd_evolve(args) -> int:
    scn = _load(args.scenario)
    record = evolve(scn.system(), scn.initial_distribution(), scn.integrator, scn.entropy,
                    count=scn.count, seed=scn.seed)
    with open(args.out, "w", newline="") as fh:
        fh.write(trajectory_csv(record))
    ent = record.column("entropy")
    drift = float(np.max(np.abs(ent - ent[0])))
    slack = record.column("product") - record.column("bound")
    summary = {"rows": len(record.rows), "entropy_initial": record.entropy_initial,
               "max_entropy_drift": drift, "min_product_minus_bound": float(np.min(slack)), "out": str(args.out)}
    status = EXIT_OK
    if args.assert_entropy is not None and drift > args.assert_entropy:
        summary["failed"] = "entropy"
        status = EXIT_CHECK
    if args.assert_bound is not None and np.min(slack) < -args.assert_bound:
        summary["failed"] = "bound"
        status = EXIT_CHECK
    _print_json(summary)
    return status


def cmd_check_canonical(args) -> int:
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    params = {key: getattr(args, key) for key in ("a", "theta", "s", "n") if getattr(args, key) is not None}
    params = {k: v for k, v in params.items() if k in MAPS[args.map].params}
    phase_map = build_map(args.map, **params)
    pts = random_points(phase_map.n, args.points, np.random.default_rng(args.seed))
    report = check_canonical(phase_map, pts, args.tol)
    _print_json({"map": args.map, "params": params, **report.to_dict()})
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_entropy(args) -> int:
    if args.method != "knn":
        raise UsageError("sample files only support --method knn (no density is available)")
    try:
        ens = read_ensemble_csv(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc
    except InvalidDistributionError as exc:
        raise UsageError(str(exc)) from exc
    est = entropy_mod.entropy_knn(ens, k=args.k, jitter=args.jitter == "on", seed=args.seed)
    _print_json({**est.to_dict(), "n_samples": len(ens), "k": args.k})
    return EXIT_OK


def cmd_bound(args) -> int:
    scn = _load(args.scenario)
    dist = scn.initial_distribution()
    ent = scn.entropy
    kwargs = {"seed": scn.seed}
    if ent.method == "knn":
        kwargs.update(k=ent.k, jitter=ent.jitter, count=scn.count)
    report = uncertainty.check_bound(dist, ent.method, hbar_like=args.hbar, **kwargs)
    out = report.to_dict()
    out["quantum_label"] = report.quantum.label
    _print_json(out)
    if args.assert_tol is not None and report.ratio < 1.0 - args.assert_tol:
        return EXIT_CHECK
    return EXIT_OK


def cmd_internal(args) -> int:
    if args.a == 0 and args.b == 0:
        raise UsageError("a = b = 0 is not a valid transform")
    if args.samples < 2:
        raise UsageError("--samples must be >= 2")
    _print_json(irreducible.summary(args.a, args.b, samples=args.samples, seed=args.seed))
    return EXIT_OK


def cmd_registry(args) -> int:
    _print_json(builtin_registry())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="liouville", description="Phase-space entropy and uncertainty diagnostics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evolve", help="run a scenario and write its trajectory CSV")
    e.add_argument("scenario", help="scenario JSON file")
    e.add_argument("--out", required=True, help="trajectory CSV path")
    e.add_argument("--assert-entropy", type=float, metavar="TOL",
                   help="exit 3 if |entropy(t) - entropy(0)| exceeds TOL")
    e.add_argument("--assert-bound", type=float, metavar="TOL",
                   help="exit 3 if product < bound - TOL at any output time")
    e.set_defaults(func=cmd_evolve)

    c = sub.add_parser("check-canonical", help="sample the symplectic condition of a registry map")
    c.add_argument("map", choices=sorted(MAPS))
    c.add_argument("--a", type=float)
    c.add_argument("--theta", type=float)
    c.add_argument("--s", type=float)
    c.add_argument("--n", type=int)
    c.add_argument("--points", type=int, default=1000)
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_canonical)

    h = sub.add_parser("entropy", help="estimate entropy of an ensemble CSV")
    h.add_argument("input", help="CSV with header q1..qn,k1..kn,weight")
    h.add_argument("--method", choices=entropy_mod.METHODS, default="knn")
    h.add_argument("--k", type=int, default=entropy_mod.DEFAULT_K)
    h.add_argument("--jitter", choices=("on", "off"), default="off")
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_entropy)

    b = sub.add_parser("bound", help="uncertainty report for a scenario's initial state")
    b.add_argument("scenario")
    b.add_argument("--hbar", type=float, default=1.0, help="scale of the quantum floor hbar/2")
    b.add_argument("--assert", dest="assert_tol", type=float, metavar="TOL",
                   help="exit 3 if ratio < 1 - TOL")
    b.set_defaults(func=cmd_bound)

    i = sub.add_parser("internal", help="irreducible-system internal transform c = a + ib")
    i.add_argument("--a", type=float, required=True)
    i.add_argument("--b", type=float, required=True)
    i.add_argument("--samples", type=int, default=100_000)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_internal)

    r = sub.add_parser("registry", help="list built-in systems, maps and distributions")
    r.set_defaults(func=cmd_registry)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DuplicatePointsError as exc:
        print(f"error: {exc} (hint: pass --jitter on)", file=sys.stderr)
        return EXIT_RUNTIME
    except LiouvilleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
