"""Command-line front end: ``ridepool generate|solve|simulate|verify``.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
An experiment config (TOML or JSON) may stand in for flags; flags given
explicitly on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ridepool import data
from ridepool.lp import LpError, LpSolution, solve_instance
from ridepool.model import Instance, dumps_canonical, validate_instance
from ridepool.simulator import POLICY_NAMES, ExperimentConfig, PolicySpec, run_experiment
from ridepool.verify import SUITES, run_suite

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("ridepool")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SOLUTION_FORMAT = "ridepool-lp/1"


class UsageError(Exception):
    """Bad input that maps to exit code 2."""


# -- helpers ---------------------------------------------------------------


def load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".toml":
            return tomllib.loads(p.read_text())
        return json.loads(p.read_text())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config {p}: {exc}") from exc


def merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser, config: dict[str, Any]) -> argparse.Namespace:
    """Fill options left at their defaults from the config; explicit flags win."""
    for key, value in config.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, dest) == parser.get_default(dest):
            setattr(args, dest, value)
    return args


def load_instance(path: str) -> Instance:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"instance file not found: {p}")
    try:
        return Instance.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read instance {p}: {exc}") from exc


def solution_to_json(inst: Instance, sol: LpSolution, kind: str) -> str:
    x = sol.values
    nz = [[int(u), int(g), int(t), float(x[u, g, t])] for u, g, t in zip(*np.nonzero(x > 0))]
    return dumps_canonical(
        {
            "format": SOLUTION_FORMAT,
            "kind": kind,
            "objective": sol.objective,
            "shape": list(sol.shape),
            "method": sol.method,
            "nonzeros": nz,
        }
    ) + "\n"


def solution_from_json(text: str) -> LpSolution:
    d = json.loads(text)
    if d.get("format") != SOLUTION_FORMAT:
        raise ValueError("not an LP solution file")
    shape = tuple(d["shape"])
    x = np.zeros(shape)
    for u, g, t, v in d["nonzeros"]:
        x[u, g, t] = v
    return LpSolution(x.ravel(), float(d["objective"]), "optimal", 0, d["method"], shape)


# -- commands --------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.output)
    if args.synthetic == bool(args.trips):
        raise UsageError("choose exactly one of --synthetic or --trips PATH")
    if args.synthetic:
        params = data.SyntheticParams(
            num_resources=args.resources,
            num_types=args.types,
            rounds=args.rounds,
            kappa=args.kappa,
            batch_size=args.batch_size,
            base_revenue=args.base_revenue,
            max_occupancy=args.max_occupancy,
        )
        inst = data.generate_synthetic(params, args.seed, args.instance)
    else:
        path = Path(args.trips)
        if not path.is_file():
            raise UsageError(f"trip file not found: {path}")
        bbox = tuple(args.bbox) if args.bbox else data.MANHATTAN_BBOX
        try:
            ti = data.instance_from_trips(
                path,
                cell_km=args.cell_km,
                rounds=args.rounds,
                kappa=args.kappa,
                num_resources=args.resources,
                bbox=bbox,
                train_days=args.train_days,
                base_revenue=args.base_revenue,
            )
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        inst = ti.instance
        if args.test_arrivals:
            Path(args.test_arrivals).write_text(dumps_canonical(ti.test_arrivals) + "\n")
    report = validate_instance(inst)
    if not report.ok:
        print(str(report), file=sys.stderr)
        return EXIT_USAGE
    out.parent.mkdir(parents=True, exist_ok=True)
    inst.save(out)
    print(f"wrote {out}: |U|={inst.num_resources} |V|={inst.num_types} T={inst.T} kappa={inst.kappa} groups={inst.num_groups}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    try:
        model, sol = solve_instance(inst, args.method)
    except LpError as exc:
        print(f"LP failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.output) if args.output else Path(args.instance).with_suffix(".lp.json")
    out.write_text(solution_to_json(inst, sol, model.kind))
    print(f"LP{model.kind.capitalize()} optimum {sol.objective:.9g} ({sol.method}); wrote {out}")
    return EXIT_OK


def _policy_specs(args: argparse.Namespace) -> list[PolicySpec]:
    names = args.policy if isinstance(args.policy, list) else [args.policy]
    specs = []
    for n in names:
        if n not in POLICY_NAMES:
            raise UsageError(f"unknown policy {n!r}; choose from {', '.join(POLICY_NAMES)}")
        gamma: str | float = args.gamma
        if gamma not in ("auto", "fixed-point"):
            try:
                gamma = float(gamma)
            except ValueError as exc:
                raise UsageError(f"--gamma takes auto, fixed-point or a number, not {gamma!r}") from exc
        specs.append(PolicySpec(n, gamma, args.beta_samples, args.epsilon, args.mode))
    return specs


def cmd_simulate(args: argparse.Namespace) -> int:
    paths = args.instance if isinstance(args.instance, list) else [args.instance]
    if not paths:
        raise UsageError("no instance files given")
    instances = [load_instance(p) for p in paths]
    specs = _policy_specs(args)
    for spec in specs:
        if spec.name.startswith("adap"):
            for k in sorted({i.kappa for i in instances}):
                print(f"{spec.name}: kappa={k} gamma={spec.resolved_gamma(k):.5f}")
    config = ExperimentConfig(specs, runs=args.runs, seed=args.seed, lp_method=args.lp_method,
                              exact_offline=args.exact_offline, workers=args.workers)
    report = run_experiment(config, instances)
    csv_path, json_path = report.write(args.out, args.stem)
    for name, s in report.summary().items():
        print(f"{name:>10}: mean {s['mean_reward']:.4f} +- {s['stderr']:.4f} over {s['episodes']} episodes, CR(LP) {s['mean_cr_lp']:.4f}")
    print(f"wrote {csv_path} and {json_path}")
    errors = [r for r in report.rows if r.error]
    for r in errors:
        print(f"error: {r.policy} on instance {r.instance}: {r.error}", file=sys.stderr)
    return EXIT_FAIL if errors else EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    names = args.suite or list(SUITES)
    ok = True
    for name in names:
        kwargs = {}
        if name == "match-rate":
            kwargs = {"episodes": args.episodes, "samples": args.beta_samples, "seed": args.seed}
            if args.gamma is not None:
                kwargs["gamma"] = args.gamma
        res = run_suite(name, **kwargs)
        print(res)
        ok &= res.passed
    print("all suites passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ridepool", description="Online matching of multi-capacity reusable resources.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an instance file")
    g.add_argument("--synthetic", action="store_true", help="random synthetic instance")
    g.add_argument("--trips", metavar="CSV", help="grid instance from a trip table")
    g.add_argument("--resources", type=int, default=10)
    g.add_argument("--types", type=int, default=10)
    g.add_argument("--rounds", type=int, default=200)
    g.add_argument("--kappa", type=int, default=2)
    g.add_argument("--batch-size", type=int, default=5)
    g.add_argument("--base-revenue", type=float, default=5.0)
    g.add_argument("--max-occupancy", type=int, default=60)
    g.add_argument("--cell-km", type=float, default=4.0)
    g.add_argument("--bbox", type=float, nargs=4, metavar=("LAT0", "LON0", "LAT1", "LON1"))
    g.add_argument("--train-days", type=int, default=None, help="leading days used for estimation")
    g.add_argument("--test-arrivals", metavar="JSON", help="also write held-out realized arrivals")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instance", type=int, default=0, help="instance index within the seed")
    g.add_argument("-o", "--output", default="instance.json")
    g.add_argument("--config")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve the benchmark LP")
    s.add_argument("instance")
    s.add_argument("--method", choices=("auto", "simplex", "highs"), default="auto")
    s.add_argument("-o", "--output")
    s.add_argument("--config")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="run policies and write CSV/JSON reports")
    m.add_argument("instance", nargs="+")
    m.add_argument("--policy", action="append", default=None, help=f"one of {', '.join(POLICY_NAMES)}; repeatable")
    m.add_argument("--gamma", default="auto", help="auto, fixed-point, or a number")
    m.add_argument("--mode", choices=("auto", "marginal", "joint"), default="auto")
    m.add_argument("--beta-samples", type=int, default=10_000)
    m.add_argument("--epsilon", type=float, default=0.1)
    m.add_argument("--runs", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--lp-method", choices=("auto", "simplex", "highs"), default="auto")
    m.add_argument("--exact-offline", action="store_true")
    m.add_argument("--workers", type=int, default=None)
    m.add_argument("--out", default="results")
    m.add_argument("--stem", default="report")
    m.add_argument("--config")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", action="append", choices=list(SUITES))
    v.add_argument("--episodes", type=int, default=20_000)
    v.add_argument("--beta-samples", type=int, default=10_000)
    v.add_argument("--gamma", type=float, default=None, help="override gamma in the match-rate suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--config")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        args = merge_config(args, sub, load_config(args.config))
        if args.command == "simulate" and not args.policy:
            args.policy = ["opera2"]
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
