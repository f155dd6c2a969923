"""Command line entry point: ``linmix <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import SpecError
from .estimator import ConfidenceEllipsoid
from .harness import load_config, prop1_check, run_experiment, write_outputs, write_sweep
from .optimizer import solve_optimistic
from .process import ProcessSpec


def _process_from(path: str) -> ProcessSpec:
    with open(path) as fh:
        data = json.load(fh)
    # accept either a bare process spec or a full experiment config
    return ProcessSpec.from_dict(data.get("process", data))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    result = run_experiment(cfg)
    csv_path, json_path = write_outputs(cfg, result, args.output)
    for s in result.summaries:
        print(f"n={s.n} mean_regret={s.mean_regret:.6g} se={s.se_regret:.3g} coverage_fail={s.coverage_failure_rate}")
    print(f"wrote {csv_path} and {json_path} ({result.wall_time:.1f}s)")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    result = run_experiment(cfg)
    write_outputs(cfg, result, args.output)
    curve = write_sweep(cfg, result, args.output)
    print("n,mean_regret,se_regret,envelope,rate_ratio")
    for s in result.summaries:
        print(f"{s.n},{s.mean_regret:.6g},{s.se_regret:.3g},{s.envelope},{s.rate_ratio:.6g}")
    print(f"wrote {curve}")
    return 0


def cmd_mixing(args) -> int:
    spec = _process_from(args.config)
    profile = spec.profile(args.max_lag)
    for m, phi in enumerate(profile.phi, start=1):
        print(f"phi_{m} = {phi!r}")
    print(f"a = {profile.envelope_a!r}")
    print(f"gamma = {profile.envelope_gamma!r}")
    return 0


def cmd_prop1(args) -> int:
    report = prop1_check(_process_from(args.config), args.n)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.holds else 1


def cmd_solve(args) -> int:
    with open(args.input) as fh:
        ellipsoid = ConfidenceEllipsoid.from_dict(json.load(fh))
    sol = solve_optimistic(ellipsoid)
    print(json.dumps({"theta_plus": sol.theta_plus.tolist(), "x_plus": sol.x_plus.tolist(), "value": sol.value}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linmix", description="Restless linear bandits with phi-mixing parameters")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config, write CSV + JSON summary")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="CSV path (overrides output_path in the config)")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="regret-vs-horizon curve over the config's horizons")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mixing", help="print phi_1..phi_M and the fitted envelope")
    p.add_argument("--config", required=True)
    p.add_argument("--max-lag", type=int, default=10)
    p.set_defaults(func=cmd_mixing)

    p = sub.add_parser("prop1", help="one-sided check of the oracle-gap bound")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_prop1)

    p = sub.add_parser("solve-ellipsoid", help="optimistic solve for an ellipsoid JSON file")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
