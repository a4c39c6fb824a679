"""Command-line entry point: ``mpnewton run|bounds|gen-system|solve|dataset``."""

import argparse
import json
import logging
import sys

import numpy as np

from . import data, linsolve
from .experiments import ExperimentConfig, run_experiment
from .models import ConfigError
from .precision import NumericFailure, Tier

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


def _config(args):
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "no_timing", False):
        cfg.record_timing = False
    return cfg


def cmd_run(args, report_only=False):
    cfg = _config(args)
    summary = run_experiment(cfg, check_only_bounds=report_only)
    for name, ok in summary["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for row in summary["rows"]:
        if report_only and "psi" in row:
            print(f"{row['policy']} seed={row['seed']}: psi={row['psi']:.3e} lim_acc={row['lim_acc']:.3e} "
                  f"lim_g={row['lim_g']:.3e} u_l*kappa={row['ul_kappa']:.3e}")
        if "checks" in row:
            for name, ok in row["checks"].items():
                print(f"{'PASS' if ok else 'FAIL'}  {row['policy']} offset={row['offset']} "
                      f"seed={row['seed']}: {name}")
    print(f"bundle written to {cfg.output_dir}")
    if summary["errors"]:
        for e in summary["errors"]:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.check and not summary["passed"]:
        return EXIT_CHECK
    return EXIT_OK


def cmd_bounds(args):
    return cmd_run(args, report_only=True)


def parse_sigma_spec(spec):
    """``pb1``..``pb4`` or ``sigma=1,2,3;sigma_s=1e-5,2e-5,3e-5``."""
    if spec.strip().lower().replace(".", "") in data.STANDARD_SYSTEMS:
        return spec, None, None
    parts = {}
    for item in spec.split(";"):
        if "=" not in item:
            raise ConfigError(f"bad system spec {spec!r}")
        key, vals = item.split("=", 1)
        parts[key.strip().lower()] = [float(v) for v in vals.split(",") if v.strip()]
    if set(parts) != {"sigma", "sigma_s"}:
        raise ConfigError("system spec needs sigma=... and sigma_s=...")
    return None, parts["sigma"], parts["sigma_s"]


def cmd_gen_system(args):
    name, sigma, sigma_s = parse_sigma_spec(args.spec)
    if name:
        sy = data.standard_system(name, args.n, args.seed)
    else:
        sy = data.generate_normal_eq_system(sigma, sigma_s, seed=args.seed)
    text = json.dumps(sy.to_dict())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_solve(args):
    try:
        with open(args.system) as fh:
            sy = data.NormalEqSystem.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read system {args.system}: {exc}") from exc
    out = linsolve.solve_system(sy, args.method, Tier.parse(args.tier), args.maxit, args.tol)
    if args.trace:
        from .experiments import solver_trace
        solver_trace(out, args.method).write_csv(args.trace, timing=False)
    print(json.dumps({"method": args.method, "tier": args.tier, "iterations": out.iterations,
                      "rel_error": out.rel_errors[-1] if out.rel_errors else None,
                      "residual": out.final_residual_norm, "converged": out.converged,
                      "x": np.asarray(out.x, float).tolist()}))
    return EXIT_OK


def cmd_dataset(args):
    path = data.fetch(args.name, args.cache, args.url, args.sha256)
    ds = data.load_dataset(args.name, path, cache=args.cache)
    print(f"{ds.name}: {ds.features.shape[0]} rows, {ds.features.shape[1]} features, raw file {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mpnewton", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run an experiment config"), ("bounds", "compute bound reports only")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        s.add_argument("--output-dir")
        s.add_argument("--no-timing", action="store_true", help="write zero elapsed_ns columns")
        s.add_argument("--check", action="store_true", help="exit 4 when an acceptance check fails")

    s = sub.add_parser("gen-system", help="generate an extended normal-equation system")
    s.add_argument("spec", help="pb1..pb4 or 'sigma=..;sigma_s=..'")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")

    s = sub.add_parser("solve", help="solve a generated system")
    s.add_argument("system")
    s.add_argument("--method", choices=linsolve.SOLVERS, required=True)
    s.add_argument("--tier", default="32")
    s.add_argument("--maxit", type=int, default=60)
    s.add_argument("--tol", type=float, default=0.0)
    s.add_argument("--trace", help="write the residual history as a trace CSV")

    s = sub.add_parser("dataset", help="dataset management")
    dsub = s.add_subparsers(dest="action", required=True)
    f = dsub.add_parser("fetch", help=f"place a dataset in the cache (${data.CACHE_ENV})")
    f.add_argument("name")
    f.add_argument("--cache")
    f.add_argument("--url")
    f.add_argument("--sha256")
    return p


COMMANDS = {"run": cmd_run, "bounds": cmd_bounds, "gen-system": cmd_gen_system,
            "solve": cmd_solve, "dataset": cmd_dataset}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, data.DatasetError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, OverflowError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
