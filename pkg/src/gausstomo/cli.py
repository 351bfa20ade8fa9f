"""Command-line driver: ``gausstomo {plan,simulate,estimate,sweep,verify}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds, measurement
from .estimation import (
    AdaptiveTomography,
    HeterodyneTomography,
    StateHandle,
    TransposeTomography,
)
from .experiments import (
    ConfigError,
    config_hash,
    default_workers,
    load_config,
    parse_state,
    planned_samples,
    run_experiment,
    run_sweep,
    verify_suite,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
SIM_SCHEMES = ("heterodyne", "homodyne", "transpose_scheme", "passive_unsqueeze")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--seed", type=int, help="master seed (nonnegative)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel trials (default: $GAUSSTOMO_WORKERS or 1)")
    p.add_argument("--protocol", choices=bounds.PROTOCOLS)


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--state", help='state family, e.g. "squeezed(10)"')
    p.add_argument("--N", type=int, help="number of samples")
    p.add_argument("--epsilon", type=float, help="target trace distance (plans N)")
    p.add_argument("--delta", type=float, help="failure probability")
    p.add_argument("--k-policy", dest="k_policy", choices=("oracle", "energy_bound", "empirical"))
    p.add_argument("--inv-opnorm-bound", dest="inv_opnorm_bound", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gausstomo", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="sample-complexity planner")
    _common(p)
    p.add_argument("--n", type=int, default=1, help="number of modes")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trace-inv-bound", dest="trace_inv_bound", type=float)
    p.add_argument("--inv-opnorm-bound", dest="inv_opnorm_bound", type=float)
    p.add_argument("--k", type=int, help="explicit number of adaptive rounds")

    p = sub.add_parser("simulate", help="draw a sample batch and write it as CSV")
    _common(p)
    _run_flags(p)
    p.add_argument("--scheme", choices=SIM_SCHEMES, default="heterodyne")
    p.add_argument("--quadrature", default="x", help="homodyne selection, e.g. x or xp")

    p = sub.add_parser("estimate", help="run one protocol and write the result as JSON")
    _common(p)
    _run_flags(p)
    p.add_argument("--samples", type=Path, help="estimate from a CSV batch instead of simulating")

    p = sub.add_parser("sweep", help="Monte Carlo study, CSV per axis plus JSON summary")
    _common(p)
    _run_flags(p)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("verify", help="run invariant suites")
    _common(p)
    p.add_argument("--scope", choices=("symplectic", "bounds", "schemes", "all"), default="all")
    return ap


def _overrides(args) -> dict:
    keys = ("state", "N", "epsilon", "delta", "k_policy", "inv_opnorm_bound", "protocol",
            "seed", "trials")
    return {k: getattr(args, k, None) for k in keys}


def _emit(obj, args, name: str) -> None:
    text = json.dumps(obj, indent=2)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / name).write_text(text + "\n")
    print(text)


def _cmd_plan(args) -> int:
    cfg = {}
    if args.config is not None:
        cfg = load_config(args.config, {"protocol": args.protocol}).to_dict()
    protocol = args.protocol or cfg.get("protocol") or "heterodyne"
    try:
        plan = bounds.plan_samples(protocol, args.n, args.epsilon, args.delta,
                                   trace_inv_bound=args.trace_inv_bound,
                                   inv_opnorm_bound=args.inv_opnorm_bound, k=args.k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(plan.to_dict(), args, "plan.json")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    ov = _overrides(args)
    if ov["N"] is None and ov["epsilon"] is None and args.config is None:
        raise ConfigError("simulate needs --N or a config")
    cfg = load_config(args.config, ov)
    truth = parse_state(cfg.state, cfg.seed)
    N = cfg.N if cfg.N is not None else planned_samples(cfg, truth)
    if args.scheme == "heterodyne":
        batch = measurement.sample_heterodyne(truth, N, cfg.seed)
    elif args.scheme == "homodyne":
        batch = measurement.sample_homodyne(truth, list(args.quadrature) if len(args.quadrature)
                                            > 1 else args.quadrature, N, cfg.seed)
    elif args.scheme == "transpose_scheme":
        batch = measurement.sample_transpose_scheme(truth, N, cfg.seed)
    else:
        S = np.eye(2 * truth.n)
        batch = measurement.passive_unsqueeze_heterodyne(truth, S, N, cfg.seed)
    text = measurement.write_batch_csv(batch, n=truth.n)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{batch.scheme}_{cfg.seed}.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    ov = _overrides(args)
    if args.samples is not None:
        with open(args.samples) as fh:
            batch = measurement.read_batch_csv(fh)
        delta = ov["delta"] or 0.05
        protocol = ov["protocol"] or ("transpose" if batch.scheme == "transpose_scheme"
                                      else "heterodyne")
        est = (TransposeTomography(delta) if protocol == "transpose"
               else HeterodyneTomography(delta)).fit(batch)
        _emit(est.result_.to_dict(), args, "estimate.json")
        return EXIT_OK
    if ov["N"] is None and ov["epsilon"] is None and args.config is None:
        raise ConfigError("estimate needs --N, --epsilon or a config")
    cfg = load_config(args.config, ov)
    truth = parse_state(cfg.state, cfg.seed)
    if cfg.protocol == "adaptive":
        est = AdaptiveTomography(epsilon=cfg.epsilon, delta=cfg.delta, k_policy=cfg.k_policy,
                                 inv_opnorm_bound=cfg.inv_opnorm_bound, random_state=cfg.seed)
        est.fit(StateHandle(truth, scheme=cfg.scheme))
    else:
        N = planned_samples(cfg, truth)
        if N > cfg.max_samples:
            raise ConfigError(f"planned sample count {N} exceeds max_samples={cfg.max_samples}")
        if cfg.protocol == "heterodyne":
            batch = measurement.sample_heterodyne(truth, N, cfg.seed)
            est = HeterodyneTomography(cfg.delta, cfg.energy_bound).fit(batch)
        else:
            batch = measurement.sample_transpose_scheme(truth, N, cfg.seed)
            est = TransposeTomography(cfg.delta).fit(batch)
    out = est.result_.to_dict()
    out["config_hash"] = config_hash(cfg)
    _emit(out, args, "estimate.json")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    workers = args.workers if args.workers is not None else default_workers()
    if cfg.sweep_squeeze or cfg.sweep_N:
        tables, summary = run_sweep(cfg, workers)
    else:
        recs, summ = run_experiment(cfg, workers)
        tables = {"trials": [r.row() for r in recs]}
        summary = {"config_hash": config_hash(cfg), "points": [summ]}
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    for axis, rows in tables.items():
        write_csv(rows, out / f"sweep_{axis}.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({"files": sorted(str(p) for p in out.glob("sweep_*.csv")),
                      "summary": str(out / "summary.json")}))
    return EXIT_OK


def _cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = verify_suite(args.scope, seed)
    _emit(report, args, "verify.json")
    return EXIT_OK if report["ok"] else EXIT_VERIFY


COMMANDS = {"plan": _cmd_plan, "simulate": _cmd_simulate, "estimate": _cmd_estimate,
            "sweep": _cmd_sweep, "verify": _cmd_verify}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
