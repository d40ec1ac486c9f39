"""Command-line front end: validate, synth, place, evaluate, bench, report."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .bench import (BASELINES, RANDOM_REPETITIONS, BenchmarkReport, BenchSettings, Evaluator, build_plan,
                    run_comparison, run_spatial_benchmark, run_temporal_benchmark)
from .dataset import (Dataset, SplitAssignment, SyntheticCityConfig, filter_outliers, generate_synthetic_city,
                      load_dataset, save_dataset, split_segments)
from .errors import ConfigurationError, SensorPlaceError
from .interpolator import RegressorConfig
from .placement import ActiveLearningConfig, Placement, StrategyDescriptor, place
from .svgplot import write_plots
from .temporal import DeploymentPlan, Scheme

log = logging.getLogger("sensorplace")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
FRACTIONS = (0.70, 0.15, 0.15)
BENCH_KEYS = {
    "bundle", "synthetic", "split_seed", "fractions", "outlier_sigma", "seeds", "out", "jobs",
    "regressor", "active_learning", "greedy_cells",
    # spatial
    "strategies", "budgets", "baselines", "repetitions", "extend_existing",
    # temporal
    "schemes", "day_budgets", "strategy",
    # compare
    "equivalent_budgets", "scheme",
}


def _setup_logging():
    name = os.environ.get("SENSORPLACE_LOG", "warn").lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if name not in LOG_LEVELS:
        log.warning("SENSORPLACE_LOG=%s not recognised, using warn", name)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _regressor_from(doc: dict | None) -> RegressorConfig:
    try:
        return RegressorConfig(**(doc or {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad regressor settings: {exc}") from None


def _regressor_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("interpolator")
    g.add_argument("--n-trees", type=int)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--min-samples-leaf", type=int)
    g.add_argument("--binning", choices=("exact", "quantile"))


def _regressor_overrides(args) -> dict:
    keys = ("n_trees", "max_depth", "learning_rate", "min_samples_leaf", "binning")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _prepare(ds: Dataset, outlier_sigma: float | None) -> Dataset:
    if outlier_sigma:
        ds, report = filter_outliers(ds, outlier_sigma)
        log.info("outlier filter removed %d of %d observations", report.removed, report.n_total)
    return ds


def _split(ds: Dataset, seed: int, fractions=FRACTIONS) -> SplitAssignment:
    return split_segments(ds, fractions, seed, pinned_train=ds.existing)


def _read_ids(path: Path) -> tuple[int, ...]:
    text = path.read_text().strip()
    if not text:
        return ()
    if text[0] in "[{":
        doc = json.loads(text)
        if isinstance(doc, dict):
            return tuple(Placement.from_json(text).selected)
        return tuple(int(i) for i in doc)
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"{path}: expected segment ids") from None


# --------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    ds = load_dataset(args.bundle)
    summary = {"name": ds.name, "segments": ds.N, "dates": ds.J, "observations": int(ds.obs_count.size),
               "hourly": ds.hourly, "existing_sensors": len(ds.existing),
               "study_area_derived": ds.study_area.derived, "fingerprint": ds.fingerprint()}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    cfg = SyntheticCityConfig(width=args.width, height=args.height, n_days=args.days, seed=args.seed,
                              noise_scale=args.noise, name=args.name)
    ds, _ = generate_synthetic_city(cfg)
    out = save_dataset(ds, args.out)
    _write_json(Path(args.out).with_name(Path(args.out).name + ".config.json"),
                {"command": "synth", **dataclasses.asdict(cfg)})
    print(out)
    return 0


def cmd_place(args) -> int:
    ds = _prepare(load_dataset(args.bundle), args.outlier_sigma)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    split = _split(ds, split_seed)
    strategy = StrategyDescriptor.parse(args.strategy, args.columns.split(",") if args.columns else ())
    initial = _read_ids(Path(args.initial)) if args.initial else ()
    if args.extend_existing:
        initial = tuple(dict.fromkeys((*ds.existing, *initial)))
    active = ActiveLearningConfig(regressor=_regressor_from(_regressor_overrides(args)))
    p = place(ds, split, strategy, args.budget, args.seed, initial=initial, active=active,
              greedy_cells=args.greedy_cells, jobs=args.jobs)
    p = dataclasses.replace(p, options={**p.options, "split_seed": split_seed,
                                        "outlier_sigma": args.outlier_sigma})
    plan = None
    if args.scheme:  # built before anything is written so a bad plan leaves no outputs
        if not args.days or not args.plan_out:
            raise ConfigurationError("--scheme needs --days and --plan-out")
        plan = build_plan(ds, p.selected, Scheme.parse(args.scheme), args.days, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(p.to_json() + "\n")
    effective = {"command": "place", "bundle": str(args.bundle), "strategy": strategy.to_dict(),
                 "budget": args.budget, "seed": args.seed, "split_seed": split_seed, "initial": list(initial),
                 "outlier_sigma": args.outlier_sigma, "greedy_cells": args.greedy_cells,
                 "active_learning": active.to_dict()}
    if plan is not None:
        Path(args.plan_out).write_text(plan.to_csv())
        effective.update(scheme=args.scheme, days=args.days)
    _write_json(out.with_name(out.name + ".config.json"), effective)
    print(out)
    return 0


def cmd_evaluate(args) -> int:
    placement = Placement.from_json(Path(args.placement).read_text())
    options = placement.options or {}
    split_seed = args.split_seed if args.split_seed is not None else options.get("split_seed", placement.seed)
    sigma = args.outlier_sigma if args.outlier_sigma is not None else options.get("outlier_sigma", 3.0)
    ds = _prepare(load_dataset(args.bundle), sigma)
    split = _split(ds, split_seed)
    ev = Evaluator(ds, split, _regressor_from(_regressor_overrides(args)))
    if args.plan:
        deployment = DeploymentPlan.from_csv(Path(args.plan).read_text())
        kind = "temporary"
    else:
        deployment, kind = placement, "permanent"
    res = ev.evaluate(deployment)
    doc = {"deployment": kind, "split_seed": split_seed, "outlier_sigma": sigma,
           "metrics": {m: {"value": r.value, "n": r.n} for m, r in res.items()}}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _write_json(out.with_name(out.name + ".config.json"),
                    {"command": "evaluate", "bundle": str(args.bundle), "placement": str(args.placement),
                     "plan": args.plan, "split_seed": split_seed, "outlier_sigma": sigma,
                     "regressor": ev.regressor.describe()})
    sys.stdout.write(text)
    return 0


def _load_bench_config(args) -> tuple[dict, Path]:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = sorted(set(cfg) - BENCH_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys {unknown}")
    # flags override file values
    if args.seed is not None:
        cfg["seeds"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.repetitions is not None:
        cfg["repetitions"] = args.repetitions
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    if _regressor_overrides(args):
        cfg["regressor"] = {**cfg.get("regressor", {}), **_regressor_overrides(args)}
    if not cfg.get("seeds"):
        raise ConfigurationError("benchmarks need explicit seeds (config 'seeds' or --seed)")
    if "out" not in cfg:
        raise ConfigurationError("no output directory (config 'out' or --out)")
    if ("bundle" in cfg) == ("synthetic" in cfg):
        raise ConfigurationError("config needs exactly one of 'bundle' or 'synthetic'")
    return cfg, path.parent


def _bench_dataset(cfg: dict, base: Path) -> Dataset:
    if "bundle" in cfg:
        bundle = Path(cfg["bundle"])
        return load_dataset(bundle if bundle.is_absolute() else base / bundle)
    syn = dict(cfg["synthetic"])
    if "seed" not in syn:
        raise ConfigurationError("synthetic city needs an explicit seed")
    try:
        return generate_synthetic_city(SyntheticCityConfig(**syn))[0]
    except TypeError as exc:
        raise ConfigurationError(f"bad synthetic settings: {exc}") from None


def cmd_bench(args) -> int:
    cfg, base = _load_bench_config(args)
    seeds = [int(s) for s in cfg["seeds"]]
    ds = _prepare(_bench_dataset(cfg, base), cfg.get("outlier_sigma", 3.0))
    split = split_segments(ds, cfg.get("fractions", FRACTIONS), int(cfg.get("split_seed", seeds[0])),
                           pinned_train=ds.existing)
    al = dict(cfg.get("active_learning", {}))
    active = ActiveLearningConfig(al.get("members", 10), al.get("time_subsample", 30),
                                  _regressor_from(al.get("regressor")))
    settings = BenchSettings(_regressor_from(cfg.get("regressor")), active, int(cfg.get("greedy_cells", 200)),
                             int(cfg.get("jobs") or os.cpu_count() or 1))
    if args.experiment == "spatial":
        strategies = [StrategyDescriptor.parse(s) for s in cfg.get("strategies", ["dispersion"])]
        report = run_spatial_benchmark(ds, split, strategies=strategies, budgets=cfg.get("budgets"),
                                       baselines=cfg.get("baselines", list(BASELINES)), seeds=seeds,
                                       repetitions=int(cfg.get("repetitions", RANDOM_REPETITIONS)),
                                       extend_existing=bool(cfg.get("extend_existing", False)),
                                       settings=settings)
    elif args.experiment == "temporal":
        schemes = [Scheme.parse(s) for s in cfg.get("schemes", ["rotating_1", "rotating_2", "rotating_5",
                                                                 "rotating_10"])]
        report = run_temporal_benchmark(ds, split, schemes=schemes, day_budgets=cfg.get("day_budgets", [100]),
                                        strategy=StrategyDescriptor.parse(cfg.get("strategy", "dispersion")),
                                        seeds=seeds, settings=settings)
    else:
        report = run_comparison(ds, split, strategy=StrategyDescriptor.parse(cfg.get("strategy", "dispersion")),
                                budgets=cfg.get("budgets"), equivalent_budgets=cfg.get("equivalent_budgets"),
                                seeds=seeds, scheme=Scheme.parse(cfg.get("scheme", "weekday_evenly")),
                                settings=settings)
    out = Path(cfg["out"])
    csv_path, _ = report.write(out)
    effective = {k: v for k, v in cfg.items() if k != "jobs"}
    _write_json(out / "config.json", {"command": f"bench {args.experiment}", **effective,
                                      "settings": settings.to_dict()})
    print(csv_path)
    return 0


def cmd_report(args) -> int:
    report = BenchmarkReport.read(args.input)
    out = Path(args.out) if args.out else Path(args.input).parent
    if args.plots:
        for path in write_plots(report, out):
            print(path)
    else:
        sys.stdout.write(report.to_csv())
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorplace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset bundle")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="write a synthetic city bundle")
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--height", type=int, default=20)
    p.add_argument("--days", type=int, default=180)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("place", help="select sensor locations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--strategy", required=True, help="family or family[subset]")
    p.add_argument("--columns", help="comma-separated columns for a custom subset")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--split-seed", type=int, help="defaults to --seed")
    p.add_argument("--initial", help="file with pre-selected segment ids")
    p.add_argument("--extend-existing", action="store_true")
    p.add_argument("--outlier-sigma", type=float, default=3.0, help="0 disables the filter")
    p.add_argument("--greedy-cells", type=int, default=200)
    p.add_argument("--scheme", help="also write a temporary plan, e.g. rotating_1")
    p.add_argument("--days", type=int, help="observation days for --scheme")
    p.add_argument("--plan-out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _regressor_args(p)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("evaluate", help="score a placement or plan on the test segments")
    p.add_argument("--bundle", required=True)
    p.add_argument("--placement", required=True)
    p.add_argument("--plan")
    p.add_argument("--split-seed", type=int, help="defaults to the placement's split seed")
    p.add_argument("--outlier-sigma", type=float)
    p.add_argument("--out")
    _regressor_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("experiment", choices=("spatial", "temporal", "compare"))
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, action="append", help="repeatable; overrides config seeds")
    p.add_argument("--out")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--jobs", type=int)
    _regressor_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-emit a report or render its plots")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--out", help="plot directory; defaults to the report's")
    p.set_defaults(func=cmd_report)
    return parser


def run_cli(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SensorPlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
