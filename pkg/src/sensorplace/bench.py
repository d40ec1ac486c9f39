"""Error metrics, evaluation, and the three benchmark experiments with reproducible reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Dataset, SplitAssignment
from .design import DesignMatrix
from .errors import ArityError, ConfigurationError, EvaluationError, SensorPlaceError, ShapeError
from .interpolator import GradientBoostedTrees, RegressorConfig
from .placement import ActiveLearningConfig, Placement, StrategyDescriptor, place, random_placements
from .temporal import DeploymentPlan, Scheme, allocate_plan, extract_training_rows, sample_days

log = logging.getLogger(__name__)

METRICS = ("MAE", "RMSE")
SPATIAL_BUDGETS = (10, 25, 50, 75, 100)
BASELINES = ("random", "existing", "all_training_data")
RANDOM_REPETITIONS = 1000
RANDOM_REPETITIONS_FAST = 100
COMPARISON_STEP = 50
REPORT_COLUMNS = ("city", "strategy", "feature_subset", "budget", "deployment", "scheme",
                  "metric", "value", "n", "seed", "config_digest")


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class EvaluationResult:
    metric: str
    value: float
    n: int


def compute_error(y_true, y_pred, metric: str = "MAE") -> EvaluationResult:
    y = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if y.shape != p.shape:
        raise ShapeError(f"{y.size} true values but {p.size} predictions")
    if y.size == 0:
        raise ArityError("error metrics need at least one value")
    m = metric.upper()
    diff = y - p
    if m == "MAE":
        value = float(np.abs(diff).mean())
    elif m == "RMSE":
        value = float(math.sqrt((diff * diff).mean()))
    else:
        raise ConfigurationError(f"unknown metric {metric!r}")
    return EvaluationResult(m, value, int(y.size))


# --------------------------------------------------------------- evaluation

class Evaluator:
    """Fits the interpolator on a deployment and scores it on every test observation.

    The design matrix and test inputs are built once and shared across calls.
    """

    def __init__(self, dataset: Dataset, split: SplitAssignment, regressor=None,
                 metrics: Sequence[str] = METRICS):
        self.dataset = dataset
        self.split = split
        if regressor is None:
            regressor = GradientBoostedTrees()
        elif isinstance(regressor, RegressorConfig):
            regressor = GradientBoostedTrees(regressor)
        self.regressor = regressor
        self.metrics = tuple(m.upper() for m in metrics)
        self.design = DesignMatrix(dataset, split.sorted("train"))
        self.test_X, self.test_y = self.design.segment_observations(split.sorted("test"))
        if self.test_y.size == 0:
            raise EvaluationError("test segments have no observations")

    def training_rows(self, deployment) -> np.ndarray:
        if isinstance(deployment, DeploymentPlan):
            extra = set(deployment.locations) - self.split.train
            if extra:
                raise EvaluationError(f"plan uses non-training segments {sorted(extra)[:5]}")
            return extract_training_rows(deployment, self.dataset).index
        ids = deployment.selected if isinstance(deployment, Placement) else tuple(int(i) for i in deployment)
        extra = set(ids) - self.split.train
        if extra:
            raise EvaluationError(f"placement uses non-training segments {sorted(extra)[:5]}")
        return self.dataset.segment_rows(ids)

    def evaluate(self, deployment) -> dict[str, EvaluationResult]:
        """``deployment`` is a Placement or id list (permanent) or a DeploymentPlan."""
        rows = self.training_rows(deployment)
        if rows.size == 0:
            raise EvaluationError("deployment yields no training observations")
        X, y = self.design.observations(rows)
        model = self.regressor.fit(X, y)
        pred = model.predict(self.test_X)
        return {m: compute_error(self.test_y, pred, m) for m in self.metrics}


def evaluate_placement(dataset: Dataset, split: SplitAssignment, placement, deployment="permanent",
                       regressor=None, metrics: Sequence[str] = METRICS,
                       evaluator: Evaluator | None = None) -> dict[str, EvaluationResult]:
    ev = evaluator or Evaluator(dataset, split, regressor, metrics)
    if isinstance(deployment, DeploymentPlan):
        return ev.evaluate(deployment)
    if deployment != "permanent":
        raise ConfigurationError(f"unknown deployment {deployment!r}")
    return ev.evaluate(placement)


# ------------------------------------------------------- equivalent count

def equivalent_sensor_count(permanent, curve: Sequence[tuple[float, float]]) -> float | None:
    """Smallest observation count whose interpolated temporary MAE reaches the permanent MAE.

    ``permanent`` is a ``(K, MAE)`` pair or just the MAE. Returns ``None``
    when no point of the curve gets that low.
    """
    target = float(permanent[1] if isinstance(permanent, (tuple, list)) else permanent)
    pts = sorted((float(c), float(m)) for c, m in curve)
    if len(pts) < 2:
        raise ArityError("the temporary curve needs at least two points")
    if pts[0][1] <= target:
        return pts[0][0]
    for (c0, m0), (c1, m1) in zip(pts, pts[1:]):
        if m1 == target:
            return c1
        if m1 < target:
            return c0 + (m0 - target) / (m0 - m1) * (c1 - c0)
    return None


# ------------------------------------------------------------------ reports

@dataclass(frozen=True)
class ReportRow:
    city: str
    strategy: str
    feature_subset: str
    budget: int
    deployment: str
    scheme: str
    metric: str
    value: float | None
    n: int
    seed: int
    config_digest: str

    def cells(self) -> list:
        value = "unattainable" if self.value is None else repr(float(self.value))
        return [self.city, self.strategy, self.feature_subset, self.budget, self.deployment,
                self.scheme, self.metric, value, self.n, self.seed, self.config_digest]

    def sort_key(self):
        return (self.strategy, self.feature_subset, self.deployment, self.scheme, self.budget,
                self.seed, self.metric)


@dataclass
class BenchmarkReport:
    experiment: str
    rows: list[ReportRow] = field(default_factory=list)
    recipes: dict[str, dict] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def sorted(self) -> "BenchmarkReport":
        self.rows.sort(key=ReportRow.sort_key)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"experiment": self.experiment, "meta": self.meta,
                "recipes": {k: self.recipes[k] for k in sorted(self.recipes)}}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "report.csv", out / "report.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path) -> "BenchmarkReport":
        csv_path = Path(csv_path)
        rows = []
        with open(csv_path, newline="") as fh:
            for r in csv.DictReader(fh):
                value = None if r["value"] == "unattainable" else float(r["value"])
                rows.append(ReportRow(r["city"], r["strategy"], r["feature_subset"], int(r["budget"]),
                                      r["deployment"], r["scheme"], r["metric"], value, int(r["n"]),
                                      int(r["seed"]), r["config_digest"]))
        side = csv_path.with_suffix(".json")
        doc = json.loads(side.read_text()) if side.exists() else {}
        return cls(doc.get("experiment", "report"), rows, doc.get("recipes", {}), doc.get("meta", {}))

    def select(self, **match) -> list[ReportRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]


def digest(recipe: Mapping) -> str:
    blob = json.dumps(recipe, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def environment_metadata() -> dict:
    import numba
    import pandas
    import scipy
    import shapely
    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pandas.__version__, "numba": numba.__version__, "shapely": shapely.__version__,
            "sensorplace": __version__}


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class BenchSettings:
    """Settings shared by every row of one benchmark run."""

    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    active: ActiveLearningConfig = field(default_factory=ActiveLearningConfig)
    greedy_cells: int = 200
    jobs: int = 1

    def to_dict(self) -> dict:
        return {"regressor": self.regressor.to_dict(), "active_learning": self.active.to_dict(),
                "greedy_cells": self.greedy_cells}


class _Run:
    """Shared state for one benchmark: dataset, split, evaluator, placement cache."""

    def __init__(self, dataset, split, settings: BenchSettings, experiment: str, regressor=None):
        self.dataset = dataset
        self.split = split
        self.settings = settings
        self.experiment = experiment
        self.evaluator = Evaluator(dataset, split, regressor or settings.regressor)
        self.report = BenchmarkReport(experiment)
        self.base = {"experiment": experiment, "dataset": dataset.fingerprint(),
                     "split": {"seed": split.seed, "fractions": list(split.fractions),
                               "test": digest({"ids": split.sorted("test")})},
                     **settings.to_dict()}
        if regressor is not None and not isinstance(regressor, RegressorConfig):
            self.base["regressor"] = regressor.describe()
        self._placements: dict = {}

    def placement(self, strategy: StrategyDescriptor, budget: int, seed: int, initial=()) -> Placement:
        key = (strategy, budget, seed, tuple(initial))
        if key not in self._placements:
            self._placements[key] = place(self.dataset, self.split, strategy, budget, seed, initial=initial,
                                          design=self.evaluator.design, active=self.settings.active,
                                          greedy_cells=self.settings.greedy_cells)
        return self._placements[key]

    def add(self, recipe: dict, results: Mapping[str, EvaluationResult | None], *, strategy: str,
            feature_subset: str = "", budget: int, deployment: str, scheme: str = "", seed: int,
            n: int | None = None):
        for metric, res in results.items():
            rec = {**self.base, **recipe, "metric": metric}
            key = digest(rec)
            self.report.recipes[key] = rec
            value = None if res is None else res.value
            count = n if n is not None else (res.n if res is not None else 0)
            self.report.rows.append(ReportRow(self.dataset.name, strategy, feature_subset, budget,
                                              deployment, scheme, metric, value, count, seed, key))

    def finish(self, **meta) -> BenchmarkReport:
        self.report.meta.update({"city": self.dataset.name, "environment": environment_metadata(),
                                 "study_area_derived": self.dataset.study_area.derived,
                                 "settings": self.settings.to_dict(), **meta})
        return self.report.sorted()


def _map(jobs: int, fn: Callable, items: Sequence):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _subset_name(strategy: StrategyDescriptor) -> str:
    return strategy.feature_subset.name if strategy.feature_subset is not None else ""


def _strategy_recipe(s: StrategyDescriptor) -> dict:
    return s.to_dict()


def default_budgets(dataset: Dataset, split: SplitAssignment) -> list[int]:
    budgets = set(SPATIAL_BUDGETS)
    if dataset.existing:
        budgets.add(len(dataset.existing))
    return sorted(b for b in budgets if b <= len(split.train))


# ---------------------------------------------------------------- spatial

def run_spatial_benchmark(dataset: Dataset, split: SplitAssignment, *,
                          strategies: Sequence[StrategyDescriptor | str] = (),
                          budgets: Sequence[int] | None = None,
                          baselines: Sequence[str] = BASELINES, seeds: Sequence[int] = (0,),
                          repetitions: int = RANDOM_REPETITIONS, extend_existing: bool = False,
                          settings: BenchSettings = BenchSettings(), regressor=None) -> BenchmarkReport:
    """Permanent deployments: one row per (strategy, budget, seed, metric)."""
    strategies = [StrategyDescriptor.parse(s) if isinstance(s, str) else s for s in strategies]
    for b in baselines:
        if b not in BASELINES:
            raise ConfigurationError(f"unknown baseline {b!r}")
    run = _Run(dataset, split, settings, "spatial", regressor)
    budgets = default_budgets(dataset, split) if budgets is None else sorted(set(int(b) for b in budgets))
    existing = tuple(dataset.existing) if extend_existing else ()
    if extend_existing and not existing:
        raise ConfigurationError("extend_existing needs an existing-sensor list")
    ev = run.evaluator

    tasks = []
    for strategy in strategies:
        for K in budgets:
            if K < len(existing) or K > len(split.train):
                continue
            for seed in seeds:
                tasks.append((strategy, K, seed))

    def run_strategy(task):
        strategy, K, seed = task
        try:
            p = run.placement(strategy, K, seed, existing)
        except SensorPlaceError as exc:
            raise type(exc)(f"strategy {strategy.label}: {exc}") from exc
        return p, ev.evaluate(p)

    for (strategy, K, seed), (p, res) in zip(tasks, _map(settings.jobs, run_strategy, tasks)):
        recipe = {"kind": "placement", "strategy": _strategy_recipe(strategy), "budget": K, "seed": seed,
                  "initial": list(existing)}
        run.add(recipe, res, strategy=strategy.family, feature_subset=_subset_name(strategy), budget=K,
                deployment="permanent", seed=seed)

    if "random" in baselines:
        for K in budgets:
            if K < len(existing) or K > len(split.train):
                continue
            for seed in seeds:
                draws = random_placements(split.sorted("train"), K, repetitions, seed, existing)
                results = _map(settings.jobs, ev.evaluate, draws)
                for stat, fn in (("min", np.min), ("median", np.median), ("max", np.max)):
                    agg = {m: EvaluationResult(m, float(fn([r[m].value for r in results])), results[0][m].n)
                           for m in ev.metrics}
                    recipe = {"kind": "random", "budget": K, "seed": seed, "repetitions": repetitions,
                              "stat": stat, "initial": list(existing)}
                    run.add(recipe, agg, strategy=f"random_{stat}", budget=K, deployment="permanent", seed=seed)
    if "existing" in baselines and dataset.existing:
        recipe = {"kind": "ids", "ids": sorted(dataset.existing)}
        run.add(recipe, ev.evaluate(dataset.existing), strategy="existing", budget=len(dataset.existing),
                deployment="permanent", seed=seeds[0])
    if "all_training_data" in baselines:
        ids = split.sorted("train")
        recipe = {"kind": "ids", "ids": "train"}
        run.add(recipe, ev.evaluate(ids), strategy="all_training_data", budget=len(ids),
                deployment="permanent", seed=seeds[0])
    return run.finish(repetitions=repetitions,
                      random_mode="fast" if repetitions == RANDOM_REPETITIONS_FAST else
                      ("full" if repetitions == RANDOM_REPETITIONS else "custom"),
                      extend_existing=extend_existing)


# --------------------------------------------------------------- temporal

ROTATING_SCHEMES = tuple(Scheme("rotating", d) for d in (1, 2, 5, 10))


def _parse_schemes(schemes) -> list[Scheme]:
    return [Scheme.parse(s) if isinstance(s, str) else s for s in schemes]


def build_plan(dataset: Dataset, locations: Sequence[int], scheme: Scheme, D: int, seed: int) -> DeploymentPlan:
    dates = sample_days(dataset.calendar, D, seed)
    return allocate_plan(scheme, dates, locations, dataset.calendar, seed)


def run_temporal_benchmark(dataset: Dataset, split: SplitAssignment, *,
                           schemes: Sequence[Scheme | str] = ROTATING_SCHEMES,
                           day_budgets: Sequence[int] = (100,),
                           strategy: StrategyDescriptor | str = "dispersion", seeds: Sequence[int] = (0,),
                           settings: BenchSettings = BenchSettings(), regressor=None) -> BenchmarkReport:
    """Temporary deployments; all schemes at one (D, seed) share the sampled dates."""
    strategy = StrategyDescriptor.parse(strategy) if isinstance(strategy, str) else strategy
    schemes = _parse_schemes(schemes)
    run = _Run(dataset, split, settings, "temporal", regressor)
    n_train = len(split.train)
    need = max(math.ceil(D / s.days_per_location) for s in schemes for D in day_budgets)
    K = min(need, n_train)

    tasks = [(seed, D, s) for seed in seeds for D in day_budgets for s in schemes]

    def one(task):
        seed, D, scheme = task
        locations = run.placement(strategy, K, seed).selected
        try:
            plan = build_plan(dataset, locations, scheme, D, seed)
        except SensorPlaceError as exc:
            log.warning("%s D=%d seed=%d: %s", scheme.label, D, seed, exc)
            return None, str(exc)
        extracted = extract_training_rows(plan, dataset)
        return run.evaluator.evaluate(plan), {"gaps": extracted.n_gaps,
                                              "substitutions": len(plan.substitutions)}

    for seed in seeds:  # placements are computed once, before fanning out
        run.placement(strategy, K, seed)
    notes = {}
    for (seed, D, scheme), (res, info) in zip(tasks, _map(settings.jobs, one, tasks)):
        recipe = {"kind": "plan", "strategy": _strategy_recipe(strategy), "locations_budget": K,
                  "scheme": scheme.label, "day_budget": D, "seed": seed}
        if res is None:
            res = {m: None for m in run.evaluator.metrics}
            notes[digest({**run.base, **recipe})] = {"error": info}
        run.add(recipe, res, strategy=strategy.family, feature_subset=_subset_name(strategy), budget=D,
                deployment="temporary", scheme=scheme.label, seed=seed)
        if isinstance(info, dict) and (info["gaps"] or info["substitutions"]):
            notes[digest({**run.base, **recipe})] = info
    return run.finish(notes=notes, evenly_cyclic=any(s.target == "evenly" for s in schemes))


# ------------------------------------------------------------ comparison

def run_comparison(dataset: Dataset, split: SplitAssignment, *,
                   strategy: StrategyDescriptor | str = "dispersion", budgets: Sequence[int] | None = None,
                   equivalent_budgets: Sequence[int] | None = None, seeds: Sequence[int] = (0,),
                   scheme: Scheme | str = Scheme("weekday", 1, "evenly"),
                   settings: BenchSettings = BenchSettings(), regressor=None) -> BenchmarkReport:
    """Paired permanent and temporary rows over shared location lists.

    Temporary deployments observe each location on one day; ``budgets``
    default to a 50-observation grid up to the training-set size. Each
    ``equivalent_budgets`` permanent MAE is translated into an equivalent
    number of temporary observations.
    """
    strategy = StrategyDescriptor.parse(strategy) if isinstance(strategy, str) else strategy
    scheme = Scheme.parse(scheme) if isinstance(scheme, str) else scheme
    if scheme.days_per_location != 1:
        raise ConfigurationError("the comparison uses one day per location")
    run = _Run(dataset, split, settings, "compare", regressor)
    n_train = len(split.train)
    if budgets is None:
        budgets = list(range(COMPARISON_STEP, n_train + 1, COMPARISON_STEP))
    budgets = sorted(set(int(b) for b in budgets if b <= n_train))
    if equivalent_budgets is None:
        equivalent_budgets = default_budgets(dataset, split)
    equivalent_budgets = sorted(set(int(b) for b in equivalent_budgets if b <= n_train))
    K = max(budgets + equivalent_budgets)
    for seed in seeds:
        run.placement(strategy, K, seed)

    tasks = []
    for seed in seeds:
        for b in budgets:
            tasks += [(seed, b, "permanent"), (seed, b, "temporary")]
        for b in equivalent_budgets:
            if b not in budgets:
                tasks.append((seed, b, "permanent"))

    def one(task):
        seed, b, dep = task
        locations = run.placement(strategy, K, seed).selected[:b]
        if dep == "permanent":
            return run.evaluator.evaluate(locations)
        return run.evaluator.evaluate(build_plan(dataset, locations, scheme, b, seed))

    results = dict(zip(tasks, _map(settings.jobs, one, tasks)))
    for (seed, b, dep), res in results.items():
        recipe = {"kind": "compare", "strategy": _strategy_recipe(strategy), "locations_budget": K,
                  "budget": b, "deployment": dep, "scheme": scheme.label if dep == "temporary" else "",
                  "seed": seed}
        run.add(recipe, res, strategy=strategy.family, feature_subset=_subset_name(strategy), budget=b,
                deployment=dep, scheme=recipe["scheme"], seed=seed)
    for seed in seeds:
        curve = [(b, results[(seed, b, "temporary")]["MAE"].value) for b in budgets]
        if len(curve) < 2:
            continue
        for b in equivalent_budgets:
            target = results[(seed, b, "permanent")]["MAE"].value
            count = equivalent_sensor_count((b, target), curve)
            recipe = {"kind": "equivalent", "strategy": _strategy_recipe(strategy), "locations_budget": K,
                      "budget": b, "curve": budgets, "scheme": scheme.label, "seed": seed}
            res = {"equivalent_observations": None if count is None
                   else EvaluationResult("equivalent_observations", count, len(curve))}
            run.add(recipe, res, strategy=strategy.family, feature_subset=_subset_name(strategy), budget=b,
                    deployment="equivalent", scheme=scheme.label, seed=seed, n=len(curve))
    return run.finish(step=COMPARISON_STEP)


compare_permanent_temporary = run_comparison


# ------------------------------------------------------------------ replay

def replay_row(dataset: Dataset, split: SplitAssignment, recipe: Mapping, regressor=None) -> float | None:
    """Recompute one report row from its recipe."""
    settings = BenchSettings(RegressorConfig(**recipe["regressor"]) if "n_trees" in recipe["regressor"]
                             else RegressorConfig(),
                             ActiveLearningConfig(recipe["active_learning"]["members"],
                                                  recipe["active_learning"]["time_subsample"],
                                                  RegressorConfig(**recipe["active_learning"]["regressor"])),
                             recipe["greedy_cells"])
    run = _Run(dataset, split, settings, recipe["experiment"], regressor)
    if run.base["dataset"] != recipe["dataset"]:
        raise EvaluationError("dataset differs from the one the row was computed on")
    ev = run.evaluator
    metric = recipe["metric"]
    kind = recipe["kind"]
    if kind == "placement":
        s = StrategyDescriptor.from_dict(recipe["strategy"])
        p = run.placement(s, recipe["budget"], recipe["seed"], tuple(recipe["initial"]))
        return ev.evaluate(p)[metric].value
    if kind == "random":
        draws = random_placements(split.sorted("train"), recipe["budget"], recipe["repetitions"],
                                  recipe["seed"], tuple(recipe["initial"]))
        vals = [ev.evaluate(d)[metric].value for d in draws]
        return float({"min": np.min, "median": np.median, "max": np.max}[recipe["stat"]](vals))
    if kind == "ids":
        ids = split.sorted("train") if recipe["ids"] == "train" else recipe["ids"]
        return ev.evaluate(ids)[metric].value
    s = StrategyDescriptor.from_dict(recipe["strategy"])
    locations = run.placement(s, recipe["locations_budget"], recipe["seed"]).selected
    if kind == "plan":
        plan = build_plan(dataset, locations, Scheme.parse(recipe["scheme"]), recipe["day_budget"],
                          recipe["seed"])
        return ev.evaluate(plan)[metric].value
    if kind == "compare":
        b = recipe["budget"]
        if recipe["deployment"] == "permanent":
            return ev.evaluate(locations[:b])[metric].value
        plan = build_plan(dataset, locations[:b], Scheme.parse(recipe["scheme"]), b, recipe["seed"])
        return ev.evaluate(plan)[metric].value
    if kind == "equivalent":
        scheme = Scheme.parse(recipe["scheme"])
        curve = [(b, ev.evaluate(build_plan(dataset, locations[:b], scheme, b, recipe["seed"]))["MAE"].value)
                 for b in recipe["curve"]]
        target = ev.evaluate(locations[:recipe["budget"]])["MAE"].value
        return equivalent_sensor_count(target, curve)
    raise EvaluationError(f"unknown recipe kind {kind!r}")
