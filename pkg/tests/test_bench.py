import math

import numpy as np
import pytest

from sensorplace.bench import (BenchmarkReport, BenchSettings, Evaluator, compute_error,
                               equivalent_sensor_count, evaluate_placement, replay_row, run_comparison,
                               run_spatial_benchmark, run_temporal_benchmark)
from sensorplace.dataset import SyntheticCityConfig, generate_synthetic_city, split_segments
from sensorplace.errors import ArityError, EvaluationError, ShapeError
from sensorplace.interpolator import KNearestRows, RegressorConfig
from sensorplace.placement import ActiveLearningConfig, StrategyDescriptor, place, random_placements
from sensorplace.temporal import Scheme

FAST = BenchSettings(RegressorConfig(n_trees=20, max_depth=3),
                     ActiveLearningConfig(3, 5, RegressorConfig(n_trees=10, max_depth=3)), greedy_cells=40)


def test_error_fixtures():
    assert compute_error([1, 2, 3], [1, 2, 3], "MAE").value == 0
    assert compute_error([1, 2, 3], [1, 2, 3], "RMSE").value == 0
    assert compute_error([0, 0], [1, -1], "MAE").value == 1
    assert compute_error([0, 0], [1, -1], "RMSE").value == 1
    assert compute_error([0, 4], [0, 0], "MAE").value == 2
    assert compute_error([0, 4], [0, 0], "RMSE").value == pytest.approx(math.sqrt(8), abs=1e-15)
    with pytest.raises(ShapeError):
        compute_error([1, 2], [1])
    with pytest.raises(ArityError):
        compute_error([], [])


def test_rmse_dominates_mae(rng):
    for _ in range(200):
        n = int(rng.integers(1, 50))
        y, p = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        assert compute_error(y, p, "RMSE").value >= compute_error(y, p, "MAE").value - 1e-12


def test_equivalent_count_contract():
    assert equivalent_sensor_count((10, 41.0), [(300, 42.0), (350, 40.0)]) == pytest.approx(325, abs=1e-9)
    assert equivalent_sensor_count(40.0, [(300, 42.0), (350, 40.0), (400, 39.0)]) == 350
    assert equivalent_sensor_count(38.0, [(300, 42.0), (350, 40.0)]) is None
    # multiple crossings: the smallest is reported
    curve = [(50, 50.0), (100, 40.0), (150, 46.0), (200, 30.0)]
    assert equivalent_sensor_count(45.0, curve) == pytest.approx(75.0)
    with pytest.raises(ArityError):
        equivalent_sensor_count(1.0, [(1, 2.0)])


def test_evaluation_contract(small_city, small_split):
    ds, _ = small_city
    ev = Evaluator(ds, small_split, FAST.regressor)
    train = small_split.sorted("train")
    res = ev.evaluate(train[:1])
    assert np.isfinite(res["MAE"].value) and res["MAE"].n == ev.test_y.size
    with pytest.raises(EvaluationError):
        ev.evaluate(small_split.sorted("test")[:1])
    with pytest.raises(EvaluationError):
        ev.evaluate([])
    tiny, _ = generate_synthetic_city(SyntheticCityConfig(width=2, height=2, n_days=7))
    sp = split_segments(tiny, seed=0)
    out = evaluate_placement(tiny, sp, sp.sorted("train")[:1], regressor=FAST.regressor)
    assert np.isfinite(out["MAE"].value)


def test_zero_noise_full_training_beats_small_deployments():
    for seed in range(3):
        ds, _ = generate_synthetic_city(SyntheticCityConfig(n_days=30, seed=seed, noise_scale=0))
        sp = split_segments(ds, seed=seed)
        ev = Evaluator(ds, sp)
        full = ev.evaluate(sp.sorted("train"))["MAE"].value
        small = random_placements(sp.sorted("train"), 10, 5, seed)
        small.append(place(ds, sp, StrategyDescriptor("dispersion"), 10, seed))
        for p in small:
            assert full < ev.evaluate(p)["MAE"].value


def test_knn_regressor_plugs_into_harness(small_city, small_split):
    ds, _ = small_city
    rep = run_spatial_benchmark(ds, small_split, strategies=["dispersion"], budgets=[5], baselines=(),
                                regressor=KNearestRows(3), settings=FAST)
    assert len(rep.rows) == 2
    assert next(iter(rep.recipes.values()))["regressor"]["kind"] == "knn"


def test_spatial_row_accounting_and_replay(small_city, small_split, tmp_path):
    ds, _ = small_city
    rep = run_spatial_benchmark(ds, small_split, strategies=["dispersion"], budgets=[5], baselines=(),
                                settings=FAST)
    assert len(rep.rows) == 2
    rep = run_spatial_benchmark(ds, small_split, strategies=["dispersion", "feature_coverage[connectivity]"],
                                budgets=[4, 6], baselines=("random", "all_training_data"), repetitions=10,
                                settings=FAST)
    random_rows = rep.select(budget=4, deployment="permanent")
    assert len([r for r in random_rows if r.strategy.startswith("random_")]) == 6
    for metric in ("MAE", "RMSE"):
        lo, med, hi = (rep.select(strategy=f"random_{s}", budget=6, metric=metric)[0].value
                       for s in ("min", "median", "max"))
        assert lo <= med <= hi
    by_key = {}
    for r in rep.rows:
        by_key.setdefault((r.strategy, r.feature_subset, r.budget), {})[r.metric] = r.value
    assert all(v["RMSE"] >= v["MAE"] for v in by_key.values())
    for r in rep.rows[:4] + rep.select(strategy="random_median")[:1]:
        assert replay_row(ds, small_split, rep.recipes[r.config_digest]) == r.value
    csv_path, _ = rep.write(tmp_path)
    back = BenchmarkReport.read(csv_path)
    assert back.rows == rep.rows and back.recipes == rep.recipes
    assert rep.to_csv().splitlines()[0] == "city,strategy,feature_subset,budget,deployment,scheme,metric,value,n,seed,config_digest"


def test_temporal_benchmark_shares_dates(small_city, small_split):
    ds, _ = small_city
    rep = run_temporal_benchmark(ds, small_split, day_budgets=[30], seeds=[1], settings=FAST)
    assert len(rep.rows) == 8
    assert {r.scheme for r in rep.rows} == {"rotating_1", "rotating_2", "rotating_5", "rotating_10"}
    for r in rep.rows[:2]:
        assert replay_row(ds, small_split, rep.recipes[r.config_digest]) == r.value


def test_temporal_plan_errors_are_recorded(small_city, small_split):
    ds, _ = small_city
    rep = run_temporal_benchmark(ds, small_split, schemes=[Scheme("weekday", 30, "Mon")], day_budgets=[30],
                                 seeds=[0], settings=FAST)
    assert all(r.value is None for r in rep.rows)
    assert rep.meta["notes"]


def test_comparison_pairs_locations(small_city, small_split):
    ds, _ = small_city
    rep = run_comparison(ds, small_split, budgets=[5, 10, 15], equivalent_budgets=[5], seeds=[0],
                         settings=FAST)
    perm = rep.select(deployment="permanent", metric="MAE")
    temp = rep.select(deployment="temporary", metric="MAE")
    assert [r.budget for r in perm] == [5, 10, 15] and [r.budget for r in temp] == [5, 10, 15]
    pr = rep.recipes[perm[0].config_digest]
    tr = rep.recipes[temp[0].config_digest]
    assert pr["strategy"] == tr["strategy"] and pr["locations_budget"] == tr["locations_budget"]
    assert tr["scheme"] == "weekday_evenly"
    eq = rep.select(deployment="equivalent")
    assert len(eq) == 1 and eq[0].metric == "equivalent_observations"
