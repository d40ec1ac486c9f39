import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorplace.dataset import (SyntheticCityConfig, filter_outliers, generate_synthetic_city, load_dataset,
                                 save_dataset, split_segments)
from sensorplace.errors import BundleError, DataError, IntegrityError, ParseError, SplitError


def write_bundle(root, obs=None, temporal=True):
    root.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"segment_id": [1, 2], "midpoint_x": [5.0, 15.0], "midpoint_y": [5.0, 5.0],
                  "endpoint_a": [10, 11], "endpoint_b": [11, 12]}).to_csv(root / "segments.csv", index=False)
    pd.DataFrame({"segment_id": [1, 2], "lanes": [1, 2], "surface": ["asphalt", "cobblestone"]}).to_csv(
        root / "static_features.csv", index=False)
    if obs is None:
        obs = pd.DataFrame({"segment_id": [1, 1, 2, 2], "date": ["2020-01-01", "2020-01-02"] * 2,
                            "count": [3, 4, 5, 6]})
    obs.to_csv(root / "observations.csv", index=False)
    if temporal:
        pd.DataFrame({"date": ["2020-01-01", "2020-01-02"], "temperature": [1.5, 2.0]}).to_csv(
            root / "temporal_features.csv", index=False)
    (root / "boundary.json").write_text(json.dumps([[[0, 0], [20, 0], [20, 10], [0, 10]]]))
    return root


def test_minimal_bundle(tmp_path):
    ds = load_dataset(write_bundle(tmp_path / "b"))
    assert ds.N == 2 and ds.J == 2 and len(ds.obs_count) == 4
    assert ds.graph.adjacency[1] == {2}
    assert ds.schema.names("temporal") == ["temperature"]
    assert ds.study_area.area == 200.0


def test_bundle_without_temporal_features(tmp_path):
    ds = load_dataset(write_bundle(tmp_path / "b", temporal=False))
    assert ds.schema.names("temporal") == [] and len(ds.temporal.columns) == 0


def test_unknown_segment_names_row(tmp_path):
    obs = pd.DataFrame({"segment_id": [1, 999], "date": ["2020-01-01"] * 2, "count": [1, 2]})
    with pytest.raises(IntegrityError, match="row 2"):
        load_dataset(write_bundle(tmp_path / "b", obs))


def test_bad_counts(tmp_path):
    obs = pd.DataFrame({"segment_id": [1, 2], "date": ["2020-01-01"] * 2, "count": ["7", "lots"]})
    with pytest.raises(ParseError):
        load_dataset(write_bundle(tmp_path / "a", obs))
    obs = pd.DataFrame({"segment_id": [1, 2], "date": ["2020-01-01"] * 2, "count": [-1, 2]})
    with pytest.raises(DataError):
        load_dataset(write_bundle(tmp_path / "b", obs))


def test_missing_file(tmp_path):
    root = write_bundle(tmp_path / "b")
    (root / "observations.csv").unlink()
    with pytest.raises(BundleError):
        load_dataset(root)


def test_round_trip(tmp_path, small_city):
    ds, _ = small_city
    again = load_dataset(save_dataset(ds, tmp_path / "city"))
    assert again == ds
    assert again.fingerprint() == ds.fingerprint()


def test_outlier_fixture():
    ds, _ = generate_synthetic_city(SyntheticCityConfig(width=2, height=2, n_days=21, noise_scale=0))
    obs = ds.observations.copy()
    obs.loc[obs["segment_id"] == 0, "count"] = 10
    obs.loc[obs.index[20], "count"] = 1000
    filtered, report = filter_outliers(ds.with_observations(obs))
    assert len(report.removed) == 1 and int(report.removed["count"].iloc[0]) == 1000
    assert report.removal_fraction == pytest.approx(1 / len(obs))
    again, second = filter_outliers(filtered)
    assert len(second.removed) == 0
    # constant segments are untouched
    const = ds.with_observations(obs.assign(count=7))
    assert len(filter_outliers(const)[1].removed) == 0


def test_outliers_match_direct_computation(small_city):
    ds, _ = small_city
    obs = ds.observations.copy()
    obs.loc[obs.index[::37], "count"] *= 30
    _, report = filter_outliers(ds.with_observations(obs), 2.5)
    g = obs.groupby("segment_id")["count"]
    z = (obs["count"] - g.transform("mean")).abs() > 2.5 * g.transform("std")
    assert len(report.removed) == int(z.sum())


@pytest.mark.parametrize("n,sizes", [(100, (70, 15, 15)), (20, (14, 3, 3)), (3, (1, 1, 1))])
def test_split_sizes(n, sizes):
    sp = split_segments(list(range(n)), seed=0)
    assert (len(sp.train), len(sp.val), len(sp.test)) == sizes
    assert sp == split_segments(list(range(n)), seed=0)


def test_split_errors_and_pinning():
    with pytest.raises(SplitError):
        split_segments([1, 2], seed=0)
    with pytest.raises(SplitError):
        split_segments(list(range(10)), (0.5, 0.5, 0.5), seed=0)
    sp = split_segments(list(range(40)), seed=1, pinned_train=[0, 1, 2])
    assert {0, 1, 2} <= sp.train


@given(st.integers(3, 400), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_split_partitions(n, seed):
    sp = split_segments(list(range(n)), seed=seed)
    assert sp.train | sp.val | sp.test == set(range(n))
    assert not (sp.train & sp.val or sp.train & sp.test or sp.val & sp.test)


def test_synthetic_generator_contract():
    ds, truth = generate_synthetic_city(SyntheticCityConfig(width=2, height=2, n_days=7))
    assert ds.N == 4
    ds0, truth0 = generate_synthetic_city(SyntheticCityConfig(width=4, height=3, n_days=10, noise_scale=0))
    expected = np.round(np.exp(truth0.log_mean)).ravel()
    np.testing.assert_array_equal(ds0.observations["count"].to_numpy(), expected)
    a, _ = generate_synthetic_city(SyntheticCityConfig(width=5, height=5, n_days=14, seed=8))
    b, _ = generate_synthetic_city(SyntheticCityConfig(width=5, height=5, n_days=14, seed=8))
    assert a == b and a.fingerprint() == b.fingerprint()
    big, _ = generate_synthetic_city(SyntheticCityConfig(n_days=7))
    assert big.N == 760
