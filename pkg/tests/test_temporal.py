from collections import Counter
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorplace.errors import BudgetError, ParameterError, PlanError, SchemaError
from sensorplace.temporal import (WEEKDAYS, Calendar, DeploymentPlan, Scheme, allocate_plan,
                                  extract_training_rows, sample_days, season_of)

START = date(2021, 1, 4)  # a Monday
CAL = Calendar(tuple(START + timedelta(days=i) for i in range(364)))


def test_calendar_rules():
    with pytest.raises(SchemaError):
        Calendar((date(2020, 1, 2), date(2020, 1, 1)))
    assert Calendar.weekday(START) == "Mon"
    assert [season_of(date(2020, m, 1)) for m in (3, 6, 9, 12, 1)] == \
        ["spring", "summer", "fall", "winter", "winter"]


def test_sample_days_exhaust_then_recycle():
    small = Calendar(CAL.dates[:30])
    once = sample_days(small, 30, seed=1)
    assert sorted(once) == list(small.dates)
    twice = sample_days(small, 60, seed=1)
    assert twice[:30] == once
    assert set(twice[:30]) == set(small.dates)
    assert all(v == 2 for v in Counter(twice).values())
    assert sample_days(small, 17, 3) == sample_days(small, 17, 3)
    with pytest.raises(ParameterError):
        sample_days(small, 0, 1)


def test_rotating_blocks():
    days = sample_days(CAL, 4, 0)
    p1 = allocate_plan(Scheme("rotating", 1), days, [10, 11, 12, 13], CAL)
    assert [s for s, _ in p1.entries] == [10, 11, 12, 13]
    p2 = allocate_plan(Scheme("rotating", 2), days, [10, 11, 12, 13], CAL)
    assert [s for s, _ in p2.entries] == [10, 10, 11, 11]
    with pytest.raises(BudgetError):
        allocate_plan(Scheme("rotating", 1), days, [1, 2], CAL)


@given(st.integers(1, 400), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_rotating_schemes_share_date_multiset(D, seed):
    days = sample_days(CAL, D, seed)
    locs = list(range(D))
    ref = None
    for d in (1, 2, 5, 10):
        plan = allocate_plan(Scheme("rotating", d), days, locs, CAL)
        ms = Counter(day for _, day in plan.entries)
        ref = ref or ms
        assert ms == ref
        per_loc = Counter(s for s, _ in plan.entries)
        counts = [per_loc[l] for l in plan.locations]
        assert all(c == d for c in counts[:-1]) and 1 <= counts[-1] <= d


def test_weekday_fixed_target():
    days = sample_days(CAL, 20, 5)
    plan = allocate_plan(Scheme("weekday", 1, "Wed"), days, list(range(20)), CAL)
    for (_, d), orig in zip(plan.entries, days):
        assert d.weekday() == 2
        assert d - timedelta(days=d.weekday()) == orig - timedelta(days=orig.weekday())


def test_weekday_evenly_covers_week():
    days = sample_days(CAL, 14, 2)
    plan = allocate_plan(Scheme("weekday", 1, "evenly"), days, list(range(14)), CAL)
    names = [WEEKDAYS[d.weekday()] for _, d in plan.entries]
    assert names[:7] == list(WEEKDAYS) and names[7:] == list(WEEKDAYS)
    assert Counter(names) == {w: 2 for w in WEEKDAYS}


def test_weekday_gap_substitution_and_error():
    holes = Calendar(tuple(d for d in CAL.dates if not (d.weekday() == 2 and d.month == 3)))
    march = [d for d in holes.dates if d.month == 3][:3]
    plan = allocate_plan(Scheme("weekday", 1, "Wed"), march, [1, 2, 3], holes)
    assert plan.substitutions
    assert all(d.weekday() in (1, 3) for _, d in plan.entries)
    single = Calendar((START,))
    with pytest.raises(PlanError):
        allocate_plan(Scheme("weekday", 2, "Mon"), [START, START], [1], single)


def test_seasonal_targets():
    days = sample_days(CAL, 12, 1)
    plan = allocate_plan(Scheme("seasonal", 1, "summer"), days, list(range(12)), CAL, seed=1)
    assert all(season_of(d) == "summer" for _, d in plan.entries)
    even = allocate_plan(Scheme("seasonal", 1, "evenly"), days, list(range(12)), CAL, seed=1)
    assert [season_of(d) for _, d in even.entries][:4] == ["spring", "summer", "fall", "winter"]


def test_scheme_labels_round_trip():
    for label in ("rotating_1", "rotating_10", "weekday_Mon", "weekday_evenly", "seasonal_fall_2"):
        assert Scheme.parse(label).label == label
    for bad in ("rotating", "weekday_Funday", "daily_1"):
        with pytest.raises(ParameterError):
            Scheme.parse(bad)


def test_plan_csv_round_trip():
    days = sample_days(CAL, 6, 9)
    plan = allocate_plan(Scheme("rotating", 2), days, [5, 6, 7], CAL, seed=9)
    text = plan.to_csv()
    assert text.splitlines()[0] == "segment_id,date,scheme,seed"
    back = DeploymentPlan.from_csv(text)
    assert back.entries == plan.entries and back.scheme == plan.scheme
    with pytest.raises(PlanError):
        DeploymentPlan(((1, START), (1, START)), Scheme(), 2, 0)


def test_extract_rows_daily_and_gaps(small_city):
    ds, _ = small_city
    days = list(ds.calendar.dates[:10])
    plan = allocate_plan(Scheme("rotating", 1), days, list(range(10)), ds.calendar)
    assert extract_training_rows(plan, ds).index.size == 10
    sparse = ds.with_observations(ds.observations[ds.observations["date"] != pd.Timestamp(days[0])])
    ex = extract_training_rows(plan, sparse)
    assert ex.index.size == 9 and ex.gaps == ((0, days[0]),)


def test_extract_rows_hourly(small_city):
    ds, _ = small_city
    day = ds.calendar.dates[0]
    obs = pd.DataFrame({"segment_id": 0, "date": pd.Timestamp(day), "hour": np.arange(24), "count": 1})
    hourly = ds.with_observations(obs)
    assert extract_training_rows([(0, day)], hourly).index.size == 24
