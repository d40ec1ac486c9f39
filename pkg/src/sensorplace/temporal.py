"""Temporary-deployment planning: which segment is observed on which day."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import BudgetError, ParameterError, PlanError, SchemaError

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import Dataset

WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
SEASONS = ("spring", "summer", "fall", "winter")
ROTATING_DAYS = (1, 2, 5, 10)


def season_of(d: date) -> str:
    if 3 <= d.month <= 5:
        return "spring"
    if 6 <= d.month <= 8:
        return "summer"
    if 9 <= d.month <= 11:
        return "fall"
    return "winter"


def week_of(d: date) -> date:
    """Monday of the calendar week containing ``d``."""
    return d - timedelta(days=d.weekday())


@dataclass(frozen=True)
class Calendar:
    dates: tuple[date, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ds = tuple(self.dates)
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise SchemaError("calendar dates must be strictly increasing")
        object.__setattr__(self, "dates", ds)
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(ds)})

    def __len__(self):
        return len(self.dates)

    def __contains__(self, d):
        return d in self._index

    def index(self, d: date) -> int:
        return self._index[d]

    @staticmethod
    def weekday(d: date) -> str:
        return WEEKDAYS[d.weekday()]

    @staticmethod
    def season(d: date) -> str:
        return season_of(d)


@dataclass(frozen=True)
class Scheme:
    """Temporal allocation rule.

    ``rotating``: consecutive blocks of ``days_per_location`` dates per
    location. ``weekday``/``seasonal``: the same blocks, then each date is
    moved to ``target`` (a weekday or season name, or ``"evenly"``).
    """

    kind: str = "rotating"
    days_per_location: int = 1
    target: str | None = None

    def __post_init__(self):
        if self.kind not in ("rotating", "weekday", "seasonal"):
            raise ParameterError(f"unknown scheme kind {self.kind!r}")
        if self.days_per_location < 1:
            raise ParameterError("days_per_location must be >= 1")
        allowed = {"weekday": WEEKDAYS, "seasonal": SEASONS}.get(self.kind)
        if allowed is not None and self.target not in (*allowed, "evenly"):
            raise ParameterError(f"{self.kind} scheme needs a target in {allowed + ('evenly',)}")

    @property
    def label(self) -> str:
        if self.kind == "rotating":
            return f"rotating_{self.days_per_location}"
        base = f"{self.kind}_{self.target}"
        return base if self.days_per_location == 1 else f"{base}_{self.days_per_location}"

    @classmethod
    def parse(cls, label: str) -> "Scheme":
        parts = label.split("_")
        try:
            if parts[0] == "rotating" and len(parts) == 2:
                return cls("rotating", int(parts[1]))
            if parts[0] in ("weekday", "seasonal") and len(parts) in (2, 3):
                d = int(parts[2]) if len(parts) == 3 else 1
                return cls(parts[0], d, parts[1])
        except ValueError:
            pass
        raise ParameterError(f"cannot parse scheme {label!r}")


@dataclass(frozen=True)
class DeploymentPlan:
    entries: tuple[tuple[int, date], ...]
    scheme: Scheme
    budget: int
    seed: int
    window_days: int = 1
    substitutions: tuple[tuple[int, date, date], ...] = ()

    def __post_init__(self):
        if len(self.entries) != self.budget:
            raise PlanError("plan size differs from its budget")
        if len(set(self.entries)) != len(self.entries):
            raise PlanError("duplicated (segment, date) pair in plan")

    @property
    def locations(self) -> list[int]:
        return list(dict.fromkeys(s for s, _ in self.entries))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["segment_id", "date", "scheme", "seed"])
        for s, d in self.entries:
            w.writerow([s, d.isoformat(), self.scheme.label, self.seed])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DeploymentPlan":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise PlanError("empty plan file")
        try:
            entries = tuple((int(r["segment_id"]), date.fromisoformat(r["date"])) for r in rows)
            scheme = Scheme.parse(rows[0]["scheme"])
            seed = int(rows[0]["seed"])
        except (KeyError, ValueError) as exc:
            raise PlanError(f"malformed plan file: {exc}") from None
        return cls(entries=entries, scheme=scheme, budget=len(entries), seed=seed)


def sample_days(calendar: Calendar, D: int, seed: int) -> list[date]:
    """Draw ``D`` dates: shuffled passes over the calendar, reused once exhausted."""
    if D <= 0:
        raise ParameterError("D must be positive")
    if len(calendar) == 0:
        raise ParameterError("calendar is empty")
    rng = np.random.default_rng(seed)
    out: list[date] = []
    while len(out) < D:
        out.extend(calendar.dates[i] for i in rng.permutation(len(calendar)))
    return out[:D]


def _dedupe_blocks(dates: list[date], block: int) -> list[date]:
    """Swap later dates forward so no block repeats a date; the multiset is kept."""
    dates = list(dates)
    for start in range(0, len(dates), block):
        used = set()
        for k in range(start, min(start + block, len(dates))):
            if dates[k] in used:
                j = next((j for j in range(k + 1, len(dates)) if dates[j] not in used), None)
                if j is None:
                    raise PlanError("cannot place distinct dates at one location")
                dates[k], dates[j] = dates[j], dates[k]
            used.add(dates[k])
    return dates


def _nearest_in_week(target: date, calendar: Calendar, taken: set) -> date | None:
    monday = week_of(target)
    options = [monday + timedelta(days=i) for i in range(7)]
    options = [d for d in options if d in calendar and d not in taken]
    if not options:
        return None
    return min(options, key=lambda d: (abs((d - target).days), d))


def allocate_plan(scheme: Scheme, dates: Sequence[date], locations: Sequence[int],
                  calendar: Calendar, seed: int = 0) -> DeploymentPlan:
    """Pair sampled dates with locations (in placement order) under ``scheme``."""
    D = len(dates)
    if D == 0:
        raise ParameterError("no dates to allocate")
    d = scheme.days_per_location
    n_loc = math.ceil(D / d)
    if n_loc > len(locations):
        raise BudgetError(f"{scheme.label} with {D} days needs {n_loc} locations, "
                          f"only {len(locations)} available")
    ordered = _dedupe_blocks(list(dates), d)
    if scheme.kind == "rotating":
        entries = tuple((locations[k // d], ordered[k]) for k in range(D))
        return DeploymentPlan(entries, scheme, D, seed)

    rng = np.random.default_rng(seed)
    by_season: dict[tuple[str, int], list[date]] = {}
    if scheme.kind == "seasonal":
        for day in calendar.dates:
            by_season.setdefault((season_of(day), day.weekday()), []).append(day)

    entries, subs = [], []
    taken: dict[int, set] = {}
    for k, day in enumerate(ordered):
        loc_index = k // d
        seg = locations[loc_index]
        used = taken.setdefault(seg, set())
        if scheme.kind == "weekday":
            name = WEEKDAYS[loc_index % 7] if scheme.target == "evenly" else scheme.target
            wanted = week_of(day) + timedelta(days=WEEKDAYS.index(name))
            chosen = wanted if wanted in calendar and wanted not in used else None
            if chosen is None:
                chosen = _nearest_in_week(wanted, calendar, used)
                if chosen is None:
                    raise PlanError(f"no available date in week of {day} for segment {seg}")
                subs.append((k, wanted, chosen))
        else:
            name = SEASONS[loc_index % 4] if scheme.target == "evenly" else scheme.target
            if season_of(day) == name and day not in used:
                chosen = day
            else:
                pool = [x for x in by_season.get((name, day.weekday()), []) if x not in used]
                if not pool:
                    pool = [x for x in calendar.dates if season_of(x) == name and x not in used]
                if not pool:
                    raise PlanError(f"calendar has no free {name} date for segment {seg}")
                chosen = pool[int(rng.integers(len(pool)))]
        used.add(chosen)
        entries.append((seg, chosen))
    return DeploymentPlan(tuple(entries), scheme, D, seed, substitutions=tuple(subs))


@dataclass(frozen=True)
class ExtractedRows:
    """Observation row indices selected by a plan, plus entries with no data."""

    index: np.ndarray
    gaps: tuple[tuple[int, date], ...]

    @property
    def n_gaps(self) -> int:
        return len(self.gaps)


def extract_training_rows(plan: DeploymentPlan | Sequence[tuple[int, date]],
                          dataset: "Dataset") -> ExtractedRows:
    """Every observation row of each planned (segment, date); hourly data yields many."""
    entries = plan.entries if isinstance(plan, DeploymentPlan) else plan
    parts, gaps = [], []
    for seg, day in entries:
        rows = dataset.rows_for(seg, day)
        if rows.size == 0:
            gaps.append((seg, day))
        else:
            parts.append(rows)
    index = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return ExtractedRows(index=index, gaps=tuple(gaps))
