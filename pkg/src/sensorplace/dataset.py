"""Dataset bundles: loading, validation, outlier filtering, splits, synthetic cities.

A bundle is a directory of CSV files plus ``boundary.json`` and
``schema.json``::

    segments.csv               segment_id,midpoint_x,midpoint_y,endpoint_a,endpoint_b
    static_features.csv        segment_id,<static columns>
    temporal_features.csv      date,<temporal columns>            (optional)
    spatiotemporal_features.csv segment_id,date,<columns>          (optional)
    observations.csv           segment_id,date[,hour],count
    boundary.json              [[[x, y], ...]]                    (optional)
    schema.json                {"columns": [...], "city": ...}    (optional)
    existing_sensors.csv       segment_id                         (optional)
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import BundleError, DataError, IntegrityError, ParameterError, ParseError, SchemaError, SplitError
from .features import ColumnSpec, FeatureSchema
from .graph import (DEFAULT_SNAP_TOLERANCE, Segment, SegmentGraph, build_segment_graph,
                    connectivity_features)
from .spatial import StudyArea
from .temporal import WEEKDAYS, Calendar

log = logging.getLogger(__name__)

SEGMENT_COLUMNS = ("segment_id", "midpoint_x", "midpoint_y", "endpoint_a", "endpoint_b")


def _to_day(values) -> np.ndarray:
    return np.asarray(pd.to_datetime(values).values.astype("datetime64[D]"))


class Dataset:
    """Validated city dataset. Treat instances as read-only.

    Observation rows are stored sorted by (segment, date, hour); the
    ``obs_*`` arrays and ``observations`` frame share that row order.
    """

    def __init__(self, segments: Sequence[Segment], schema: FeatureSchema, static: pd.DataFrame,
                 observations: pd.DataFrame, study_area: StudyArea | None = None, *,
                 temporal: pd.DataFrame | None = None, spatiotemporal: pd.DataFrame | None = None,
                 existing: Sequence[int] = (), name: str = "city",
                 snap_tolerance: float = DEFAULT_SNAP_TOLERANCE):
        self.segments = tuple(sorted(segments, key=lambda s: s.id))
        self.graph: SegmentGraph = build_segment_graph(self.segments, snap_tolerance)
        self.ids = np.array([s.id for s in self.segments], dtype=np.int64)
        self._pos = {int(i): k for k, i in enumerate(self.ids)}
        self.midpoints = np.array([s.midpoint for s in self.segments], dtype=float)
        self.schema = schema
        self.name = name
        if study_area is None:
            study_area = StudyArea.from_points(self.midpoints)
        self.study_area = study_area

        self.static = self._check_static(static)
        self.temporal = self._check_temporal(temporal)
        obs = self._check_observations(observations)
        days = obs["date"].to_numpy(dtype="datetime64[D]")
        cal_days = np.unique(days)
        if len(self.temporal):
            cal_days = np.union1d(cal_days, self.temporal.index.to_numpy(dtype="datetime64[D]"))
        self.calendar = Calendar(tuple(d.item() for d in cal_days))
        self._cal_days = cal_days

        seg_idx = np.searchsorted(self.ids, obs["segment_id"].to_numpy())
        day_idx = np.searchsorted(cal_days, days)
        hour = (obs["hour"].to_numpy(dtype=np.int64) if "hour" in obs.columns
                else np.full(len(obs), -1, dtype=np.int64))
        order = np.lexsort((hour, day_idx, seg_idx))
        self.observations = obs.iloc[order].reset_index(drop=True)
        self.obs_seg = seg_idx[order]
        self.obs_day = day_idx[order]
        self.obs_hour = hour[order]
        self.obs_count = self.observations["count"].to_numpy(dtype=float)
        self.seg_ptr = np.searchsorted(self.obs_seg, np.arange(len(self.ids) + 1))
        self.spatiotemporal = self._check_spatiotemporal(spatiotemporal)

        unknown = [e for e in existing if int(e) not in self._pos]
        if unknown:
            raise IntegrityError(f"existing sensors reference unknown segments {unknown}")
        self.existing = tuple(int(e) for e in existing)

    # ---------------------------------------------------------------- checks

    def _check_static(self, static: pd.DataFrame) -> pd.DataFrame:
        static = static.copy()
        if "segment_id" in static.columns:
            static = static.set_index("segment_id")
        static.index = static.index.astype(np.int64)
        static.index.name = "segment_id"
        names = self.schema.names("static")
        missing = [c for c in names if c not in static.columns]
        if missing:
            raise SchemaError(f"static features lack columns {missing}")
        if static.index.has_duplicates:
            raise IntegrityError("static features list a segment twice")
        extra = sorted(set(static.index) - set(self._pos))
        if extra:
            raise IntegrityError(f"static features reference unknown segment {extra[0]}")
        absent = sorted(set(self._pos) - set(static.index))
        if absent:
            raise IntegrityError(f"segment {absent[0]} has no static feature row")
        return static.loc[self.ids, names]

    def _check_temporal(self, temporal) -> pd.DataFrame:
        names = self.schema.names("temporal")
        if temporal is None or len(temporal) == 0:
            if names:
                raise SchemaError(f"schema declares temporal columns {names} but none were given")
            return pd.DataFrame(index=pd.DatetimeIndex([], name="date"))
        temporal = temporal.copy()
        if "date" in temporal.columns:
            temporal = temporal.set_index("date")
        temporal.index = pd.DatetimeIndex(pd.to_datetime(temporal.index), name="date")
        missing = [c for c in names if c not in temporal.columns]
        if missing:
            raise SchemaError(f"temporal features lack columns {missing}")
        if temporal.index.has_duplicates:
            raise IntegrityError("temporal features list a date twice")
        return temporal.sort_index()[names]

    def _check_observations(self, obs: pd.DataFrame) -> pd.DataFrame:
        for col in ("segment_id", "date", "count"):
            if col not in obs.columns:
                raise SchemaError(f"observations lack column {col!r}")
        obs = obs.copy()
        seg = pd.to_numeric(obs["segment_id"], errors="coerce")
        bad = np.flatnonzero(seg.isna().to_numpy())
        if bad.size:
            raise ParseError(f"observations row {bad[0] + 1}: non-numeric segment_id")
        known = np.isin(seg.to_numpy(dtype=np.int64), self.ids)
        if not known.all():
            r = int(np.flatnonzero(~known)[0])
            raise IntegrityError(f"observations row {r + 1}: unknown segment {int(seg.iloc[r])}")
        cnt = pd.to_numeric(obs["count"], errors="coerce")
        bad = np.flatnonzero(cnt.isna().to_numpy())
        if bad.size:
            raise ParseError(f"observations row {bad[0] + 1}: non-numeric count {obs['count'].iloc[bad[0]]!r}")
        c = cnt.to_numpy(dtype=float)
        wrong = (c < 0) | (c != np.round(c))
        if wrong.any():
            raise DataError(f"observations row {int(np.flatnonzero(wrong)[0]) + 1}: counts must be non-negative integers")
        try:
            dates = pd.to_datetime(obs["date"])
        except (ValueError, TypeError) as exc:
            raise ParseError(f"observations: unparseable date ({exc})") from None
        out = pd.DataFrame({"segment_id": seg.to_numpy(dtype=np.int64), "date": dates.dt.normalize()})
        if "hour" in obs.columns:
            hour = pd.to_numeric(obs["hour"], errors="coerce")
            if hour.isna().any() or ((hour < 0) | (hour > 23)).any():
                raise ParseError("observations: hour must be an integer in 0..23")
            out["hour"] = hour.to_numpy(dtype=np.int64)
        out["count"] = c.astype(np.int64)
        return out

    def _check_spatiotemporal(self, st) -> pd.DataFrame | None:
        names = self.schema.names("spatiotemporal")
        if st is None or len(st) == 0:
            if names:
                raise SchemaError(f"schema declares spatiotemporal columns {names} but none were given")
            return None
        st = st.copy()
        for col in ("segment_id", "date", *names):
            if col not in st.columns:
                raise SchemaError(f"spatiotemporal features lack column {col!r}")
        st["segment_id"] = st["segment_id"].astype(np.int64)
        st["date"] = pd.to_datetime(st["date"]).dt.normalize()
        if not np.isin(st["segment_id"].to_numpy(), self.ids).all():
            raise IntegrityError("spatiotemporal features reference an unknown segment")
        return st[["segment_id", "date", *names]].sort_values(["segment_id", "date"]).reset_index(drop=True)

    # --------------------------------------------------------------- access

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def J(self) -> int:
        return len(self.calendar)

    @property
    def hourly(self) -> bool:
        return bool((self.obs_hour >= 0).any())

    def pos(self, segment_id: int) -> int:
        return self._pos[int(segment_id)]

    def positions(self, segment_ids) -> np.ndarray:
        return np.array([self._pos[int(s)] for s in segment_ids], dtype=np.int64)

    def midpoint_of(self, segment_ids) -> np.ndarray:
        return self.midpoints[self.positions(segment_ids)]

    def segment_rows(self, segment_ids) -> np.ndarray:
        """Indices of every observation of the given segments."""
        parts = [np.arange(self.seg_ptr[p], self.seg_ptr[p + 1]) for p in self.positions(segment_ids)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def rows_for(self, segment_id: int, day: date) -> np.ndarray:
        if int(segment_id) not in self._pos or day not in self.calendar:
            return np.zeros(0, dtype=np.int64)
        p = self._pos[int(segment_id)]
        lo, hi = self.seg_ptr[p], self.seg_ptr[p + 1]
        j = self.calendar.index(day)
        a = lo + np.searchsorted(self.obs_day[lo:hi], j, side="left")
        b = lo + np.searchsorted(self.obs_day[lo:hi], j, side="right")
        return np.arange(a, b)

    @cached_property
    def time_steps(self) -> np.ndarray:
        """Distinct (day, hour) pairs present in the observations, as an (n, 2) array."""
        pairs = np.unique(np.stack([self.obs_day, self.obs_hour], axis=1), axis=0)
        return pairs

    def with_observations(self, observations: pd.DataFrame) -> "Dataset":
        return Dataset(self.segments, self.schema, self.static, observations, self.study_area,
                       temporal=self.temporal if len(self.temporal) else None,
                       spatiotemporal=self.spatiotemporal, existing=self.existing, name=self.name)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.ids.tobytes())
        h.update(self.midpoints.tobytes())
        h.update(self.obs_seg.tobytes())
        h.update(self.obs_day.tobytes())
        h.update(self.obs_hour.tobytes())
        h.update(self.obs_count.tobytes())
        h.update(pd.util.hash_pandas_object(self.static, index=True).values.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and a.equals(b)
        return (self.segments == other.segments and self.schema == other.schema
                and self.study_area == other.study_area and self.name == other.name
                and self.existing == other.existing and self.calendar == other.calendar
                and same(self.static, other.static) and same(self.observations, other.observations)
                and same(self.temporal, other.temporal)
                and same(self.spatiotemporal, other.spatiotemporal))

    def __repr__(self):
        return f"Dataset(name={self.name!r}, N={self.N}, J={self.J}, observations={len(self.obs_count)})"


# ----------------------------------------------------------------- bundles

def _read_csv(path: Path, required: bool = True) -> pd.DataFrame | None:
    if not path.exists():
        if required:
            raise BundleError(f"bundle is missing {path.name}")
        return None
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path.name}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path.name} is empty") from None


def _infer_schema(static, temporal, st) -> FeatureSchema:
    cols = []
    for frame, var, skip in ((static, "static", {"segment_id"}), (temporal, "temporal", {"date"}),
                             (st, "spatiotemporal", {"segment_id", "date"})):
        if frame is None:
            continue
        for c in frame.columns:
            if c in skip:
                continue
            kind = "numeric" if pd.api.types.is_numeric_dtype(frame[c]) else "categorical"
            cols.append(ColumnSpec(c, kind, var))
    return FeatureSchema(tuple(cols))


def _opt_int(v):
    return None if pd.isna(v) else int(v)


def load_dataset(path, snap_tolerance: float = DEFAULT_SNAP_TOLERANCE) -> Dataset:
    root = Path(path)
    if not root.is_dir():
        raise BundleError(f"{root} is not a bundle directory")
    seg = _read_csv(root / "segments.csv")
    for c in ("segment_id", "midpoint_x", "midpoint_y"):
        if c not in seg.columns:
            raise SchemaError(f"segments.csv lacks column {c!r}")
    coords = all(c in seg.columns for c in ("endpoint_a_x", "endpoint_a_y", "endpoint_b_x", "endpoint_b_y"))
    segments = []
    for r in seg.itertuples(index=False):
        row = r._asdict()
        try:
            segments.append(Segment(
                id=int(row["segment_id"]), midpoint=(float(row["midpoint_x"]), float(row["midpoint_y"])),
                endpoint_a=_opt_int(row.get("endpoint_a")), endpoint_b=_opt_int(row.get("endpoint_b")),
                length=None if pd.isna(row.get("length", np.nan)) else float(row["length"]),
                coord_a=(row["endpoint_a_x"], row["endpoint_a_y"]) if coords else None,
                coord_b=(row["endpoint_b_x"], row["endpoint_b_y"]) if coords else None,
            ))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"segments.csv: {exc}") from None
    static = _read_csv(root / "static_features.csv")
    obs = _read_csv(root / "observations.csv")
    temporal = _read_csv(root / "temporal_features.csv", required=False)
    st = _read_csv(root / "spatiotemporal_features.csv", required=False)

    meta = {}
    if (root / "schema.json").exists():
        meta = json.loads((root / "schema.json").read_text())
        schema = FeatureSchema.from_json(meta.get("columns", []))
    else:
        schema = _infer_schema(static, temporal, st)
    area = None
    if (root / "boundary.json").exists():
        rings = json.loads((root / "boundary.json").read_text())
        if rings and isinstance(rings[0][0], (list, tuple)):
            rings = rings[0]
        area = StudyArea(rings)
    existing = ()
    ex = _read_csv(root / "existing_sensors.csv", required=False)
    if ex is not None:
        existing = tuple(int(v) for v in ex["segment_id"])
    if temporal is not None:
        temporal["date"] = pd.to_datetime(temporal["date"])
    return Dataset(segments, schema, static, obs, area, temporal=temporal, spatiotemporal=st,
                   existing=existing, name=meta.get("city", root.name), snap_tolerance=snap_tolerance)


def save_dataset(dataset: Dataset, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    seg = pd.DataFrame({
        "segment_id": [s.id for s in dataset.segments],
        "midpoint_x": [s.midpoint[0] for s in dataset.segments],
        "midpoint_y": [s.midpoint[1] for s in dataset.segments],
        "endpoint_a": pd.array([s.endpoint_a for s in dataset.segments], dtype="Int64"),
        "endpoint_b": pd.array([s.endpoint_b for s in dataset.segments], dtype="Int64"),
    })
    if any(s.length is not None for s in dataset.segments):
        seg["length"] = [s.length for s in dataset.segments]
    seg.to_csv(root / "segments.csv", index=False)
    dataset.static.reset_index().to_csv(root / "static_features.csv", index=False)
    obs = dataset.observations.copy()
    obs["date"] = obs["date"].dt.strftime("%Y-%m-%d")
    obs.to_csv(root / "observations.csv", index=False)
    if len(dataset.temporal):
        t = dataset.temporal.reset_index()
        t["date"] = t["date"].dt.strftime("%Y-%m-%d")
        t.to_csv(root / "temporal_features.csv", index=False)
    if dataset.spatiotemporal is not None:
        st = dataset.spatiotemporal.copy()
        st["date"] = st["date"].dt.strftime("%Y-%m-%d")
        st.to_csv(root / "spatiotemporal_features.csv", index=False)
    (root / "boundary.json").write_text(json.dumps([[list(p) for p in dataset.study_area.boundary]]))
    (root / "schema.json").write_text(json.dumps(
        {"city": dataset.name, "columns": dataset.schema.to_json()}, indent=2))
    if dataset.existing:
        pd.DataFrame({"segment_id": list(dataset.existing)}).to_csv(root / "existing_sensors.csv", index=False)
    return root


# --------------------------------------------------------------- filtering

@dataclass(frozen=True)
class OutlierReport:
    removed: pd.DataFrame
    n_total: int
    k_sigma: float

    @property
    def removal_fraction(self) -> float:
        return len(self.removed) / self.n_total if self.n_total else 0.0


def filter_outliers(dataset: Dataset, k_sigma: float = 3.0) -> tuple[Dataset, OutlierReport]:
    """Drop observations more than ``k_sigma`` sample std from their segment mean."""
    if not k_sigma > 0:
        raise ParameterError("k_sigma must be positive")
    c = dataset.obs_count
    seg = dataset.obs_seg
    n = np.bincount(seg, minlength=dataset.N).astype(float)
    s1 = np.bincount(seg, weights=c, minlength=dataset.N)
    mean = np.divide(s1, n, out=np.zeros_like(s1), where=n > 0)
    dev = c - mean[seg]
    ss = np.bincount(seg, weights=dev * dev, minlength=dataset.N)
    std = np.sqrt(np.divide(ss, n - 1, out=np.zeros_like(ss), where=n > 1))
    drop = (n[seg] >= 2) & (std[seg] > 0) & (np.abs(dev) > k_sigma * std[seg])
    removed = dataset.observations.loc[drop].reset_index(drop=True)
    report = OutlierReport(removed=removed, n_total=len(c), k_sigma=k_sigma)
    log.info("outlier filter removed %d of %d rows (%.2f%%)", len(removed), len(c),
             100 * report.removal_fraction)
    if not drop.any():
        return dataset, report
    return dataset.with_observations(dataset.observations.loc[~drop]), report


# ---------------------------------------------------------------- splitting

@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset
    val: frozenset
    test: frozenset
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    def sorted(self, part: str) -> list[int]:
        return sorted(getattr(self, part))

    def to_json(self) -> dict:
        return {"train": self.sorted("train"), "val": self.sorted("val"), "test": self.sorted("test"),
                "fractions": list(self.fractions), "seed": self.seed}


def split_segments(dataset_or_ids, fractions=(0.70, 0.15, 0.15), seed: int = 0,
                   pinned_train: Sequence[int] = ()) -> SplitAssignment:
    """Seeded shuffle; val and test get floor sizes (at least one each), train the rest.

    ``pinned_train`` segments (existing sensors) are never drawn for val/test.
    """
    ids = dataset_or_ids.ids if isinstance(dataset_or_ids, Dataset) else np.asarray(dataset_or_ids)
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or min(fr) <= 0 or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
        raise SplitError("fractions must be three positive numbers summing to 1")
    N = ids.size
    if N < 3:
        raise SplitError("need at least three segments to split")
    n_val = max(1, math.floor(fr[1] * N + 1e-9))
    n_test = max(1, math.floor(fr[2] * N + 1e-9))
    pinned = set(int(p) for p in pinned_train)
    pool = np.array([i for i in ids if int(i) not in pinned], dtype=np.int64)
    if pool.size < n_val + n_test:
        raise SplitError("not enough unpinned segments for validation and test sets")
    perm = np.random.default_rng(seed).permutation(pool)
    val = frozenset(int(i) for i in perm[:n_val])
    test = frozenset(int(i) for i in perm[n_val:n_val + n_test])
    train = frozenset(int(i) for i in ids) - val - test
    return SplitAssignment(train=train, val=val, test=test, fractions=fr, seed=seed)


# ------------------------------------------------------------ synthetic city

@dataclass(frozen=True)
class SyntheticCityConfig:
    width: int = 20
    height: int = 20
    n_days: int = 180
    noise_scale: float = 0.3
    seed: int = 0
    spacing: float = 100.0
    start: str = "2019-01-07"
    n_bumps: int = 8
    bump_width: float = 0.15
    field_amplitude: float = 1.5
    center_amplitude: float = 0.0
    center_width: float = 0.35
    base_level: float = 3.0
    noisy_region: tuple[float, float, float, float] | None = None
    noisy_scale: float = 1.0
    outlier_rate: float = 0.0
    outlier_factor: float = 20.0
    name: str = "synthetic"

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        if self.n_days < 7:
            raise ValueError("n_days must be >= 7")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Generating parameters and the noise-free latent field of a synthetic city."""

    log_mean: np.ndarray = field(repr=False)  # (N, J) log expected volume
    spatial_field: np.ndarray = field(repr=False)  # (N,) bump-field term
    bumps: tuple = ()
    config: SyntheticCityConfig | None = None

    @property
    def expected(self) -> np.ndarray:
        return np.exp(self.log_mean)


WEEKDAY_EFFECT = np.array([0.0, 0.02, 0.03, 0.02, 0.0, -0.2, -0.35])
STREET_EFFECT = {"primary": 0.5, "secondary": 0.25, "residential": 0.0}
SURFACE_EFFECT = {"asphalt": 0.0, "cobblestone": -0.2, "paving_stones": -0.1}


def _grid_segments(w: int, h: int, spacing: float):
    segs, lines = [], []
    sid = 0
    for r in range(h):
        for c in range(w - 1):
            segs.append(Segment(sid, ((c + 0.5) * spacing, r * spacing), r * w + c, r * w + c + 1,
                                length=spacing))
            lines.append(("h", r))
            sid += 1
    for r in range(h - 1):
        for c in range(w):
            segs.append(Segment(sid, (c * spacing, (r + 0.5) * spacing), r * w + c, (r + 1) * w + c,
                                length=spacing))
            lines.append(("v", c))
            sid += 1
    return segs, lines


def generate_synthetic_city(config: SyntheticCityConfig = SyntheticCityConfig()) -> tuple[Dataset, GroundTruth]:
    """Grid street network with a smooth log-volume field and seeded day-level noise."""
    rng = np.random.default_rng(config.seed)
    segs, lines = _grid_segments(config.width, config.height, config.spacing)
    N = len(segs)
    mid = np.array([s.midpoint for s in segs])
    ext_x = (config.width - 1) * config.spacing
    ext_y = (config.height - 1) * config.spacing
    extent = max(ext_x, ext_y)

    street_type = []
    for kind, k in lines:
        if k % 5 == 0:
            street_type.append("primary")
        elif k % 5 == 2:
            street_type.append("secondary")
        else:
            street_type.append("residential")
    lanes = np.array([{"primary": 2, "secondary": 2, "residential": 1}[t] for t in street_type])
    lanes = lanes + (np.array([t == "primary" for t in street_type]) & (rng.random(N) < 0.5))
    surface = rng.choice(["asphalt", "cobblestone", "paving_stones"], size=N, p=[0.7, 0.2, 0.1])
    max_speed = np.array([{"primary": 50, "secondary": 50, "residential": 30}[t] for t in street_type])
    max_speed = np.where((max_speed == 50) & (rng.random(N) < 0.2), 60, max_speed)

    bumps = []
    spatial = np.zeros(N)
    for _ in range(config.n_bumps):
        cx, cy = rng.uniform(0, ext_x), rng.uniform(0, ext_y)
        amp = rng.uniform(-1.0, 1.0) * config.field_amplitude
        width = config.bump_width * extent * rng.uniform(0.6, 1.4)
        bumps.append((float(cx), float(cy), float(amp), float(width)))
        d2 = (mid[:, 0] - cx) ** 2 + (mid[:, 1] - cy) ** 2
        spatial += amp * np.exp(-d2 / (2 * width ** 2))

    if config.center_amplitude:
        cx, cy = rng.uniform(0.35, 0.65) * ext_x, rng.uniform(0.35, 0.65) * ext_y
        width = config.center_width * extent
        d2 = (mid[:, 0] - cx) ** 2 + (mid[:, 1] - cy) ** 2
        spatial += config.center_amplitude * np.exp(-d2 / (2 * width ** 2))
        bumps.append((float(cx), float(cy), float(config.center_amplitude), float(width)))

    start = date.fromisoformat(config.start)
    days = [start + timedelta(days=i) for i in range(config.n_days)]
    doy = np.array([d.timetuple().tm_yday for d in days])
    temperature = np.round(10 + 10 * np.sin(2 * np.pi * (doy - 110) / 365.25) + rng.normal(0, 2, config.n_days), 1)
    weekday = np.array([d.weekday() for d in days])

    seg_term = (config.base_level + spatial
                + np.array([STREET_EFFECT[t] for t in street_type])
                + np.array([SURFACE_EFFECT[s] for s in surface]))
    day_term = WEEKDAY_EFFECT[weekday] + 0.02 * (temperature - 10)
    log_mean = seg_term[:, None] + day_term[None, :]

    sigma = np.full(N, config.noise_scale)
    if config.noisy_region is not None:
        x0, y0, x1, y1 = config.noisy_region
        inside = ((mid[:, 0] >= x0 * ext_x) & (mid[:, 0] <= x1 * ext_x)
                  & (mid[:, 1] >= y0 * ext_y) & (mid[:, 1] <= y1 * ext_y))
        sigma = np.where(inside, config.noise_scale * config.noisy_scale, sigma)
    eps = rng.standard_normal((N, config.n_days))
    counts = np.round(np.exp(log_mean + sigma[:, None] * eps))
    if config.outlier_rate > 0:
        spikes = rng.random((N, config.n_days)) < config.outlier_rate
        counts = np.where(spikes, np.round(counts * config.outlier_factor + 50), counts)

    static = pd.DataFrame({
        "segment_id": np.arange(N, dtype=np.int64),
        "lanes": lanes.astype(np.int64),
        "street_type": street_type,
        "surface": surface.astype(object),
        "max_speed": max_speed.astype(np.int64),
        "coord_x": mid[:, 0],
        "coord_y": mid[:, 1],
    })
    for key, values in connectivity_features(build_segment_graph(segs)).items():
        static[key] = values
    temporal = pd.DataFrame({
        "date": pd.to_datetime(days),
        "weekday": [WEEKDAYS[w] for w in weekday],
        "temperature": temperature,
    })
    obs = pd.DataFrame({
        "segment_id": np.repeat(np.arange(N, dtype=np.int64), config.n_days),
        "date": np.tile(pd.to_datetime(days).values, N),
        "count": counts.ravel().astype(np.int64),
    })
    schema = FeatureSchema((
        ColumnSpec("lanes", "numeric", "static", "infrastructure"),
        ColumnSpec("street_type", "categorical", "static", "infrastructure"),
        ColumnSpec("surface", "categorical", "static", "infrastructure"),
        ColumnSpec("max_speed", "numeric", "static", "infrastructure"),
        ColumnSpec("coord_x", "numeric", "static"),
        ColumnSpec("coord_y", "numeric", "static"),
        *(ColumnSpec(k, "numeric", "static", "connectivity")
          for k in ("degree", "betweenness", "closeness", "clustering")),
        ColumnSpec("weekday", "categorical", "temporal"),
        ColumnSpec("temperature", "numeric", "temporal"),
    ))
    area = StudyArea([(0.0, 0.0), (ext_x, 0.0), (ext_x, ext_y), (0.0, ext_y)])
    ds = Dataset(segs, schema, static, obs, area, temporal=temporal, name=config.name)
    truth = GroundTruth(log_mean=log_mean, spatial_field=spatial, bumps=tuple(bumps), config=config)
    return ds, truth


def config_to_dict(config: SyntheticCityConfig) -> dict:
    return asdict(config)
