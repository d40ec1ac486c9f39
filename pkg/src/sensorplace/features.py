"""Feature encoding and the feature-space placement objectives."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ArityError, ConfigurationError, FitError, SchemaError, UndefinedError

KINDS = ("numeric", "categorical")
VARIABILITIES = ("static", "temporal", "spatiotemporal")

INFRASTRUCTURE_SELECTED = ("lanes", "street_type", "surface", "max_speed")
CONNECTIVITY = ("betweenness", "degree", "closeness", "clustering")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    variability: str = "static"
    group: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.variability not in VARIABILITIES:
            raise SchemaError(f"column {self.name!r}: unknown variability {self.variability!r}")


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")

    def __getitem__(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"no column named {name!r}")

    def names(self, variability: str | None = None) -> list[str]:
        return [c.name for c in self.columns if variability is None or c.variability == variability]

    def select(self, names: Iterable[str]) -> "FeatureSchema":
        return FeatureSchema(tuple(self[n] for n in names))

    def to_json(self) -> list[dict]:
        out = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind, "variability": c.variability}
            if c.group:
                d["group"] = c.group
            out.append(d)
        return out

    @classmethod
    def from_json(cls, records: Sequence[Mapping]) -> "FeatureSchema":
        try:
            return cls(tuple(ColumnSpec(r["name"], r["kind"], r.get("variability", "static"),
                                        r.get("group")) for r in records))
        except KeyError as exc:
            raise SchemaError(f"schema record missing field {exc}") from None


SUBSET_NAMES = ("all_static", "infrastructure_selected", "connectivity", "infrastructure_full",
                "points_of_interest", "custom")


@dataclass(frozen=True)
class FeatureSubsetSpec:
    """Named selection of static columns used by the feature objectives.

    ``infrastructure_full`` and ``points_of_interest`` resolve through the
    ``group`` tag of schema columns (``infrastructure`` / ``poi``).
    """

    name: str = "all_static"
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.name not in SUBSET_NAMES:
            raise ConfigurationError(f"unknown feature subset {self.name!r}")
        if self.name == "custom" and not self.column_names:
            raise ConfigurationError("custom feature subset needs column names")

    def resolve(self, schema: FeatureSchema) -> list[str]:
        static = schema.names("static")
        if self.name == "all_static":
            cols = static
        elif self.name == "infrastructure_selected":
            cols = list(INFRASTRUCTURE_SELECTED)
        elif self.name == "connectivity":
            tagged = [c.name for c in schema.columns if c.group == "connectivity"]
            cols = tagged or list(CONNECTIVITY)
        elif self.name == "infrastructure_full":
            cols = [c.name for c in schema.columns
                    if c.variability == "static" and c.group in ("infrastructure", "poi")]
        elif self.name == "points_of_interest":
            cols = [c.name for c in schema.columns if c.variability == "static" and c.group == "poi"]
        elif self.name == "custom":
            cols = list(self.column_names)
        else:
            raise ConfigurationError(f"unknown feature subset {self.name!r}")
        missing = [c for c in cols if c not in static]
        if missing:
            raise SchemaError(f"feature subset {self.name!r} references missing static columns {missing}")
        if not cols:
            raise SchemaError(f"feature subset {self.name!r} resolves to no columns")
        return cols


@dataclass(frozen=True)
class EncodingMap:
    """Fitted standardization statistics and categorical level dictionaries."""

    schema: FeatureSchema
    numeric: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    levels: Mapping[str, tuple] = field(default_factory=dict)

    @property
    def width(self) -> int:
        return sum(1 if c.kind == "numeric" else len(self.levels[c.name]) for c in self.schema.columns)

    def feature_names(self) -> list[str]:
        out = []
        for c in self.schema.columns:
            if c.kind == "numeric":
                out.append(c.name)
            else:
                out.extend(f"{c.name}={lvl}" for lvl in self.levels[c.name])
        return out


def _as_frame(rows) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows
    return pd.DataFrame(list(rows))


def _level_key(v):
    return (str(type(v).__name__), str(v))


def fit_preprocessor(rows, schema: FeatureSchema) -> EncodingMap:
    """Fit per-column statistics on training rows.

    Numeric columns use the sample standard deviation (ddof=1); a column
    with a single row or no spread gets std 0.
    """
    frame = _as_frame(rows)
    if len(frame) == 0:
        raise FitError("cannot fit preprocessor on zero rows")
    numeric, levels = {}, {}
    for c in schema.columns:
        if c.name not in frame.columns:
            raise SchemaError(f"missing column {c.name!r}")
        col = frame[c.name]
        if c.kind == "numeric":
            values = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            values = values[np.isfinite(values)]
            mean = float(values.mean()) if values.size else 0.0
            std = float(values.std(ddof=1)) if values.size > 1 else 0.0
            numeric[c.name] = (mean, std)
        else:
            levels[c.name] = tuple(sorted(pd.unique(col.dropna()), key=_level_key))
    return EncodingMap(schema=schema, numeric=numeric, levels=levels)


def transform(rows, encoding: EncodingMap) -> np.ndarray:
    """Encode rows into a dense float matrix.

    Zero-variance numeric columns map to 0 and unseen categorical levels to
    an all-zero indicator block. Missing numeric values encode as 0.
    """
    frame = _as_frame(rows)
    n = len(frame)
    blocks = []
    for c in encoding.schema.columns:
        if c.name not in frame.columns:
            raise SchemaError(f"missing column {c.name!r}")
        col = frame[c.name]
        if c.kind == "numeric":
            mean, std = encoding.numeric[c.name]
            x = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            if std > 0:
                z = (x - mean) / std
            else:
                z = np.zeros(n)
            blocks.append(np.where(np.isfinite(z), z, 0.0)[:, None])
        else:
            lv = encoding.levels[c.name]
            block = np.zeros((n, len(lv)))
            lookup = {v: j for j, v in enumerate(lv)}
            for i, v in enumerate(col.to_numpy()):
                j = lookup.get(v)
                if j is not None:
                    block[i, j] = 1.0
            blocks.append(block)
    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


def _pairwise_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


def score_feature_objective(vectors, kind: str) -> float:
    """Mean pairwise distance, mean pairwise cosine, or mean population variance."""
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    k = x.shape[0]
    if kind == "coverage":
        if k < 1:
            raise ArityError("coverage needs at least one vector")
        return float(x.var(axis=0, ddof=0).mean())
    if kind not in ("diversity", "redundancy"):
        raise ConfigurationError(f"unknown feature objective {kind!r}")
    if k < 2:
        raise ArityError(f"{kind} needs at least two vectors")
    iu = np.triu_indices(k, 1)
    if kind == "diversity":
        return float(_pairwise_distances(x)[iu].mean())
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise UndefinedError("cosine similarity undefined for an all-zero vector")
    unit = x / norms[:, None]
    return float((unit @ unit.T)[iu].mean())
