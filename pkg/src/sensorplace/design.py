"""Model input rows: encoded static, temporal and spatiotemporal features per observation."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import Dataset
from .features import EncodingMap, fit_preprocessor, transform


class DesignMatrix:
    """Encodes (segment, day[, hour]) rows for the interpolation model.

    Static statistics are fitted on ``train_ids`` only. Temporal features
    are citywide and known for every date, so they are fitted on the whole
    calendar. Hourly datasets get the hour as an extra numeric column.
    """

    def __init__(self, dataset: Dataset, train_ids: Sequence[int]):
        self.dataset = dataset
        schema = dataset.schema
        static_schema = schema.select(schema.names("static"))
        train_rows = dataset.static.loc[sorted(int(i) for i in train_ids)]
        self.static_encoding: EncodingMap = fit_preprocessor(train_rows, static_schema)
        self.static_x = transform(dataset.static, self.static_encoding)

        t_names = schema.names("temporal")
        if t_names:
            frame = dataset.temporal.reindex(pd.DatetimeIndex(list(dataset.calendar.dates)))
            enc = fit_preprocessor(frame, schema.select(t_names))
            self.temporal_x = transform(frame, enc)
        else:
            self.temporal_x = np.zeros((dataset.J, 0))

        st_names = schema.names("spatiotemporal")
        self.st_x = None
        if st_names and dataset.spatiotemporal is not None:
            st = dataset.spatiotemporal
            seg = dataset.positions(st["segment_id"])
            day = np.searchsorted(dataset._cal_days, st["date"].to_numpy(dtype="datetime64[D]"))
            train = np.isin(st["segment_id"].to_numpy(), list(train_ids))
            enc = fit_preprocessor(st.loc[train] if train.any() else st, schema.select(st_names))
            vals = transform(st, enc)
            self.st_x = np.zeros((dataset.N, dataset.J, vals.shape[1]))
            self.st_x[seg, day] = vals
        self.hourly = dataset.hourly

    @property
    def width(self) -> int:
        w = self.static_x.shape[1] + self.temporal_x.shape[1] + int(self.hourly)
        return w + (self.st_x.shape[2] if self.st_x is not None else 0)

    def rows(self, seg_idx, day_idx, hour=None) -> np.ndarray:
        seg_idx = np.asarray(seg_idx, dtype=np.int64)
        day_idx = np.asarray(day_idx, dtype=np.int64)
        parts = [self.static_x[seg_idx], self.temporal_x[day_idx]]
        if self.st_x is not None:
            parts.append(self.st_x[seg_idx, day_idx])
        if self.hourly:
            h = np.zeros(seg_idx.size) if hour is None else np.asarray(hour, dtype=float)
            parts.append(h.reshape(-1, 1))
        return np.hstack(parts)

    def observations(self, index) -> tuple[np.ndarray, np.ndarray]:
        """Inputs and counts for observation rows ``index``."""
        ds = self.dataset
        index = np.asarray(index, dtype=np.int64)
        X = self.rows(ds.obs_seg[index], ds.obs_day[index], ds.obs_hour[index])
        return X, ds.obs_count[index]

    def segment_observations(self, segment_ids) -> tuple[np.ndarray, np.ndarray]:
        return self.observations(self.dataset.segment_rows(segment_ids))
