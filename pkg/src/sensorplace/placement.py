"""Sensor placement: centrality ranking, greedy objectives, random draws, active learning."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .dataset import Dataset, SplitAssignment
from .design import DesignMatrix
from .errors import (ArityError, BudgetError, ConfigurationError, ParameterError, UndefinedError,
                     ValidationError)
from .features import FeatureSubsetSpec, fit_preprocessor, score_feature_objective, transform
from .graph import centrality_scores
from .interpolator import (GradientBoostedTrees, RegressorConfig, ensemble_stats,
                           fit_bootstrap_ensemble)
from .spatial import StudyArea, clark_evans, gini, raster_grid, voronoi_areas

log = logging.getLogger(__name__)

PLACEMENT_FORMAT = "sensorplace.placement"
PLACEMENT_VERSION = 1

DIRECTIONS = {
    "betweenness": "maximize",
    "closeness": "maximize",
    "feature_diversity": "maximize",
    "feature_redundancy": "minimize",
    "feature_coverage": "maximize",
    "dispersion": "maximize",
    "voronoi_gini": "minimize",
    "active_learning": "maximize",
    "random": "maximize",
}
FEATURE_FAMILIES = ("feature_diversity", "feature_redundancy", "feature_coverage")
GREEDY_OBJECTIVES = ("diversity", "redundancy", "coverage", "dispersion", "voronoi_gini")
GREEDY_CELLS_PER_SIDE = 200
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class StrategyDescriptor:
    family: str
    feature_subset: FeatureSubsetSpec | None = None

    def __post_init__(self):
        if self.family not in DIRECTIONS:
            raise ConfigurationError(f"unknown strategy {self.family!r}")
        if self.family in FEATURE_FAMILIES and self.feature_subset is None:
            object.__setattr__(self, "feature_subset", FeatureSubsetSpec("infrastructure_selected"))
        if self.family not in FEATURE_FAMILIES and self.feature_subset is not None:
            raise ConfigurationError(f"strategy {self.family!r} takes no feature subset")

    @property
    def direction(self) -> str:
        return DIRECTIONS[self.family]

    @property
    def label(self) -> str:
        if self.feature_subset is None:
            return self.family
        return f"{self.family}[{self.feature_subset.name}]"

    @classmethod
    def parse(cls, text: str, columns: Sequence[str] = ()) -> "StrategyDescriptor":
        """``family`` or ``family[subset]``; ``custom`` subsets take ``columns``."""
        family, _, rest = text.partition("[")
        if rest:
            sub = rest.rstrip("]")
            return cls(family, FeatureSubsetSpec(sub, tuple(columns) if sub == "custom" else ()))
        return cls(family)

    def to_dict(self) -> dict:
        d = {"family": self.family, "direction": self.direction}
        if self.feature_subset is not None:
            d["feature_subset"] = self.feature_subset.name
            if self.feature_subset.column_names:
                d["columns"] = list(self.feature_subset.column_names)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "StrategyDescriptor":
        sub = None
        if "feature_subset" in d:
            sub = FeatureSubsetSpec(d["feature_subset"], tuple(d.get("columns", ())))
        return cls(d["family"], sub)


@dataclass(frozen=True)
class Placement:
    selected: tuple[int, ...]
    strategy: StrategyDescriptor
    budget: int
    seed: int
    initial: tuple[int, ...] = ()
    objective_values: tuple = ()
    final_objective: float | None = None
    options: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "selected", tuple(int(s) for s in self.selected))
        object.__setattr__(self, "initial", tuple(int(s) for s in self.initial))
        if len(self.selected) != self.budget:
            raise BudgetError(f"placement has {len(self.selected)} segments, budget is {self.budget}")
        if len(set(self.selected)) != len(self.selected):
            raise ValidationError("placement selects a segment twice")
        if self.selected[:len(self.initial)] != self.initial:
            raise ValidationError("initial sensors must prefix the selection")

    def to_json(self) -> str:
        doc = {
            "format": PLACEMENT_FORMAT,
            "version": PLACEMENT_VERSION,
            "strategy": self.strategy.to_dict(),
            "budget": self.budget,
            "seed": self.seed,
            "initial": list(self.initial),
            "selected": list(self.selected),
            "objective_values": list(self.objective_values),
            "final_objective": self.final_objective,
            "options": dict(self.options),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Placement":
        try:
            doc = json.loads(text)
            if doc.get("format") != PLACEMENT_FORMAT:
                raise ValidationError("not a placement document")
            return cls(selected=tuple(doc["selected"]), strategy=StrategyDescriptor.from_dict(doc["strategy"]),
                       budget=int(doc["budget"]), seed=int(doc["seed"]), initial=tuple(doc["initial"]),
                       objective_values=tuple(doc.get("objective_values", ())),
                       final_objective=doc.get("final_objective"), options=doc.get("options", {}))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed placement document: {exc}") from None


def _check_budget(budget: int, initial, n_candidates: int):
    if budget < 1:
        raise BudgetError("budget must be positive")
    if budget < len(initial):
        raise BudgetError(f"budget {budget} is smaller than the {len(initial)} initial sensors")
    if budget > n_candidates:
        raise BudgetError(f"budget {budget} exceeds the {n_candidates} candidate segments")
    if len(set(initial)) != len(initial):
        raise ValidationError("initial sensors contain duplicates")


def _pick(values: np.ndarray, maximize: bool) -> int:
    """Index of the best value; near-ties within TIE_RTOL go to the lowest index."""
    v = values if maximize else -values
    finite = np.isfinite(v)
    if not finite.any():
        return 0
    best = v[finite].max()
    tol = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(finite & (v >= best - tol))[0])


# ------------------------------------------------------------------ ranking

def rank_place(scores, budget: int, initial: Sequence[int] = (), candidates: Sequence[int] | None = None,
               strategy: StrategyDescriptor | None = None, seed: int = 0) -> Placement:
    """Initial sensors, then the highest scores; ties go to the lowest id."""
    score = scores.score if hasattr(scores, "score") else scores
    if strategy is None:
        kind = getattr(scores, "kind", "betweenness")
        strategy = StrategyDescriptor(kind)
    pool = sorted(score) if candidates is None else sorted(int(c) for c in candidates)
    initial = tuple(int(i) for i in initial)
    _check_budget(budget, initial, len(set(pool) | set(initial)))
    fixed = set(initial)
    rest = sorted((c for c in pool if c not in fixed), key=lambda c: (-score[c], c))
    chosen = initial + tuple(rest[:budget - len(initial)])
    values = tuple(float(score[c]) for c in chosen[len(initial):])
    return Placement(chosen, strategy, budget, seed, initial, values)


# ------------------------------------------------------------------- greedy

@njit(cache=True)
def _gini_counts(a):
    s = np.sort(a)
    k = s.size
    total = s.sum()
    acc = 0.0
    for i in range(k):
        acc += (2.0 * i - k + 1.0) * s[i]
    return 2.0 * acc / (2.0 * k * total)


@njit(cache=True)
def _voronoi_candidate_gini(cx, cy, owner, best, owner_id, counts, px, py, pid):
    """Gini of raster cell counts after adding each candidate site."""
    n_cand = px.size
    k = counts.size
    out = np.empty(n_cand)
    trial = np.empty(k + 1)
    for c in range(n_cand):
        for j in range(k):
            trial[j] = counts[j]
        trial[k] = 0.0
        for i in range(cx.size):
            dx = cx[i] - px[c]
            dy = cy[i] - py[c]
            d = dx * dx + dy * dy
            if d < best[i] or (d == best[i] and pid[c] < owner_id[owner[i]]):
                trial[owner[i]] -= 1.0
                trial[k] += 1.0
        out[c] = _gini_counts(trial)
    return out


class _GreedyState:
    """Running quantities for one objective; ``scores`` evaluates S ∪ {c} for all c."""

    def __init__(self, objective, data, ids, study_area, greedy_cells, budget):
        self.objective = objective
        self.data = data
        self.ids = ids
        self.k = 0
        n = len(ids)
        if objective in ("diversity", "redundancy"):
            if objective == "redundancy":
                norms = np.linalg.norm(data, axis=1)
                self.valid = norms > 0
                self.unit = np.divide(data, norms[:, None], out=np.zeros_like(data), where=norms[:, None] > 0)
            self.acc = np.zeros(n)
            self.pair_sum = 0.0
        elif objective == "coverage":
            self.s1 = np.zeros(data.shape[1])
            self.s2 = np.zeros(data.shape[1])
        elif objective == "dispersion":
            self.sel_idx = np.zeros(budget, dtype=np.int64)
            self.nn = np.zeros(budget)
            self.dist_to_sel = np.zeros((n, budget))
        elif objective == "voronoi_gini":
            res = math.sqrt(study_area.area) / greedy_cells
            self.grid = raster_grid(study_area, res)
            self.owner = np.zeros(self.grid.n_cells, dtype=np.int64)
            self.best = np.full(self.grid.n_cells, np.inf)
            self.owner_id = np.zeros(0, dtype=np.int64)
            self.counts = np.zeros(0)
            self.px = np.ascontiguousarray(data[:, 0])
            self.py = np.ascontiguousarray(data[:, 1])

    def scores(self) -> np.ndarray:
        k = self.k
        obj = self.objective
        if obj == "diversity":
            return (self.pair_sum + self.acc) / (k * (k + 1) / 2)
        if obj == "redundancy":
            out = (self.pair_sum + self.acc) / (k * (k + 1) / 2)
            return np.where(self.valid, out, np.nan)
        if obj == "coverage":
            m1 = (self.s1[None, :] + self.data) / (k + 1)
            m2 = (self.s2[None, :] + self.data ** 2) / (k + 1)
            return np.maximum(m2 - m1 ** 2, 0.0).mean(axis=1)
        if obj == "dispersion":
            d = self.dist_to_sel[:, :k]
            return (np.minimum(d, self.nn[None, :k]).sum(axis=1) + d.min(axis=1)) / (k + 1)
        return _voronoi_candidate_gini(self.grid.cx, self.grid.cy, self.owner, self.best,
                                       self.owner_id, self.counts, self.px, self.py, self.ids)

    def add(self, i: int):
        obj = self.objective
        x = self.data[i]
        if obj == "diversity":
            self.pair_sum += self.acc[i]
            self.acc += np.linalg.norm(self.data - x, axis=1)
        elif obj == "redundancy":
            if not self.valid[i]:
                raise UndefinedError(f"segment {self.ids[i]} has an all-zero feature vector")
            self.pair_sum += self.acc[i]
            self.acc += self.unit @ self.unit[i]
        elif obj == "coverage":
            self.s1 += x
            self.s2 += x ** 2
        elif obj == "dispersion":
            k = self.k
            d = np.sqrt(((self.data - x) ** 2).sum(axis=1))
            if k:
                back = d[self.sel_idx[:k]]
                np.minimum(self.nn[:k], back, out=self.nn[:k])
                self.nn[k] = back.min()
            else:
                self.nn[0] = np.inf
            self.sel_idx[k] = i
            self.dist_to_sel[:, k] = d
        else:
            g = self.grid
            d = (g.cx - x[0]) ** 2 + (g.cy - x[1]) ** 2
            sid = self.ids[i]
            if self.k:
                take = (d < self.best) | ((d == self.best) & (sid < self.owner_id[self.owner]))
            else:
                take = np.ones(g.n_cells, dtype=bool)
            self.owner[take] = self.k
            self.best[take] = d[take]
            self.owner_id = np.append(self.owner_id, sid)
            self.counts = np.bincount(self.owner, minlength=self.k + 1).astype(float)
        self.k += 1


def greedy_place(objective: str, candidates: Sequence[int], budget: int, *, seed: int,
                 initial: Sequence[int] = (), vectors=None, midpoints=None,
                 study_area: StudyArea | None = None, greedy_cells: int = GREEDY_CELLS_PER_SIDE,
                 strategy: StrategyDescriptor | None = None, rescore: bool = True) -> Placement:
    """Add one sensor per step, optimizing ``objective`` on the selected set plus candidate.

    ``vectors`` (feature objectives) or ``midpoints`` (spatial objectives)
    are row-aligned with ``candidates``. Without initial sensors the first
    pick is a seeded uniform draw.
    """
    if objective not in GREEDY_OBJECTIVES:
        raise ConfigurationError(f"unknown greedy objective {objective!r}")
    ids = np.asarray(candidates, dtype=np.int64)
    feature_obj = objective in ("diversity", "redundancy", "coverage")
    data = vectors if feature_obj else midpoints
    if data is None:
        need = "feature vectors" if feature_obj else "midpoints"
        raise ConfigurationError(f"{objective} needs {need}")
    if objective == "voronoi_gini" and study_area is None:
        raise ConfigurationError("voronoi_gini needs a study area")
    if objective == "dispersion" and study_area is None:
        raise ConfigurationError("dispersion needs a study area")
    data = np.asarray(data, dtype=float).reshape(len(ids), -1)
    order = np.argsort(ids, kind="stable")
    ids, data = ids[order], data[order]
    if np.any(ids[1:] == ids[:-1]):
        raise ValidationError("duplicate candidate ids")
    initial = tuple(int(i) for i in initial)
    _check_budget(budget, initial, len(ids))
    pos = {int(i): k for k, i in enumerate(ids)}
    missing = [i for i in initial if i not in pos]
    if missing:
        raise ValidationError(f"initial sensors {missing} are not candidates")
    if strategy is None:
        family = "feature_" + objective if feature_obj else objective
        strategy = StrategyDescriptor(family)

    state = _GreedyState(objective, data, ids, study_area, greedy_cells, budget)
    taken = np.zeros(len(ids), dtype=bool)
    chosen: list[int] = []
    values: list = []

    def add(i):
        state.add(i)
        taken[i] = True
        chosen.append(int(ids[i]))

    for i in initial:
        add(pos[i])
    if not chosen and budget > 0:
        add(int(np.random.default_rng(seed).integers(len(ids))))
    maximize = DIRECTIONS[strategy.family] == "maximize"
    while len(chosen) < budget:
        s = state.scores()
        s = np.where(taken, np.nan, s)
        i = _pick(s, maximize)
        if taken[i]:
            raise UndefinedError(f"no candidate has a defined {objective} value")
        values.append(_objective_value(objective, s[i], state.k + 1, study_area))
        add(i)
    final = None
    if rescore and len(chosen) >= 2:
        final = evaluate_objective(objective, [data[pos[c]] for c in chosen], study_area, ids=chosen)
    return Placement(tuple(chosen), strategy, budget, seed, initial, tuple(values), final,
                     {"greedy_cells": greedy_cells} if objective == "voronoi_gini" else {})


def _objective_value(objective, raw, k, study_area):
    if objective == "dispersion":
        # mean NN distance -> Clark-Evans R
        return float(raw * 2.0 * math.sqrt(k / study_area.area))
    return float(raw)


def evaluate_objective(objective: str, rows, study_area: StudyArea | None = None, *,
                       ids=None, resolution=None, grid=None) -> float:
    """Objective value of a complete set, computed from scratch."""
    rows = np.asarray(rows, dtype=float)
    if objective in ("diversity", "redundancy", "coverage"):
        return score_feature_objective(rows, objective)
    if objective == "dispersion":
        return clark_evans(rows, study_area).R
    if objective == "voronoi_gini":
        part = voronoi_areas(rows, study_area, ids=ids, resolution=resolution, grid=grid)
        return gini([part.areas[i] for i in part.site_ids])
    raise ConfigurationError(f"unknown objective {objective!r}")


# ------------------------------------------------------------------- random

def random_placements(candidates: Sequence[int], budget: int, repetitions: int, seed: int,
                      initial: Sequence[int] = ()) -> list[Placement]:
    """Independent uniform draws; repetition ``r`` uses seed ``seed + r``."""
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    pool = np.array(sorted(int(c) for c in candidates), dtype=np.int64)
    initial = tuple(int(i) for i in initial)
    _check_budget(budget, initial, len(set(pool.tolist()) | set(initial)))
    free = pool[~np.isin(pool, initial)]
    strategy = StrategyDescriptor("random")
    out = []
    for r in range(repetitions):
        rng = np.random.default_rng(seed + r)
        draw = rng.choice(free, size=budget - len(initial), replace=False)
        out.append(Placement(initial + tuple(int(d) for d in draw), strategy, budget, seed + r, initial))
    return out


# ---------------------------------------------------------- active learning

@dataclass(frozen=True)
class ActiveLearningConfig:
    members: int = 10
    time_subsample: int | None = 30
    regressor: RegressorConfig = field(default_factory=RegressorConfig)

    def to_dict(self) -> dict:
        return {"members": self.members, "time_subsample": self.time_subsample,
                "regressor": self.regressor.to_dict()}


def time_subsample(dataset: Dataset, size: int | None, seed: int) -> np.ndarray:
    """Seeded subset of distinct (day, hour) steps, in time order; ``None`` keeps all."""
    steps = dataset.time_steps
    if size is None or size >= len(steps):
        return steps
    pick = np.sort(np.random.default_rng(seed).choice(len(steps), size=size, replace=False))
    return steps[pick]


def active_learning_place(design, candidates: Sequence[int], budget: int, *, seed: int,
                          initial: Sequence[int] = (), config: ActiveLearningConfig = ActiveLearningConfig(),
                          regressor=None, jobs: int = 1) -> Placement:
    """Repeatedly add the candidate with the largest mean ensemble variance.

    Each iteration refits a bootstrap ensemble on every observation of the
    selected segments and scores each remaining candidate over a shared
    seeded subsample of time steps.
    """
    if config.members < 2:
        raise ArityError("active learning needs an ensemble of at least two members")
    dataset = design.dataset
    ids = np.array(sorted(int(c) for c in candidates), dtype=np.int64)
    initial = tuple(int(i) for i in initial)
    _check_budget(budget, initial, len(ids))
    if not set(initial) <= set(ids.tolist()):
        raise ValidationError("initial sensors must be candidates")
    reg = regressor or GradientBoostedTrees(config.regressor)

    steps = time_subsample(dataset, config.time_subsample, seed)
    T = len(steps)
    seg_pos = dataset.positions(ids)
    X_all = design.rows(np.repeat(seg_pos, T), np.tile(steps[:, 0], len(ids)),
                        np.tile(np.maximum(steps[:, 1], 0), len(ids)))

    chosen = list(initial)
    taken = np.isin(ids, chosen)
    if not chosen:
        first = int(np.random.default_rng(seed).integers(len(ids)))
        chosen.append(int(ids[first]))
        taken[first] = True
    values = []
    while len(chosen) < budget:
        X, y = design.segment_observations(chosen)
        ens = fit_bootstrap_ensemble(reg, X, y, config.members, seed, jobs=jobs)
        free = np.flatnonzero(~taken)
        rows = (free[:, None] * T + np.arange(T)[None, :]).ravel()
        var = ensemble_stats(ens, X_all[rows]).variance.reshape(len(free), T).mean(axis=1)
        k = _pick(var, maximize=True)
        values.append(float(var[k]))
        taken[free[k]] = True
        chosen.append(int(ids[free[k]]))
        log.debug("active learning step %d: segment %d (variance %.4g)", len(chosen), chosen[-1], var[k])
    return Placement(tuple(chosen), StrategyDescriptor("active_learning"), budget, seed, initial,
                     tuple(values), options=config.to_dict())


# ----------------------------------------------------------------- dispatch

def feature_vectors(dataset: Dataset, subset: FeatureSubsetSpec, fit_ids: Sequence[int],
                    ids: Sequence[int]) -> np.ndarray:
    """Encoded static vectors of ``ids`` for a feature subset, fitted on ``fit_ids``."""
    cols = subset.resolve(dataset.schema)
    schema = dataset.schema.select(cols)
    enc = fit_preprocessor(dataset.static.loc[sorted(int(i) for i in fit_ids), cols], schema)
    return transform(dataset.static.loc[[int(i) for i in ids], cols], enc)


def place(dataset: Dataset, split: SplitAssignment, strategy: StrategyDescriptor, budget: int, seed: int,
          *, initial: Sequence[int] = (), design=None, active: ActiveLearningConfig = ActiveLearningConfig(),
          greedy_cells: int = GREEDY_CELLS_PER_SIDE, jobs: int = 1) -> Placement:
    """Run ``strategy`` over the training segments of ``split``."""
    cand = split.sorted("train")
    bad = [i for i in initial if int(i) not in split.train]
    if bad:
        raise ValidationError(f"initial sensors {bad} are not training segments")
    fam = strategy.family
    if fam in ("betweenness", "closeness"):
        return rank_place(centrality_scores(dataset.graph, fam), budget, initial, cand, strategy, seed)
    if fam in FEATURE_FAMILIES:
        vec = feature_vectors(dataset, strategy.feature_subset, cand, cand)
        return greedy_place(fam.removeprefix("feature_"), cand, budget, seed=seed, initial=initial,
                            vectors=vec, strategy=strategy)
    if fam in ("dispersion", "voronoi_gini"):
        return greedy_place(fam, cand, budget, seed=seed, initial=initial,
                            midpoints=dataset.midpoint_of(cand), study_area=dataset.study_area,
                            greedy_cells=greedy_cells, strategy=strategy)
    if fam == "active_learning":
        if design is None:
            design = DesignMatrix(dataset, cand)
        return active_learning_place(design, cand, budget, seed=seed, initial=initial, config=active, jobs=jobs)
    if fam == "random":
        return random_placements(cand, budget, 1, seed, initial)[0]
    raise ConfigurationError(f"unknown strategy {fam!r}")
