"""Sensor placement for citywide traffic interpolation, with a reproducible benchmark harness."""

__version__ = "0.1.0"

from .bench import (BenchmarkReport, EvaluationResult, Evaluator, compute_error, equivalent_sensor_count,
                    evaluate_placement, run_comparison, run_spatial_benchmark, run_temporal_benchmark)
from .dataset import (Dataset, SplitAssignment, SyntheticCityConfig, filter_outliers,
                      generate_synthetic_city, load_dataset, save_dataset, split_segments)
from .features import FeatureSchema, FeatureSubsetSpec, fit_preprocessor, score_feature_objective, transform
from .graph import Segment, SegmentGraph, build_segment_graph, centrality_scores
from .interpolator import (BootstrapEnsemble, RegressorConfig, ensemble_stats, fit_bootstrap_ensemble,
                           fit_regressor, predict_regressor)
from .placement import (Placement, StrategyDescriptor, active_learning_place, greedy_place, place,
                        random_placements, rank_place)
from .spatial import StudyArea, clark_evans, gini, voronoi_areas
from .temporal import Calendar, DeploymentPlan, Scheme, allocate_plan, extract_training_rows, sample_days
