"""Fairness auditing for privacy-utility trade-off models of human mobility."""

from .config import AuditConfig
from .entropy import (EntropyProfile, actual_entropy, entropy_profile, entropy_similarity,
                      fuzzy_entropy, lonlat_entropy, novelty_series, sample_entropy_2d,
                      shannon_entropy)
from .errors import ConfigError, InputError, InvariantError, TrajFairError
from .fairness import (choose_k, cluster_violation_rate, feature_matrix, group_fairness_score,
                       kmeans, outcome_delta, select_pairs, violation_rate)
from .grid import GridSpec, Heatmap, build_heatmap, cohort_spec, integrate_heatmaps, project_to_cell
from .ingest import (DemographicTable, GeoPoint, OutcomeTable, Trajectory, load_demographics,
                     load_geolife_plt, load_outcomes, load_trajectories, resample_trajectory)
from .report import FairnessReport, emit_report, run_audit, sweep_granularity
from .similarity import SsimParams, effective_ssim, pairwise_ssim, ssim_global, ssim_map

__version__ = "0.1.0"
