"""Amortized neural clustering of time series.

Simulate labeled collections, train a pairwise affinity network on their
features, and turn the predicted affinity matrix into a partition.
"""
from .features import FeatureDataset, FeatureSpec, acf, extract_features, qaf
from .metrics import ari, compare_methods, pairwise_compare, summarize, wilcoxon_signed_rank
from .modelio import load_params, save_params
from .network import NetworkParams, TrainConfig, affinity_matrix, init_network, pair_gradient, train
from .partition import (Partition, elbow_wcss, kmeans, kmedoids, louvain, modularity,
                        spectral_cluster, ward_hierarchical)
from .pipeline import ExperimentConfig, ingest_prices, run_application, run_scenario_experiment
from .scenarios import LabeledCollection, ScenarioConfig, generate, sample_crp
from .simulate import (ARSpec, GARCHSpec, PACFSpec, SETARSpec, durbin_levinson, simulate_ar,
                       simulate_garch, simulate_setar)

__version__ = "0.1.0"
