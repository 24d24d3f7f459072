"""Experiment configuration, orchestration, baselines and serialization."""
from .config import ExperimentConfig, load_config, config_from_dict
from .experiment import (Report, run_experiment, run_ood_experiment, summarize,
                         trend_non_decreasing, ood_drop, PROPOSED, ABLATION, KNN)
from .knn import knn_baseline, knn_predict
from .io import save_models, load_models, read_report

__all__ = [
    "ExperimentConfig", "load_config", "config_from_dict", "Report", "run_experiment",
    "run_ood_experiment", "summarize", "trend_non_decreasing", "ood_drop", "PROPOSED",
    "ABLATION", "KNN", "knn_baseline", "knn_predict", "save_models", "load_models", "read_report",
]
