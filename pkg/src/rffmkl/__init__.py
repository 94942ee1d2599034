"""Multiple kernel learning in the primal with random Fourier features.

Feature groups are embedded by per-group, per-bandwidth random Fourier maps;
an SVM over the concatenated embedding is trained jointly with nonnegative
kernel weights constrained by an L1, L2 or mixed L21 norm.
"""

__version__ = "0.1.0"

from .dataset import FeatureGroup, GroupedDataset, GroupManifest, SynthSpec, load_csv, \
    synth_grouped
from .evaluation import auc, mcc, metrics_report, repeated_trials
from .mkl import EmbeddingBank, MklModel, Regularizer, SolverConfig, beta_step, build_bank, \
    load_model, save_model, solve
from .rff import BandwidthSchedule, RffMap
from .selection import mean_pairwise_correlation, rank_by_weights, top_k_accuracy_curve

__all__ = [
    "BandwidthSchedule", "EmbeddingBank", "FeatureGroup", "GroupManifest", "GroupedDataset",
    "MklModel", "Regularizer", "RffMap", "SolverConfig", "SynthSpec", "auc", "beta_step",
    "build_bank", "load_csv", "load_model", "mcc", "mean_pairwise_correlation",
    "metrics_report", "rank_by_weights", "repeated_trials", "save_model", "solve",
    "synth_grouped", "top_k_accuracy_curve",
]
