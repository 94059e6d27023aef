"""Fairness-aware label noise correction with ensemble margins and group flip budgets."""
from .correction import FairObncParams, fair_obnc, flip_budget, obnc, prevalence_bounds
from .data import Dataset, NoiseSpec, SyntheticSpec, generate_synthetic, inject_noise, load_csv, make_iid
from .ensemble import EnsembleParams, fit, rank_noisy

__all__ = [
    "Dataset", "EnsembleParams", "FairObncParams", "NoiseSpec", "SyntheticSpec",
    "fair_obnc", "fit", "flip_budget", "generate_synthetic", "inject_noise", "load_csv",
    "make_iid", "obnc", "prevalence_bounds", "rank_noisy",
]
__version__ = "0.1.0"
