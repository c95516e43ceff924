"""Treatment-effect estimation with an identifiable VAE built on a balanced
prognostic prior, plus synthetic benchmarks and an experiment harness.
"""
from .config import ExperimentConfig, load_config
from .data import Dataset, concat_datasets, read_dataset_csv, write_dataset_csv
from .dgp import LinearGaussianToy, generate, overlap_degree, sample_dgp_spec, split
from .estimation import CateEstimates, ate, cate
from .gaussian import DiagonalGaussian, kl_diag_gaussians
from .metrics import MetricsReport, eps_ate, evaluate, pehe, root_pehe
from .model import IntactVaeModel, build_model, decode, elbo_beta, encode, prior
from .rng import derive_seed, make_rng
from .sweep import baseline_root_pehe, run_sweep
from .training import TrainConfig, TrainHistory, init_model, train

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "load_config",
    "Dataset", "concat_datasets", "read_dataset_csv", "write_dataset_csv",
    "LinearGaussianToy", "generate", "overlap_degree", "sample_dgp_spec", "split",
    "CateEstimates", "ate", "cate",
    "DiagonalGaussian", "kl_diag_gaussians",
    "MetricsReport", "eps_ate", "evaluate", "pehe", "root_pehe",
    "IntactVaeModel", "build_model", "decode", "elbo_beta", "encode", "prior",
    "derive_seed", "make_rng",
    "baseline_root_pehe", "run_sweep",
    "TrainConfig", "TrainHistory", "init_model", "train",
]
