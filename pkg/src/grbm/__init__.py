"""Gaussian-Bernoulli restricted Boltzmann machines.

Energy-based generative models with real-valued visible units and binary
hidden units, trained by noise-start contrastive divergence and sampled
with blocked Gibbs, Metropolis-adjusted Langevin, or hybrid Gibbs-Langevin
chains.  The top-level :class:`GaussianBernoulliRBM` estimator follows the
scikit-learn fit/transform API; the functional core lives in the
``model``, ``samplers``, ``learning``, ``data``, and ``evaluate`` modules.
"""

from .data import Dataset, GmmSpec, default_gmm_specs, gmm_sample, load_idx, standardize
from .estimator import GaussianBernoulliRBM
from .exceptions import (
    CapabilityError,
    ChainError,
    ConfigError,
    DimensionError,
    FormatError,
    GradientError,
    TrainingAbort,
)
from .learning import (
    GradientSet,
    TrainConfig,
    TrainingLog,
    cd_step_joint,
    cd_step_marginal,
    clip_gradient_set,
    joint_grads,
    marginal_grads,
    train,
)
from .model import (
    GRBMParams,
    energy,
    energy_grad_v,
    exact_log_likelihood,
    exact_log_partition,
    hidden_probs,
    init_params,
    load_checkpoint,
    marginal_energy,
    marginal_energy_grad_v,
    sample_h_given_v,
    sample_v_given_h,
    save_checkpoint,
)
from .samplers import (
    ChainState,
    SampleTrace,
    SamplerConfig,
    beta_coefficients,
    cosine_step_size,
    gibbs_langevin_log_acceptance,
    gibbs_langevin_sample,
    gibbs_sample,
    k_step_proposal_moments,
    langevin_sample,
    mala_log_acceptance,
    sample_chains,
)

__version__ = "0.1.0"

__all__ = [
    "CapabilityError",
    "ChainError",
    "ChainState",
    "ConfigError",
    "Dataset",
    "DimensionError",
    "FormatError",
    "GRBMParams",
    "GaussianBernoulliRBM",
    "GmmSpec",
    "GradientError",
    "GradientSet",
    "SampleTrace",
    "SamplerConfig",
    "TrainConfig",
    "TrainingAbort",
    "TrainingLog",
    "beta_coefficients",
    "cd_step_joint",
    "cd_step_marginal",
    "clip_gradient_set",
    "cosine_step_size",
    "default_gmm_specs",
    "energy",
    "energy_grad_v",
    "exact_log_likelihood",
    "exact_log_partition",
    "gibbs_langevin_log_acceptance",
    "gibbs_langevin_sample",
    "gibbs_sample",
    "gmm_sample",
    "hidden_probs",
    "init_params",
    "joint_grads",
    "k_step_proposal_moments",
    "langevin_sample",
    "load_checkpoint",
    "load_idx",
    "mala_log_acceptance",
    "marginal_energy",
    "marginal_energy_grad_v",
    "marginal_grads",
    "sample_chains",
    "sample_h_given_v",
    "sample_v_given_h",
    "save_checkpoint",
    "standardize",
    "train",
]
