"""Scikit-learn style estimator wrapping the functional core.

``GaussianBernoulliRBM`` follows the fit/transform contract so it composes
with pipelines, grid search, and the rest of the ecosystem: ``fit`` trains
with noise-start contrastive divergence, ``transform`` maps inputs to
hidden activation probabilities, and ``sample`` generates new data from
pure noise.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import learning, model, samplers
from .data import Dataset, standardize


class GaussianBernoulliRBM(TransformerMixin, BaseEstimator):
    """Gaussian-Bernoulli restricted Boltzmann machine.

    Real-valued visible units with learnable per-unit means and variances,
    binary hidden units.  Trained by modified contrastive divergence whose
    negative chains start from standard-normal noise, so that sampling the
    fitted model from noise matches the training conditions.

    Parameters:
        n_hidden: number of binary hidden units.
        sampler: 'gibbs', 'langevin', or 'gibbs_langevin'.
        epochs, batch_size, cd_steps, learning_rate, clip_norm, lr_anneal:
            SGD loop knobs; the learning rate cosine-decays to 0 when
            lr_anneal is set and the update's global norm is clipped.
        alpha0, adjust_step, inner_steps, anneal_inner: Langevin-family
            sampler knobs; alpha0 is rescaled by the current mean variance
            at every update.
        standardize_inputs: standardize X per coordinate before training
            and destandardize generated samples.
        weight_scale: std of the Gaussian weight initialization.
        random_state: integer seed; training is a pure function of it.

    Attributes:
        params_: fitted model parameters.
        training_log_: per-epoch training diagnostics.
        n_features_in_: number of visible units.
    """

    def __init__(
        self,
        n_hidden: int = 256,
        *,
        sampler: str = "gibbs_langevin",
        epochs: int = 100,
        batch_size: int = 100,
        cd_steps: int = 100,
        learning_rate: float = 0.01,
        alpha0: float = 0.1,
        adjust_step: int = 0,
        inner_steps: int = 5,
        anneal_inner: bool = True,
        clip_norm: float = 10.0,
        lr_anneal: bool = True,
        standardize_inputs: bool = True,
        weight_scale: float = 0.01,
        random_state: int | None = None,
    ):
        self.n_hidden = n_hidden
        self.sampler = sampler
        self.epochs = epochs
        self.batch_size = batch_size
        self.cd_steps = cd_steps
        self.learning_rate = learning_rate
        self.alpha0 = alpha0
        self.adjust_step = adjust_step
        self.inner_steps = inner_steps
        self.anneal_inner = anneal_inner
        self.clip_norm = clip_norm
        self.lr_anneal = lr_anneal
        self.standardize_inputs = standardize_inputs
        self.weight_scale = weight_scale
        self.random_state = random_state

    def _seed(self) -> int:
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy % (2**32))
        return int(self.random_state)

    def fit(self, X, y=None):
        """Train on X, shape (n_samples, n_features)."""
        X = check_array(X, dtype=np.float64)
        seed = self._seed()
        raw = Dataset(X)
        ds = standardize(raw) if self.standardize_inputs else raw
        rng = np.random.default_rng(seed)
        params0 = learning.default_init(
            ds, self.n_hidden, rng, weight_scale=self.weight_scale
        )
        config = learning.TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            cd_steps=self.cd_steps,
            sampler_kind=self.sampler,
            learning_rate=self.learning_rate,
            adjust_step=self.adjust_step,
            inner_steps=self.inner_steps,
            alpha0=self.alpha0,
            anneal_inner=self.anneal_inner,
            clip_norm=self.clip_norm,
            lr_anneal=self.lr_anneal,
            seed=seed + 1,
        )
        self.params_, self.training_log_ = learning.train(params0, ds, config)
        self.offset_ = ds.standardize_mean
        self.scale_ = ds.standardize_std
        self.n_features_in_ = X.shape[1]
        return self

    def _to_model_space(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return (X - self.offset_) / self.scale_

    def transform(self, X) -> np.ndarray:
        """Hidden activation probabilities p(h | v), shape (n_samples, n_hidden)."""
        return model.hidden_probs(self.params_, self._to_model_space(X))

    def score_samples(self, X) -> np.ndarray:
        """Unnormalized log density of each row (negative marginal energy)."""
        return -model.marginal_energy(self.params_, self._to_model_space(X))

    def score(self, X, y=None) -> float:
        """Mean unnormalized log density of X."""
        return float(np.mean(self.score_samples(X)))

    def reconstruct(self, X) -> np.ndarray:
        """Deterministic up-down reconstruction, in the input space."""
        v = self._to_model_space(X)
        recon = model.reconstruction_mean(self.params_, v)
        return recon * self.scale_ + self.offset_

    def sample(
        self,
        n_samples: int,
        steps: int | None = None,
        random_state: int | None = None,
    ) -> np.ndarray:
        """Generate samples from noise with the configured sampler.

        Each chain starts at v ~ N(0, I) and runs ``steps`` sampler steps
        (default: the training cd_steps) in its own random stream; the
        final states are destandardized back to the input space.
        """
        check_is_fitted(self, "params_")
        steps = self.cd_steps if steps is None else steps
        seed = self._seed() if random_state is None else int(random_state)
        config = samplers.SamplerConfig(
            total_steps=steps,
            burn_in=steps - 1,
            alpha0=learning.effective_alpha0(self.alpha0, self.params_),
            adjust_step=self.adjust_step,
            inner_steps=self.inner_steps,
            anneal_inner=self.anneal_inner,
        )
        finals, _ = samplers.sample_chains(
            self.params_, config, n_samples, seed, kind=self.sampler
        )
        return finals * self.scale_ + self.offset_

    def exact_log_likelihood(self, X) -> float:
        """Exact mean log likelihood; available for n_hidden <= 20 only."""
        return model.exact_log_likelihood(self.params_, self._to_model_space(X))
