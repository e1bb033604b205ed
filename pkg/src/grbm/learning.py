"""Noise-start contrastive divergence training.

The gradient estimator differences a data ("positive") phase against a
model ("negative") phase.  Unlike classic CD, the negative chain starts
from standard-normal noise on every update rather than from reconstructed
data, so that generation at test time — which also starts from noise —
matches the conditions the model was trained under.

Both per-sample gradient flavors are expectations of the negative energy
derivative: :func:`joint_grads` uses sampled binary hidden states, and
:func:`marginal_grads` replaces them with their conditional means (which
is exactly the h-enumeration average of the joint form).  The SGD loop
ascends the resulting log-likelihood gradient estimate, clips its global
norm, and cosine-decays the learning rate per epoch.
"""

from __future__ import annotations

import csv
import io

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import model
from .exceptions import ChainError, DimensionError, GradientError, TrainingAbort
from .model import GRBMParams
from .samplers import (
    SamplerConfig,
    _gibbs_langevin_steps,
    _gibbs_steps,
    _langevin_steps,
    cosine_step_size,
)

SAMPLER_KINDS = ("gibbs", "langevin", "gibbs_langevin")
STEP_SCALES = ("mean_var", "mean_std")


@dataclass
class GradientSet:
    """Per-parameter gradients mirroring :class:`GRBMParams`."""

    dW: np.ndarray
    db: np.ndarray
    dmu: np.ndarray
    dlog_sigma2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.dW, self.db, self.dmu, self.dlog_sigma2)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(*(factor * a for a in self.arrays()))

    def minus(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(*(a - b for a, b in zip(self.arrays(), other.arrays())))


@dataclass
class TrainConfig:
    """Hyperparameters of the CD training loop.

    Defaults follow the robust recipe: learning rate 0.01 with cosine decay
    to 0, global gradient-norm clipping at 10, no momentum, no weight
    decay, no persistent chains, burn-in 0 inside CD.
    """

    epochs: int
    batch_size: int
    cd_steps: int
    sampler_kind: str = "gibbs_langevin"
    learning_rate: float = 0.01
    adjust_step: int = 0
    inner_steps: int = 5
    alpha0: float = 0.1
    anneal_inner: bool = True
    clip_norm: float = 10.0
    lr_anneal: bool = True
    seed: int = 0
    step_scale: str = "mean_var"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise ValueError(f"sampler_kind must be one of {SAMPLER_KINDS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.step_scale not in STEP_SCALES:
            raise ValueError(f"step_scale must be one of {STEP_SCALES}")

    def sampler_config(self, alpha0: float) -> SamplerConfig:
        return SamplerConfig(
            total_steps=self.cd_steps,
            burn_in=0,
            alpha0=alpha0,
            adjust_step=self.adjust_step,
            inner_steps=self.inner_steps,
            anneal_inner=self.anneal_inner,
        )


@dataclass
class TrainingLogRow:
    epoch: int
    lr: float
    mean_pos_energy: float
    mean_neg_energy: float
    grad_norm_preclip: float
    accept_rate: float
    mean_log_sigma2: float


CSV_FIELDS = (
    "epoch",
    "lr",
    "mean_pos_energy",
    "mean_neg_energy",
    "grad_norm_preclip",
    "accept_rate",
    "mean_log_sigma2",
)


@dataclass
class TrainingLog:
    rows: list[TrainingLogRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.rows:
            writer.writerow([getattr(r, f) for f in CSV_FIELDS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())


def joint_grads(params: GRBMParams, v_batch, h_batch) -> GradientSet:
    """Batch mean of the negative joint-energy derivative, -dE/dtheta.

    One expectation side of the CD estimator; the caller differences the
    positive and negative phases.
    """
    vb, hb, _ = model._paired_batches(params, v_batch, h_batch)
    return _joint_stats(params, vb, hb, hb @ params.W.T)


def _joint_stats(params, vb, hb, wh) -> GradientSet:
    sigma2 = params.sigma2
    n = vb.shape[0]
    v_scaled = vb / sigma2
    dw = v_scaled.T @ hb / n
    diff = vb - params.mu
    dmu = np.sum(diff / sigma2, axis=0) / n
    dls = np.sum(diff * diff / (2.0 * sigma2) - vb * wh / sigma2, axis=0) / n
    db = np.sum(hb, axis=0) / n
    return GradientSet(dw, db, dmu, dls)


def marginal_grads(params: GRBMParams, v_batch) -> GradientSet:
    """Batch mean of -dE~/dtheta: the joint form with h replaced by p(h|v)."""
    vb, _ = model._as_batch(v_batch, params.n_visible, "v_batch")
    probs = model.hidden_probs(params, vb)
    return _joint_stats(params, vb, probs, probs @ params.W.T)


def clip_gradient_set(grads: GradientSet, max_norm: float) -> GradientSet:
    """Scale the whole gradient set so its global L2 norm is at most max_norm.

    Raises:
        GradientError: on non-finite gradient entries; training surfaces
            these instead of silently clipping NaN.
    """
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    for name, arr in zip(("dW", "db", "dmu", "dlog_sigma2"), grads.arrays()):
        if not np.all(np.isfinite(arr)):
            raise GradientError(f"non-finite entries in gradient {name}")
    norm = grads.global_norm()
    if norm <= max_norm:
        return grads
    return grads.scaled(max_norm / norm)


def effective_alpha0(alpha0: float, params: GRBMParams, step_scale: str = "mean_var") -> float:
    """Langevin step size scaled by the current average variance.

    Keeps the step roughly invariant as the learned variances shrink.
    ``step_scale`` selects mean sigma^2 (default) or mean sigma.
    """
    sigma2 = params.sigma2
    if step_scale == "mean_var":
        return alpha0 * float(np.mean(sigma2))
    if step_scale == "mean_std":
        return alpha0 * float(np.mean(np.sqrt(sigma2)))
    raise ValueError(f"step_scale must be one of {STEP_SCALES}")


@dataclass
class CdStepInfo:
    """Diagnostics from one CD update, consumed by the training log."""

    neg_init_v: np.ndarray
    neg_final_v: np.ndarray
    mean_pos_energy: float
    mean_neg_energy: float
    accept_rate: float
    grad_norm_preclip: float


class _MeanAccumulator:
    """Running mean of joint-gradient statistics over retained chain states."""

    def __init__(self, params: GRBMParams):
        self._params = params
        n, m = params.n_visible, params.n_hidden
        self._sum_w = np.zeros((n, m))
        self._sum_b = np.zeros(m)
        self._sum_mu = np.zeros(n)
        self._sum_ls = np.zeros(n)
        self._count = 0

    def add(self, vb: np.ndarray, hb: np.ndarray, wh: np.ndarray) -> None:
        p = self._params
        sigma2 = p.sigma2
        self._sum_w += (vb / sigma2).T @ hb
        self._sum_b += np.sum(hb, axis=0)
        diff = vb - p.mu
        self._sum_mu += np.sum(diff / sigma2, axis=0)
        self._sum_ls += np.sum(diff * diff / (2.0 * sigma2) - vb * wh / sigma2, axis=0)
        self._count += vb.shape[0]

    def mean(self) -> GradientSet:
        c = self._count
        return GradientSet(
            self._sum_w / c, self._sum_b / c, self._sum_mu / c, self._sum_ls / c
        )


def cd_step_joint(params, data_batch, config: TrainConfig, rng) -> GradientSet:
    """One modified-CD update from the joint density.

    Positive phase samples h from the data; the negative chain starts at
    standard-normal noise and every one of the cd_steps retained states
    contributes to the negative expectation (burn-in 0).  Returns the
    clipped ascent direction (positive minus negative gradients).
    """
    grads, _ = cd_step_joint_with_info(params, data_batch, config, rng)
    return grads


def cd_step_joint_with_info(params, data_batch, config, rng):
    vb, _ = model._as_batch(data_batch, params.n_visible, "data_batch")
    h_pos = model.sample_h_given_v(params, vb, rng)
    pos = _joint_stats(params, vb, h_pos, h_pos @ params.W.T)

    n_chains = vb.shape[0]
    v0 = rng.standard_normal((n_chains, params.n_visible))
    h0 = model.sample_h_given_v(params, v0, rng)
    scfg = config.sampler_config(
        effective_alpha0(config.alpha0, params, config.step_scale)
    )
    acc = _MeanAccumulator(params)
    made = accepted = 0
    v = h = None
    if config.sampler_kind == "gibbs":
        for _, v, h, wh in _gibbs_steps(params, scfg, rng, v0):
            acc.add(v, h, wh)
    elif config.sampler_kind == "gibbs_langevin":
        for _, v, h, wh, n_adj, n_acc in _gibbs_langevin_steps(
            params, scfg, rng, v0, h0
        ):
            acc.add(v, h, wh)
            made += n_adj
            accepted += n_acc
    else:
        raise ValueError(
            "cd_step_joint requires a sampler over (v, h); use cd_step_marginal "
            "for the langevin sampler"
        )
    neg = acc.mean()
    delta = pos.minus(neg)
    info = CdStepInfo(
        neg_init_v=v0,
        neg_final_v=v,
        mean_pos_energy=float(np.mean(model.marginal_energy(params, vb))),
        mean_neg_energy=float(np.mean(model.marginal_energy(params, v))),
        accept_rate=1.0 if made == 0 else accepted / made,
        grad_norm_preclip=delta.global_norm(),
    )
    return clip_gradient_set(delta, config.clip_norm), info


def cd_step_marginal(params, data_batch, config: TrainConfig, rng) -> GradientSet:
    """One modified-CD update from the marginal density (Langevin sampler)."""
    grads, _ = cd_step_marginal_with_info(params, data_batch, config, rng)
    return grads


def cd_step_marginal_with_info(params, data_batch, config, rng):
    if config.sampler_kind != "langevin":
        raise ValueError("cd_step_marginal pairs with the langevin sampler")
    vb, _ = model._as_batch(data_batch, params.n_visible, "data_batch")
    pos = marginal_grads(params, vb)

    n_chains = vb.shape[0]
    v0 = rng.standard_normal((n_chains, params.n_visible))
    scfg = config.sampler_config(
        effective_alpha0(config.alpha0, params, config.step_scale)
    )
    acc = _MeanAccumulator(params)
    made = accepted = 0
    v = None
    for _, v, n_adj, n_acc in _langevin_steps(params, scfg, rng, v0):
        probs = model.hidden_probs(params, v)
        acc.add(v, probs, probs @ params.W.T)
        made += n_adj
        accepted += n_acc
    neg = acc.mean()
    delta = pos.minus(neg)
    info = CdStepInfo(
        neg_init_v=v0,
        neg_final_v=v,
        mean_pos_energy=float(np.mean(model.marginal_energy(params, vb))),
        mean_neg_energy=float(np.mean(model.marginal_energy(params, v))),
        accept_rate=1.0 if made == 0 else accepted / made,
        grad_norm_preclip=delta.global_norm(),
    )
    return clip_gradient_set(delta, config.clip_norm), info


def default_init(dataset, n_hidden: int, rng, weight_scale: float = 0.01) -> GRBMParams:
    """Standard initialization: small weights, mu at the data mean, sigma^2 = 1."""
    samples = getattr(dataset, "samples", dataset)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return model.init_params(
        samples.shape[1],
        n_hidden,
        rng,
        visible_mean=samples.mean(axis=0),
        weight_scale=weight_scale,
    )


def train(
    params_init: GRBMParams,
    dataset,
    config: TrainConfig,
    callbacks: Iterable[Callable[[int, GRBMParams, TrainingLogRow], None]] | None = None,
) -> tuple[GRBMParams, TrainingLog]:
    """SGD over minibatches with modified CD; pure function of (init, data, seed).

    Per epoch: shuffle, difference positive/negative gradients per batch,
    clip, and ascend with the (optionally cosine-annealed) learning rate.
    Gradient reduction uses a fixed summation order, so runs with the same
    seed produce bit-identical parameters and logs.

    Raises:
        TrainingAbort: wrapping a chain or gradient failure with the
            epoch/batch where it occurred.
    """
    samples = np.atleast_2d(np.asarray(getattr(dataset, "samples", dataset), float))
    if samples.shape[1] != params_init.n_visible:
        raise DimensionError(
            f"dataset has {samples.shape[1]} features, model expects "
            f"{params_init.n_visible}"
        )
    params = params_init.copy()
    rng = np.random.default_rng(config.seed)
    cd_full = (
        cd_step_marginal_with_info
        if config.sampler_kind == "langevin"
        else cd_step_joint_with_info
    )
    log = TrainingLog()
    n = samples.shape[0]
    for epoch in range(config.epochs):
        lr = (
            cosine_step_size(epoch, config.epochs, config.learning_rate)
            if config.lr_anneal
            else config.learning_rate
        )
        perm = rng.permutation(n)
        pos_e = neg_e = norm_sum = rate_sum = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = samples[perm[start : start + config.batch_size]]
            try:
                grads, info = cd_full(params, batch, config, rng)
            except (ChainError, GradientError) as err:
                raise TrainingAbort(str(err), epoch=epoch, batch=n_batches) from err
            params.W += lr * grads.dW
            params.b += lr * grads.db
            params.mu += lr * grads.dmu
            params.log_sigma2 += lr * grads.dlog_sigma2
            pos_e += info.mean_pos_energy
            neg_e += info.mean_neg_energy
            norm_sum += info.grad_norm_preclip
            rate_sum += info.accept_rate
            n_batches += 1
        row = TrainingLogRow(
            epoch=epoch,
            lr=lr,
            mean_pos_energy=pos_e / n_batches,
            mean_neg_energy=neg_e / n_batches,
            grad_norm_preclip=norm_sum / n_batches,
            accept_rate=rate_sum / n_batches,
            mean_log_sigma2=float(np.mean(params.log_sigma2)),
        )
        log.rows.append(row)
        for cb in callbacks or ():
            cb(epoch, params, row)
    return params, log
