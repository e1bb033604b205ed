"""MCMC samplers for Gaussian-Bernoulli RBMs.

Three samplers are provided:

* :func:`gibbs_sample` — blocked Gibbs, alternating h ~ p(h|v) and
  v ~ p(v|h).
* :func:`langevin_sample` — Metropolis-adjusted Langevin on the marginal
  energy of the visible units, with a cosine step-size schedule over the
  whole run.
* :func:`gibbs_langevin_sample` — a hybrid: each outer step runs K inner
  Langevin steps on the joint energy at fixed h, then resamples h, and
  accepts or rejects the pair using the marginalized K-step proposal
  density, which is Gaussian in closed form.

All samplers take an explicit ``numpy.random.Generator`` and are
bit-reproducible for a fixed seed and config.  States may be a single
vector (shape ``(N,)``) or a batch of chains stacked on the first axis
(shape ``(chains, N)``); a batched call drives every chain from the one
generator passed in.  :func:`sample_chains` instead gives each chain its
own stream spawned from a master seed and is the entry point used by the
CLI.

The adjust step ``adjust_step`` (eta) skips the Metropolis test for the
first eta steps: 0 adjusts everywhere, eta >= total_steps never adjusts.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from . import model
from .exceptions import ChainError, DimensionError
from .model import GRBMParams, _as_batch


@dataclass
class SamplerConfig:
    """Knobs shared by the samplers.

    Attributes:
        total_steps: number of Markov-chain steps T.
        burn_in: initial steps discarded from the trace (must be < T).
        alpha0: initial Langevin step size (> 0).
        adjust_step: steps at the start that skip Metropolis adjustment.
        inner_steps: K, Langevin steps per outer step (Gibbs-Langevin only).
        anneal_inner: cosine-anneal the inner step sizes over k = 1..K;
            otherwise all K inner steps use alpha0.
    """

    total_steps: int
    burn_in: int = 0
    alpha0: float = 0.01
    adjust_step: int = 0
    inner_steps: int = 5
    anneal_inner: bool = True

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.burn_in < self.total_steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < total_steps")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.adjust_step < 0:
            raise ValueError("adjust_step must be non-negative")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


@dataclass
class ChainState:
    """A visible vector plus the optional hidden vector carried alongside."""

    v: np.ndarray
    h: np.ndarray | None = None


@dataclass
class SampleTrace:
    """Retained post-burn-in states plus acceptance statistics.

    ``vs`` has shape (steps, N) for a single chain or (steps, chains, N)
    for a batched run; ``hs`` mirrors it for samplers that carry hidden
    states.  ``accept_rate`` is defined as 1 when no step was adjusted.
    """

    vs: np.ndarray
    hs: np.ndarray | None
    proposals_made: int
    proposals_accepted: int

    @property
    def accept_rate(self) -> float:
        if self.proposals_made == 0:
            return 1.0
        return self.proposals_accepted / self.proposals_made

    @property
    def final_v(self) -> np.ndarray:
        return self.vs[-1]


def cosine_step_size(k: int, total: int, alpha0: float) -> float:
    """Cosine-annealed step size: alpha0/2 * (1 + cos(k pi / total)).

    Equals alpha0 at k = 0 and 0 at k = total, non-increasing in between.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    if not 0 <= k <= total:
        raise ValueError(f"step index {k} outside [0, {total}]")
    return 0.5 * alpha0 * (1.0 + math.cos(math.pi * k / total))


def inner_step_sizes(config: SamplerConfig) -> np.ndarray:
    """The K inner Langevin step sizes used by one Gibbs-Langevin outer step."""
    k = config.inner_steps
    if config.anneal_inner:
        return np.array([cosine_step_size(i, k, config.alpha0) for i in range(1, k + 1)])
    return np.full(k, config.alpha0)


def mala_log_acceptance(params: GRBMParams, v_from, v_to, alpha_t: float):
    """Log of the Metropolis ratio for a one-step Langevin proposal.

    ``v_from`` is the current state and ``v_to`` the proposal; the caller
    clamps at 0 and exponentiates.  Antisymmetric under argument swap.
    """
    if not alpha_t > 0:
        raise ValueError("alpha_t must be positive")
    vf, f_single = _as_batch(v_from, params.n_visible, "v_from")
    vt, t_single = _as_batch(v_to, params.n_visible, "v_to")
    if vf.shape[0] != vt.shape[0]:
        raise DimensionError("v_from and v_to must have equal batch sizes")
    la = _mala_log_acceptance(params, vf, vt, alpha_t)
    return float(la[0]) if (f_single and t_single) else la


def _mala_log_acceptance(params, v_from, v_to, alpha_t):
    e_from = model.marginal_energy(params, v_from)
    e_to = model.marginal_energy(params, v_to)
    g_from = model.marginal_energy_grad_v(params, v_from)
    g_to = model.marginal_energy_grad_v(params, v_to)
    rev = v_from - v_to + alpha_t * g_to
    fwd = v_to - v_from + alpha_t * g_from
    inv4a = 1.0 / (4.0 * alpha_t)
    num = -e_to - inv4a * np.sum(rev * rev, axis=-1)
    den = -e_from - inv4a * np.sum(fwd * fwd, axis=-1)
    return num - den


def beta_coefficients(alphas, sigma2) -> np.ndarray:
    """Backward cumulative products beta_k = prod_{j>k} (1 - alpha_j / sigma^2).

    Returns a (K+1, N) matrix with beta_K = 1; row k is the coefficient
    multiplying the k-th inner state in the unrolled K-step Langevin
    recursion.
    """
    alphas = np.asarray(alphas, dtype=np.float64).ravel()
    sigma2 = np.asarray(sigma2, dtype=np.float64).ravel()
    k = alphas.shape[0]
    betas = np.ones((k + 1, sigma2.shape[0]))
    for i in range(k - 1, -1, -1):
        betas[i] = betas[i + 1] * (1.0 - alphas[i] / sigma2)
    return betas


def k_step_proposal_moments(params: GRBMParams, h, v0, alphas):
    """Gaussian moments of the marginalized K-step Langevin proposal.

    With the intermediate states integrated out, the K-step proposal
    q(v_K | v_0, h) is Gaussian with

        mean = beta_0 v_0 + (sum_k beta_k alpha_k) (mu + W h) / sigma^2
        var  = sum_k 2 alpha_k beta_k^2   (elementwise).

    Raises:
        ValueError: if the proposal variance is not strictly positive
            (all step sizes zero).
    """
    hb, h_single = _as_batch(h, params.n_hidden, "h")
    vb, v_single = _as_batch(v0, params.n_visible, "v0")
    alphas = np.asarray(alphas, dtype=np.float64).ravel()
    betas = beta_coefficients(alphas, params.sigma2)
    coeff = np.sum(betas[1:] * alphas[:, None], axis=0)
    var = np.sum(2.0 * alphas[:, None] * betas[1:] ** 2, axis=0)
    if not np.all(var > 0):
        raise ValueError("proposal variance must be positive; all step sizes are zero")
    mean = betas[0] * vb + coeff * (params.mu + hb @ params.W.T) / params.sigma2
    if h_single and v_single:
        return mean[0], var
    return mean, var


def gibbs_langevin_log_acceptance(
    params: GRBMParams, state_from: ChainState, state_to: ChainState, alphas
):
    """Log of the Metropolis ratio for one Gibbs-Langevin outer step.

    Both states must carry hidden vectors.  The ratio combines the joint
    energies, the closed-form K-step Gaussian proposal densities in both
    directions, and the Bernoulli log-masses of the hidden proposals; all
    terms are evaluated in the log domain.
    """
    if state_from.h is None or state_to.h is None:
        raise ValueError("both states must carry hidden vectors")
    vf, f_single = _as_batch(state_from.v, params.n_visible, "state_from.v")
    hf, _ = _as_batch(state_from.h, params.n_hidden, "state_from.h")
    vt, t_single = _as_batch(state_to.v, params.n_visible, "state_to.v")
    ht, _ = _as_batch(state_to.h, params.n_hidden, "state_to.h")
    alphas = np.asarray(alphas, dtype=np.float64).ravel()
    betas = beta_coefficients(alphas, params.sigma2)
    beta0 = betas[0]
    a_vec = np.sum(betas[1:] * alphas[:, None], axis=0) / params.sigma2
    var = np.sum(2.0 * alphas[:, None] * betas[1:] ** 2, axis=0)
    if not np.all(var > 0):
        raise ValueError("proposal variance must be positive")
    la = _gl_log_acceptance(params, vf, hf, vt, ht, beta0, a_vec, var)
    return float(la[0]) if (f_single and t_single) else la


def _gl_log_acceptance(params, v_f, h_f, v_t, h_t, beta0, a_vec, var):
    # Overflow to -inf is the intended rejection path for runaway proposals.
    with np.errstate(over="ignore"):
        e_f = model.energy(params, v_f, h_f)
        e_t = model.energy(params, v_t, h_t)
        mean_rev = beta0 * v_t + a_vec * (params.mu + h_t @ params.W.T)
        mean_fwd = beta0 * v_f + a_vec * (params.mu + h_f @ params.W.T)
        d_rev = v_f - mean_rev
        d_fwd = v_t - mean_fwd
        q_rev = -np.sum(d_rev * d_rev / (2.0 * var), axis=-1)
        q_fwd = -np.sum(d_fwd * d_fwd / (2.0 * var), axis=-1)
        lh_f = model.hidden_log_prob(params, v_f, h_f)
        lh_t = model.hidden_log_prob(params, v_t, h_t)
        return (-e_t + q_rev + lh_f) - (-e_f + q_fwd + lh_t)


def _prepare_init_v(params, rng, init_v):
    if init_v is None:
        return rng.standard_normal((1, params.n_visible)), True
    vb, single = _as_batch(init_v, params.n_visible, "init_v")
    return np.array(vb, dtype=np.float64), single


def _accept_mask(rng, n_chains, log_acc):
    u = rng.random(n_chains)
    with np.errstate(divide="ignore"):
        return np.log(u) < log_acc


def _gibbs_steps(params, config, rng, v):
    """Yield (t, v, h, Wh) for t = 1..T; v is updated in place each step."""
    for t in range(1, config.total_steps + 1):
        h = model.sample_h_given_v(params, v, rng)
        wh = h @ params.W.T
        v = params.mu + wh + params.sigma * rng.standard_normal(v.shape)
        yield t, v, h, wh


def gibbs_sample(
    params: GRBMParams,
    config: SamplerConfig,
    rng: np.random.Generator,
    init_v=None,
) -> SampleTrace:
    """Blocked Gibbs sampling; returns post-burn-in (v, h) pairs.

    ``init_v`` defaults to a standard-normal draw.  There is no rejection
    step, so the acceptance statistics report 100%.
    """
    v, single = _prepare_init_v(params, rng, init_v)
    kept = config.total_steps - config.burn_in
    vs = np.empty((kept, v.shape[0], params.n_visible))
    hs = np.empty((kept, v.shape[0], params.n_hidden))
    steps = 0
    for t, v, h, _ in _gibbs_steps(params, config, rng, v):
        steps += v.shape[0]
        if t > config.burn_in:
            vs[t - config.burn_in - 1] = v
            hs[t - config.burn_in - 1] = h
    if single:
        vs, hs = vs[:, 0, :], hs[:, 0, :]
    return SampleTrace(vs, hs, proposals_made=steps, proposals_accepted=steps)


def _langevin_steps(params, config, rng, v):
    """Yield (t, v, adjusted, accepted) for the marginal MALA chain."""
    n_chains = v.shape[0]
    t_total = config.total_steps
    for t in range(1, t_total + 1):
        alpha = cosine_step_size(t, t_total, config.alpha0)
        noise = rng.standard_normal(v.shape)
        # Overflow on a diverging chain is reported via ChainError below.
        with np.errstate(over="ignore", invalid="ignore"):
            grad = model.marginal_energy_grad_v(params, v)
            prop = v - alpha * grad + math.sqrt(2.0 * alpha) * noise
        if not np.all(np.isfinite(prop)):
            raise ChainError("non-finite Langevin proposal", step=t)
        if t <= config.adjust_step:
            v = prop
            yield t, v, 0, 0
            continue
        if alpha == 0.0:
            # Degenerate final proposal (cosine hits 0): identical state,
            # Metropolis ratio 1.
            log_acc = np.zeros(n_chains)
        else:
            log_acc = _mala_log_acceptance(params, v, prop, alpha)
        acc = _accept_mask(rng, n_chains, log_acc)
        v = np.where(acc[:, None], prop, v)
        yield t, v, n_chains, int(acc.sum())


def langevin_sample(
    params: GRBMParams,
    config: SamplerConfig,
    rng: np.random.Generator,
    init_v=None,
) -> SampleTrace:
    """Metropolis-adjusted Langevin on the marginal energy.

    Step sizes follow the cosine schedule over the whole run.  Steps
    t <= adjust_step accept unconditionally; later steps apply the MALA
    test and retain the previous state on rejection (the duplicate still
    occupies one slot in the trace).
    """
    v, single = _prepare_init_v(params, rng, init_v)
    kept = config.total_steps - config.burn_in
    vs = np.empty((kept, v.shape[0], params.n_visible))
    made = accepted = 0
    for t, v, n_adj, n_acc in _langevin_steps(params, config, rng, v):
        made += n_adj
        accepted += n_acc
        if t > config.burn_in:
            vs[t - config.burn_in - 1] = v
    if single:
        vs = vs[:, 0, :]
    return SampleTrace(vs, None, proposals_made=made, proposals_accepted=accepted)


def _gibbs_langevin_steps(params, config, rng, v, h):
    """Yield (t, v, h, Wh, adjusted, accepted) for the hybrid chain."""
    n_chains = v.shape[0]
    sigma2 = params.sigma2
    alphas = inner_step_sizes(config)
    if not np.any(alphas > 0):
        raise ValueError(
            "all inner step sizes are zero; anneal_inner requires inner_steps >= 2"
        )
    betas = beta_coefficients(alphas, sigma2)
    beta0 = betas[0]
    a_vec = np.sum(betas[1:] * alphas[:, None], axis=0) / sigma2
    var = np.sum(2.0 * alphas[:, None] * betas[1:] ** 2, axis=0)
    adjusting = config.adjust_step < config.total_steps
    if adjusting and not np.all(var > 0):
        raise ValueError("degenerate K-step proposal variance; cannot adjust")
    wh = h @ params.W.T
    for t in range(1, config.total_steps + 1):
        prop = v.copy()
        with np.errstate(over="ignore"):
            for alpha in alphas:
                noise = rng.standard_normal(prop.shape)
                prop = (
                    prop
                    - alpha * (prop - params.mu - wh) / sigma2
                    + math.sqrt(2.0 * alpha) * noise
                )
        if not np.all(np.isfinite(prop)):
            raise ChainError("non-finite Gibbs-Langevin state", step=t)
        h_prop = model.sample_h_given_v(params, prop, rng)
        wh_prop = h_prop @ params.W.T
        if t <= config.adjust_step:
            v, h, wh = prop, h_prop, wh_prop
            yield t, v, h, wh, 0, 0
            continue
        log_acc = _gl_log_acceptance(
            params, v, h, prop, h_prop, beta0, a_vec, var
        )
        acc = _accept_mask(rng, n_chains, log_acc)
        mask = acc[:, None]
        # A rejected outer step restores the (v, h) pair, not v alone.
        v = np.where(mask, prop, v)
        h = np.where(mask, h_prop, h)
        wh = np.where(mask, wh_prop, wh)
        yield t, v, h, wh, n_chains, int(acc.sum())


def gibbs_langevin_sample(
    params: GRBMParams,
    config: SamplerConfig,
    rng: np.random.Generator,
    init: ChainState | None = None,
) -> SampleTrace:
    """Gibbs-Langevin sampling; returns post-burn-in (v, h) pairs.

    Each outer step runs ``inner_steps`` Langevin steps on the joint energy
    at fixed h (the cosine schedule restarts every outer step when
    ``anneal_inner``), resamples h, and Metropolis-adjusts the pair using
    the marginalized K-step proposal.  ``init`` defaults to v ~ N(0, I)
    with h ~ p(h | v).
    """
    if init is None:
        v, single = _prepare_init_v(params, rng, None)
        h = model.sample_h_given_v(params, v, rng)
    else:
        v, single = _as_batch(init.v, params.n_visible, "init.v")
        v = np.array(v, dtype=np.float64)
        if init.h is not None:
            h, _ = _as_batch(init.h, params.n_hidden, "init.h")
            h = np.array(h, dtype=np.float64)
        else:
            h = model.sample_h_given_v(params, v, rng)
    kept = config.total_steps - config.burn_in
    vs = np.empty((kept, v.shape[0], params.n_visible))
    hs = np.empty((kept, v.shape[0], params.n_hidden))
    made = accepted = 0
    for t, v, h, _, n_adj, n_acc in _gibbs_langevin_steps(params, config, rng, v, h):
        made += n_adj
        accepted += n_acc
        if t > config.burn_in:
            vs[t - config.burn_in - 1] = v
            hs[t - config.burn_in - 1] = h
    if single:
        vs, hs = vs[:, 0, :], hs[:, 0, :]
    return SampleTrace(vs, hs, proposals_made=made, proposals_accepted=accepted)


_SAMPLERS = {
    "gibbs": gibbs_sample,
    "langevin": langevin_sample,
    "gibbs_langevin": gibbs_langevin_sample,
}


def sampler_names() -> tuple[str, ...]:
    return tuple(_SAMPLERS)


def run_sampler(kind: str, params, config, rng, init_v=None) -> SampleTrace:
    """Dispatch to a sampler by name ('gibbs', 'langevin', 'gibbs_langevin')."""
    try:
        fn = _SAMPLERS[kind]
    except KeyError:
        raise ValueError(f"unknown sampler {kind!r}; choose from {sorted(_SAMPLERS)}")
    if kind == "gibbs_langevin":
        init = None if init_v is None else ChainState(v=np.asarray(init_v))
        return fn(params, config, rng, init)
    return fn(params, config, rng, init_v)


def sample_chains(
    params: GRBMParams,
    config: SamplerConfig,
    n_chains: int,
    seed: int,
    kind: str = "gibbs_langevin",
) -> tuple[np.ndarray, float]:
    """Run independent noise-initialized chains, one rng stream per chain.

    Streams are spawned from the master seed by counter, so chains are
    reproducible regardless of execution order.  Returns the final state of
    every chain, shape (n_chains, N), plus the pooled acceptance rate.
    """
    streams = np.random.SeedSequence(seed).spawn(n_chains)
    finals = np.empty((n_chains, params.n_visible))
    made = accepted = 0
    for i, ss in enumerate(streams):
        trace = run_sampler(kind, params, config, np.random.default_rng(ss))
        finals[i] = trace.final_v
        made += trace.proposals_made
        accepted += trace.proposals_accepted
    rate = 1.0 if made == 0 else accepted / made
    return finals, rate
