"""Self-contained numerical checks: finite differences and exact oracles.

These routines re-derive quantities along independent routes — central
finite differences of the energies, brute-force enumeration over hidden
states, numerical quadrature, and the exact Gaussian-mixture form of a
small model's visible marginal — and compare them against the analytic
implementations.  The CLI exposes them as ``gradcheck`` and
``oraclecheck``; the test suite drives the same functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp, ndtr

from . import learning, model, samplers
from .model import GRBMParams

PARAM_FIELDS = ("W", "b", "mu", "log_sigma2")


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (
            f"{status} {self.name}: value {self.value:.3e}, "
            f"threshold {self.threshold:.3e}{extra}"
        )


def random_params(
    rng: np.random.Generator,
    n_visible: int,
    n_hidden: int,
    scale: float = 0.5,
    log_sigma2_range: tuple[float, float] = (-1.0, 1.0),
) -> GRBMParams:
    """A generic random small model for checks."""
    return GRBMParams(
        W=scale * rng.standard_normal((n_visible, n_hidden)),
        b=scale * rng.standard_normal(n_hidden),
        mu=rng.standard_normal(n_visible),
        log_sigma2=rng.uniform(*log_sigma2_range, size=n_visible),
    )


def finite_diff_param_grads(scalar_fn, params: GRBMParams, eps: float = 1e-5):
    """Central finite differences of a scalar function of the parameters.

    Returns a GradientSet holding d scalar_fn / d theta entry by entry.
    """
    out = {}
    for name in PARAM_FIELDS:
        base = getattr(params, name)
        grad = np.zeros_like(base)
        flat = grad.ravel()
        for idx in range(base.size):
            for sign in (+1.0, -1.0):
                p = params.copy()
                getattr(p, name).ravel()[idx] += sign * eps
                flat[idx] += sign * scalar_fn(p)
        flat /= 2.0 * eps
        out[name] = grad
    return learning.GradientSet(out["W"], out["b"], out["mu"], out["log_sigma2"])


def _rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    denom = max(1.0, float(np.max(np.abs(reference))))
    return float(np.max(np.abs(analytic - reference))) / denom


def gradset_rel_err(analytic, reference) -> dict[str, float]:
    return {
        name: _rel_err(a, r)
        for name, a, r in zip(PARAM_FIELDS, analytic.arrays(), reference.arrays())
    }


def run_gradient_checks(
    rng: np.random.Generator,
    n_instances: int = 50,
    n_visible: int = 3,
    n_hidden: int = 4,
    tol_fd: float = 1e-6,
    tol_enum: float = 1e-9,
    joint_fn=None,
    marginal_fn=None,
    params_override: GRBMParams | None = None,
) -> list[CheckResult]:
    """Finite-difference and enumeration checks of the gradient formulas.

    ``joint_fn``/``marginal_fn`` default to the production implementations;
    passing a corrupted variant turns this into a negative control.  With
    ``params_override`` the checks run at those fixed parameters (fresh
    random states per instance) instead of fresh random models.
    """
    joint_fn = joint_fn or learning.joint_grads
    marginal_fn = marginal_fn or learning.marginal_grads
    if params_override is not None:
        n_visible, n_hidden = params_override.n_visible, params_override.n_hidden
    worst = {f"joint.{n}": 0.0 for n in PARAM_FIELDS}
    worst.update({f"marginal.{n}": 0.0 for n in PARAM_FIELDS})
    worst_enum = 0.0
    for _ in range(n_instances):
        if params_override is not None:
            params = params_override
        else:
            params = random_params(rng, n_visible, n_hidden)
        v = rng.standard_normal(n_visible)
        h = (rng.random(n_hidden) < 0.5).astype(float)

        fd_joint = finite_diff_param_grads(
            lambda p: -model.energy(p, v, h), params
        )
        an_joint = joint_fn(params, v[None, :], h[None, :])
        for name, err in gradset_rel_err(an_joint, fd_joint).items():
            worst[f"joint.{name}"] = max(worst[f"joint.{name}"], err)

        fd_marg = finite_diff_param_grads(
            lambda p: -model.marginal_energy(p, v), params
        )
        an_marg = marginal_fn(params, v[None, :])
        for name, err in gradset_rel_err(an_marg, fd_marg).items():
            worst[f"marginal.{name}"] = max(worst[f"marginal.{name}"], err)

        # Rao-Blackwell identity: the marginal form equals the exact
        # conditional expectation of the joint form over h ~ p(h|v).
        h_all = model.enumerate_hidden_states(n_hidden)
        log_mass = model.hidden_log_prob(
            params, np.repeat(v[None, :], h_all.shape[0], axis=0), h_all
        )
        mass = np.exp(log_mass)
        acc = [0.0, 0.0, 0.0, 0.0]
        for mass_k, h_k in zip(mass, h_all):
            g = joint_fn(params, v[None, :], h_k[None, :])
            acc = [s + mass_k * a for s, a in zip(acc, g.arrays())]
        expected = learning.GradientSet(*acc)
        for name, err in gradset_rel_err(an_marg, expected).items():
            worst_enum = max(worst_enum, err)

    results = [
        CheckResult(
            name=f"grad.fd.{key}",
            passed=err <= tol_fd,
            value=err,
            threshold=tol_fd,
        )
        for key, err in worst.items()
    ]
    results.append(
        CheckResult(
            name="grad.enum.marginal_vs_joint",
            passed=worst_enum <= tol_enum,
            value=worst_enum,
            threshold=tol_enum,
        )
    )
    return results


def marginal_consistency_error(params: GRBMParams, v) -> float:
    """Scaled mismatch between the marginal energy and the 2^M brute sum."""
    h_all = model.enumerate_hidden_states(params.n_hidden)
    vb = np.atleast_2d(np.asarray(v, float))
    errs = []
    for row in vb:
        energies = model.energy(
            params, np.repeat(row[None, :], h_all.shape[0], axis=0), h_all
        )
        brute = -logsumexp(-energies)
        tilde = model.marginal_energy(params, row)
        errs.append(abs(tilde - brute) / (1.0 + abs(tilde)))
    return float(max(errs))


def run_marginal_consistency_check(
    rng: np.random.Generator,
    n_instances: int = 100,
    tol: float = 1e-9,
) -> CheckResult:
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 11))
        params = random_params(rng, n, m)
        v = rng.standard_normal((3, n))
        worst = max(worst, marginal_consistency_error(params, v))
    return CheckResult("oracle.marginal_consistency", worst <= tol, worst, tol)


def log_partition_quadrature_1d(params: GRBMParams, span_sigmas: float = 50.0) -> float:
    """log Z for N=1 by numerical quadrature of the h-summed Boltzmann weight."""
    if params.n_visible != 1:
        raise ValueError("quadrature oracle is 1-D only")
    h_all = model.enumerate_hidden_states(params.n_hidden)
    sigma = float(params.sigma[0])
    center = float(params.mu[0])
    lo, hi = center - span_sigmas * sigma, center + span_sigmas * sigma

    def integrand(x):
        v = np.array([x])
        e = model.energy(params, np.repeat(v[None, :], h_all.shape[0], axis=0), h_all)
        return float(np.sum(np.exp(-e)))

    total, _ = quad(integrand, lo, hi, limit=200)
    return float(np.log(total))


def run_log_partition_check(
    rng: np.random.Generator, tol: float = 1e-8
) -> CheckResult:
    params = random_params(rng, 1, 4)
    exact = model.exact_log_partition(params)
    quadrature = log_partition_quadrature_1d(params)
    err = abs(exact - quadrature) / max(1.0, abs(quadrature))
    return CheckResult("oracle.log_partition_quadrature", err <= tol, err, tol)


def simulate_k_step_proposal(
    params: GRBMParams, h, v0, alphas, n_paths: int, rng: np.random.Generator
) -> np.ndarray:
    """Directly simulate the K-step inner Langevin loop n_paths times."""
    sigma2 = params.sigma2
    wh = np.asarray(h, float) @ params.W.T
    v = np.repeat(np.asarray(v0, float)[None, :], n_paths, axis=0)
    for alpha in np.asarray(alphas, float).ravel():
        noise = rng.standard_normal(v.shape)
        v = v - alpha * (v - params.mu - wh) / sigma2 + np.sqrt(2.0 * alpha) * noise
    return v


def run_k_step_proposal_check(
    rng: np.random.Generator, n_paths: int = 100_000
) -> CheckResult:
    """Monte-Carlo check of the closed-form K-step proposal moments (3 SE)."""
    n, k = 2, 5
    params = random_params(rng, n, 3, log_sigma2_range=(-0.2, 0.2))
    # Keep every |1 - alpha/sigma^2| < 1 so the recursion is contractive.
    alphas = np.linspace(0.4, 0.1, k) * float(np.min(params.sigma2))
    h = (rng.random(3) < 0.5).astype(float)
    v0 = rng.standard_normal(n)
    mean, var = samplers.k_step_proposal_moments(params, h, v0, alphas)
    sim = simulate_k_step_proposal(params, h, v0, alphas, n_paths, rng)
    emp_mean = sim.mean(axis=0)
    emp_var = sim.var(axis=0, ddof=1)
    se_mean = np.sqrt(var / n_paths)
    se_var = var * np.sqrt(2.0 / (n_paths - 1))
    z_mean = np.abs(emp_mean - mean) / se_mean
    z_var = np.abs(emp_var - var) / se_var
    worst = float(max(z_mean.max(), z_var.max()))
    return CheckResult(
        "oracle.k_step_proposal_mc",
        worst <= 3.0,
        worst,
        3.0,
        detail="max |z| over mean and variance coordinates",
    )


def exact_visible_mixture(params: GRBMParams):
    """The exact visible marginal of a small model as a Gaussian mixture.

    Every hidden configuration contributes component N(mu + W h, sigma^2)
    with weight p(h); this is an oracle route independent of the samplers
    and of the marginal-energy code path.
    """
    log_w = model.exact_hidden_log_weights(params)
    weights = np.exp(log_w - logsumexp(log_w))
    h_all = model.enumerate_hidden_states(params.n_hidden)
    means = params.mu + h_all @ params.W.T
    return weights, means, params.sigma


def exact_moments(params: GRBMParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact per-coordinate mean, variance, and 4th central moment of v."""
    weights, means, sigma = exact_visible_mixture(params)
    mean = weights @ means
    second = weights @ (means**2 + sigma**2)
    var = second - mean**2
    d = means - mean
    mu4 = weights @ (d**4 + 6.0 * d**2 * sigma**2 + 3.0 * sigma**4)
    return mean, var, mu4


def histogram_tv_to_exact_1d(
    params: GRBMParams, samples: np.ndarray, n_bins: int = 50
) -> float:
    """Total-variation distance between a histogram and the exact density.

    Bins span the exact mixture's support (component means +- 6 sigma);
    mass falling outside on either side enters the distance as well.
    """
    if params.n_visible != 1:
        raise ValueError("TV oracle is 1-D only")
    weights, means, sigma = exact_visible_mixture(params)
    means = means.ravel()
    s = float(sigma[0])
    lo, hi = means.min() - 6.0 * s, means.max() + 6.0 * s
    edges = np.linspace(lo, hi, n_bins + 1)
    cdf = np.array([np.sum(weights * ndtr((e - means) / s)) for e in edges])
    exact_mass = np.diff(cdf)
    exact_outside = cdf[0] + (1.0 - cdf[-1])
    x = np.asarray(samples, float).ravel()
    counts, _ = np.histogram(x, bins=edges)
    emp_mass = counts / x.size
    emp_outside = 1.0 - emp_mass.sum()
    return 0.5 * (np.sum(np.abs(emp_mass - exact_mass)) + abs(emp_outside - exact_outside))


def pooled_sampler_tv(
    params: GRBMParams,
    kind: str,
    seed: int,
    n_chains: int = 20,
    kept_per_chain: int = 5000,
    burn_in: int = 500,
    alpha0: float = 0.2,
    inner_steps: int = 5,
) -> float:
    """TV of pooled retained samples from noise-initialized chains (1-D model)."""
    total = burn_in + kept_per_chain
    config = samplers.SamplerConfig(
        total_steps=total,
        burn_in=burn_in,
        alpha0=alpha0,
        adjust_step=0,
        inner_steps=inner_steps,
        anneal_inner=True,
    )
    rng = np.random.default_rng(seed)
    init = rng.standard_normal((n_chains, params.n_visible))
    trace = samplers.run_sampler(kind, params, config, rng, init_v=init)
    return histogram_tv_to_exact_1d(params, trace.vs)


def run_sampler_tv_checks(
    seed: int,
    tv_tol: float = 0.05,
    n_chains: int = 20,
    kept_per_chain: int = 5000,
) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    params = random_params(rng, 1, 4, scale=1.0, log_sigma2_range=(-0.5, 0.5))
    results = []
    for offset, kind in enumerate(samplers.sampler_names()):
        tv = pooled_sampler_tv(
            params,
            kind,
            seed=seed + 1 + offset,
            n_chains=n_chains,
            kept_per_chain=kept_per_chain,
        )
        results.append(
            CheckResult(f"oracle.sampler_tv.{kind}", tv <= tv_tol, tv, tv_tol)
        )
    return results


def run_oracle_checks(seed: int = 0, tv_tol: float = 0.05) -> list[CheckResult]:
    """The full oracle battery used by the CLI ``oraclecheck`` command."""
    rng = np.random.default_rng(seed)
    results = [
        run_marginal_consistency_check(rng),
        run_log_partition_check(rng),
        run_k_step_proposal_check(rng),
    ]
    results.extend(run_sampler_tv_checks(seed, tv_tol=tv_tol))
    return results
