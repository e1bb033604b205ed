"""Samplers: scheduler, acceptance ratios, K-step proposal, and chains."""

import math

import numpy as np
import pytest

from grbm import checks, model, samplers
from grbm.exceptions import ChainError
from grbm.model import GRBMParams
from grbm.samplers import ChainState, SamplerConfig


def random_params(rng, n, m, **kw):
    return checks.random_params(rng, n, m, **kw)


class TestCosineStepSize:
    def test_endpoints_exact(self):
        assert samplers.cosine_step_size(0, 7, 0.3) == 0.3
        assert samplers.cosine_step_size(7, 7, 0.3) == 0.0

    def test_midpoint(self):
        assert samplers.cosine_step_size(5, 10, 2.0) == pytest.approx(1.0, rel=1e-15)

    def test_monotone_non_increasing(self):
        vals = [samplers.cosine_step_size(k, 23, 1.7) for k in range(24)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            samplers.cosine_step_size(-1, 5, 1.0)
        with pytest.raises(ValueError):
            samplers.cosine_step_size(6, 5, 1.0)
        with pytest.raises(ValueError):
            samplers.cosine_step_size(0, 0, 1.0)


class TestMalaLogAcceptance:
    def test_identical_states(self):
        rng = np.random.default_rng(0)
        params = random_params(rng, 3, 4)
        v = rng.standard_normal(3)
        assert samplers.mala_log_acceptance(params, v, v, 0.1) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        params = random_params(rng, 3, 4)
        a = rng.standard_normal(3)
        b = rng.standard_normal(3)
        fwd = samplers.mala_log_acceptance(params, a, b, 0.07)
        rev = samplers.mala_log_acceptance(params, b, a, 0.07)
        assert fwd == pytest.approx(-rev, rel=1e-12)

    def test_quadratic_closed_form(self):
        # W = 0 with strongly negative bias: the marginal energy is exactly
        # quadratic up to a constant, so the Gaussian proposal ratio is
        # available by hand.
        mu, ls = 0.7, np.log(0.8)
        params = GRBMParams(W=[[0.0]], b=[-40.0], mu=[mu], log_sigma2=[ls])
        sigma2 = math.exp(ls)
        alpha = 0.13
        v_from, v_to = np.array([0.3]), np.array([-1.1])

        def grad(v):
            return (v - mu) / sigma2

        def quad(v):
            return 0.5 * (v - mu) ** 2 / sigma2

        num = -quad(v_to) - np.sum((v_from - v_to + alpha * grad(v_to)) ** 2) / (
            4 * alpha
        )
        den = -quad(v_from) - np.sum((v_to - v_from + alpha * grad(v_from)) ** 2) / (
            4 * alpha
        )
        # The saturated softplus terms cancel exactly in the ratio.
        expected = float(num - den)
        got = samplers.mala_log_acceptance(params, v_from, v_to, alpha)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_alpha_must_be_positive(self):
        params = GRBMParams(W=[[0.0]], b=[0.0], mu=[0.0], log_sigma2=[0.0])
        with pytest.raises(ValueError):
            samplers.mala_log_acceptance(params, [0.0], [1.0], 0.0)


class TestBetaCoefficients:
    def test_single_step(self):
        sigma2 = np.array([0.5, 2.0])
        betas = samplers.beta_coefficients([0.3], sigma2)
        np.testing.assert_allclose(betas[1], 1.0)
        np.testing.assert_allclose(betas[0], 1.0 - 0.3 / sigma2)

    def test_zero_factor(self):
        sigma2 = np.array([0.25, 1.0])
        betas = samplers.beta_coefficients([0.1, 0.25, 0.1], sigma2)
        # alpha_2 == sigma2[0] zeroes every beta_k with k < 2 at coordinate 0.
        assert betas[0][0] == 0.0
        assert betas[1][0] == 0.0
        assert betas[2][0] != 0.0

    def test_matches_nested_loops(self):
        rng = np.random.default_rng(2)
        alphas = rng.uniform(0.05, 0.4, size=3)
        sigma2 = rng.uniform(0.5, 2.0, size=4)
        betas = samplers.beta_coefficients(alphas, sigma2)
        k = len(alphas)
        for kk in range(k + 1):
            expected = np.ones(4)
            for j in range(kk + 1, k + 1):
                expected = expected * (1.0 - alphas[j - 1] / sigma2)
            np.testing.assert_allclose(betas[kk], expected, rtol=1e-14)


class TestKStepProposalMoments:
    def test_single_step_reduction(self):
        rng = np.random.default_rng(3)
        params = random_params(rng, 3, 4)
        h = (rng.random(4) < 0.5).astype(float)
        v0 = rng.standard_normal(3)
        alpha = 0.21
        mean, var = samplers.k_step_proposal_moments(params, h, v0, [alpha])
        expected_mean = v0 - alpha * (v0 - params.mu - params.W @ h) / params.sigma2
        np.testing.assert_allclose(mean, expected_mean, rtol=1e-12)
        np.testing.assert_allclose(var, 2 * alpha)

    def test_variance_independent_of_model_when_k1(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            params = random_params(rng, 2, 3)
            _, var = samplers.k_step_proposal_moments(
                params, np.zeros(3), np.zeros(2), [0.4]
            )
            np.testing.assert_allclose(var, 0.8)

    def test_symmetric_zero_mean(self):
        params = GRBMParams(
            W=np.zeros((2, 3)), b=np.zeros(3), mu=np.zeros(2), log_sigma2=np.zeros(2)
        )
        mean, _ = samplers.k_step_proposal_moments(
            params, np.zeros(3), np.zeros(2), [0.3, 0.2]
        )
        np.testing.assert_allclose(mean, 0.0)

    def test_monte_carlo_moments(self):
        res = checks.run_k_step_proposal_check(np.random.default_rng(5), n_paths=100_000)
        assert res.passed, res.line()

    def test_all_zero_alphas_rejected(self):
        params = GRBMParams(W=[[0.0]], b=[0.0], mu=[0.0], log_sigma2=[0.0])
        with pytest.raises(ValueError):
            samplers.k_step_proposal_moments(params, [0.0], [0.0], [0.0, 0.0])


class TestGibbsLangevinLogAcceptance:
    def test_identical_states(self):
        rng = np.random.default_rng(6)
        params = random_params(rng, 2, 3)
        v = rng.standard_normal(2)
        h = (rng.random(3) < 0.5).astype(float)
        state = ChainState(v=v, h=h)
        got = samplers.gibbs_langevin_log_acceptance(params, state, state, [0.2, 0.1])
        assert got == pytest.approx(0.0, abs=1e-12)

    def test_antisymmetry(self):
        rng = np.random.default_rng(7)
        params = random_params(rng, 2, 3)
        s1 = ChainState(rng.standard_normal(2), (rng.random(3) < 0.5).astype(float))
        s2 = ChainState(rng.standard_normal(2), (rng.random(3) < 0.5).astype(float))
        alphas = [0.25, 0.15, 0.05]
        fwd = samplers.gibbs_langevin_log_acceptance(params, s1, s2, alphas)
        rev = samplers.gibbs_langevin_log_acceptance(params, s2, s1, alphas)
        assert fwd == pytest.approx(-rev, rel=1e-12)

    def test_hand_assembled_1d(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, 1, 1)
        sigma2 = float(params.sigma2[0])
        alpha = 0.17
        v_f, h_f = np.array([0.4]), np.array([1.0])
        v_t, h_t = np.array([-0.9]), np.array([0.0])

        def proposal_logq(v_end, v_start, h):
            mean, var = samplers.k_step_proposal_moments(params, h, v_start, [alpha])
            return float(-np.sum((v_end - mean) ** 2 / (2 * var)))

        def bern_logq(h, v):
            p = model.hidden_probs(params, v)
            return float(np.sum(h * np.log(p) + (1 - h) * np.log(1 - p)))

        num = (
            -model.energy(params, v_t, h_t)
            + proposal_logq(v_f, v_t, h_t)
            + bern_logq(h_f, v_f)
        )
        den = (
            -model.energy(params, v_f, h_f)
            + proposal_logq(v_t, v_f, h_f)
            + bern_logq(h_t, v_t)
        )
        got = samplers.gibbs_langevin_log_acceptance(
            params, ChainState(v_f, h_f), ChainState(v_t, h_t), [alpha]
        )
        assert got == pytest.approx(num - den, rel=1e-12)

    def test_requires_hidden(self):
        params = GRBMParams(W=[[0.0]], b=[0.0], mu=[0.0], log_sigma2=[0.0])
        with pytest.raises(ValueError):
            samplers.gibbs_langevin_log_acceptance(
                params, ChainState(np.zeros(1)), ChainState(np.zeros(1), np.zeros(1)), [0.1]
            )


def _frozen_1d_model():
    rng = np.random.default_rng(16)
    return random_params(rng, 1, 4, scale=1.5, log_sigma2_range=(-1.5, -0.5))


class TestGibbsSampler:
    def test_factorized_moments(self):
        # W = 0: the visible marginal is exactly N(mu, sigma^2).
        rng = np.random.default_rng(9)
        params = GRBMParams(
            W=np.zeros((2, 3)),
            b=rng.standard_normal(3),
            mu=np.array([0.4, -1.2]),
            log_sigma2=np.log([0.7, 1.6]),
        )
        config = SamplerConfig(total_steps=1000, burn_in=0)
        init = rng.standard_normal((100, 2))
        trace = samplers.gibbs_sample(params, config, np.random.default_rng(10), init)
        draws = trace.vs.reshape(-1, 2)
        n = draws.shape[0]
        var = params.sigma2
        se_mean = np.sqrt(var / n)
        se_var = var * np.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(draws.mean(axis=0) - params.mu) <= 3 * se_mean)
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - var) <= 3 * se_var)

    def test_tv_against_exact_density(self):
        tv = checks.pooled_sampler_tv(
            _frozen_1d_model(), "gibbs", seed=100, n_chains=10, kept_per_chain=2000
        )
        assert tv < 0.08

    def test_acceptance_reports_certainty(self):
        params = _frozen_1d_model()
        trace = samplers.gibbs_sample(
            params, SamplerConfig(total_steps=10), np.random.default_rng(0)
        )
        assert trace.accept_rate == 1.0

    def test_seed_reproducibility(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=50, burn_in=5)
        a = samplers.gibbs_sample(params, config, np.random.default_rng(3))
        b = samplers.gibbs_sample(params, config, np.random.default_rng(3))
        np.testing.assert_array_equal(a.vs, b.vs)
        np.testing.assert_array_equal(a.hs, b.hs)

    def test_trace_length(self):
        params = _frozen_1d_model()
        trace = samplers.gibbs_sample(
            params, SamplerConfig(total_steps=40, burn_in=15), np.random.default_rng(1)
        )
        assert trace.vs.shape == (25, 1)


class TestLangevinSampler:
    def test_unadjusted_ou_moments(self):
        # Saturated-off hidden units make the marginal energy quadratic; the
        # unadjusted annealed chain should end distributed as N(0, 1).
        params = GRBMParams(
            W=np.zeros((1, 2)), b=[-40.0, -40.0], mu=[0.0], log_sigma2=[0.0]
        )
        steps = 300
        config = SamplerConfig(
            total_steps=steps, burn_in=steps - 1, alpha0=0.2, adjust_step=steps
        )
        rng = np.random.default_rng(12)
        n = 20_000
        trace = samplers.langevin_sample(params, config, rng, rng.standard_normal((n, 1)))
        finals = trace.vs[-1].ravel()
        assert trace.accept_rate == 1.0
        assert abs(finals.mean()) <= 3 / np.sqrt(n)
        assert abs(finals.var(ddof=1) - 1.0) <= 3 * np.sqrt(2.0 / (n - 1))

    def test_tv_against_exact_density(self):
        tv = checks.pooled_sampler_tv(
            _frozen_1d_model(), "langevin", seed=100, n_chains=10, kept_per_chain=2000
        )
        assert tv < 0.08

    def test_rejected_steps_duplicate_state(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=400, burn_in=0, alpha0=1.5, adjust_step=0)
        trace = samplers.langevin_sample(params, config, np.random.default_rng(4))
        assert trace.vs.shape == (400, 1)
        assert 0.0 < trace.accept_rate < 1.0
        # Rejections leave consecutive duplicates in the trace.
        dupes = np.sum(trace.vs[1:] == trace.vs[:-1])
        assert dupes > 0

    def test_chain_error_on_divergence(self):
        params = GRBMParams(
            W=[[0.0]], b=[-40.0], mu=[0.0], log_sigma2=[np.log(1e-6)]
        )
        config = SamplerConfig(total_steps=500, burn_in=0, alpha0=5.0, adjust_step=500)
        with pytest.raises(ChainError) as exc:
            samplers.langevin_sample(params, config, np.random.default_rng(5))
        assert exc.value.step >= 1

    def test_seed_reproducibility(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=60, burn_in=0, alpha0=0.3)
        a = samplers.langevin_sample(params, config, np.random.default_rng(6))
        b = samplers.langevin_sample(params, config, np.random.default_rng(6))
        np.testing.assert_array_equal(a.vs, b.vs)


class TestGibbsLangevinSampler:
    def test_never_adjusts_matches_raw_dynamics(self):
        params = _frozen_1d_model()
        steps, k = 25, 4
        config = SamplerConfig(
            total_steps=steps, burn_in=0, alpha0=0.3, adjust_step=steps, inner_steps=k
        )
        trace = samplers.gibbs_langevin_sample(
            params, config, np.random.default_rng(21)
        )
        assert trace.accept_rate == 1.0

        # Re-simulate the dynamics by hand with an identically seeded stream.
        rng = np.random.default_rng(21)
        sigma2 = params.sigma2
        alphas = samplers.inner_step_sizes(config)
        v = rng.standard_normal((1, 1))
        p = model.hidden_probs(params, v)
        h = (rng.random(p.shape) < p).astype(float)
        vs = []
        for _ in range(steps):
            wh = h @ params.W.T
            prop = v.copy()
            for alpha in alphas:
                noise = rng.standard_normal(prop.shape)
                prop = prop - alpha * (prop - params.mu - wh) / sigma2 + np.sqrt(
                    2 * alpha
                ) * noise
            p = model.hidden_probs(params, prop)
            h = (rng.random(p.shape) < p).astype(float)
            v = prop
            vs.append(v[0].copy())
        np.testing.assert_array_equal(trace.vs, np.array(vs))

    def test_tv_against_exact_density(self):
        tv = checks.pooled_sampler_tv(
            _frozen_1d_model(),
            "gibbs_langevin",
            seed=100,
            n_chains=10,
            kept_per_chain=2000,
        )
        assert tv < 0.08

    def test_rejection_restores_pair(self):
        params = _frozen_1d_model()
        config = SamplerConfig(
            total_steps=300, burn_in=0, alpha0=1.2, adjust_step=0, inner_steps=3
        )
        trace = samplers.gibbs_langevin_sample(params, config, np.random.default_rng(8))
        assert 0.0 < trace.accept_rate < 1.0
        same_v = np.all(trace.vs[1:] == trace.vs[:-1], axis=(1,))
        same_h = np.all(trace.hs[1:] == trace.hs[:-1], axis=(1,))
        # Wherever v was restored by a rejection, h must be restored too.
        assert np.all(same_h[same_v.ravel()])

    def test_degenerate_inner_schedule_rejected(self):
        params = _frozen_1d_model()
        config = SamplerConfig(
            total_steps=5, burn_in=0, alpha0=0.1, adjust_step=0, inner_steps=1
        )
        with pytest.raises(ValueError):
            samplers.gibbs_langevin_sample(params, config, np.random.default_rng(9))

    def test_seed_reproducibility(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=40, burn_in=0, alpha0=0.2, inner_steps=3)
        a = samplers.gibbs_langevin_sample(params, config, np.random.default_rng(10))
        b = samplers.gibbs_langevin_sample(params, config, np.random.default_rng(10))
        np.testing.assert_array_equal(a.vs, b.vs)
        np.testing.assert_array_equal(a.hs, b.hs)


class TestSamplerConfigValidation:
    def test_burn_in_bounds(self):
        with pytest.raises(ValueError):
            SamplerConfig(total_steps=5, burn_in=5)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            SamplerConfig(total_steps=5, alpha0=0.0)

    def test_inner_steps(self):
        with pytest.raises(ValueError):
            SamplerConfig(total_steps=5, inner_steps=0)


class TestSampleChains:
    def test_per_chain_streams_are_order_independent(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=20, burn_in=19, alpha0=0.2, inner_steps=3)
        a, _ = samplers.sample_chains(params, config, 5, seed=42)
        b, _ = samplers.sample_chains(params, config, 5, seed=42)
        np.testing.assert_array_equal(a, b)
        c, _ = samplers.sample_chains(params, config, 3, seed=42)
        # The first 3 chains are identical regardless of how many run.
        np.testing.assert_array_equal(a[:3], c)

    def test_dispatch_unknown_kind(self):
        params = _frozen_1d_model()
        config = SamplerConfig(total_steps=5)
        with pytest.raises(ValueError):
            samplers.run_sampler("hamiltonian", params, config, np.random.default_rng(0))
