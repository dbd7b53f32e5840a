import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autocurriculum.gradcheck import check_vi_blocks, random_batch
from autocurriculum.nn import SOFTMAX, Model, NetSpec
from autocurriculum.variational import (VariationalState, init_variational,
                                        softplus, softplus_inv,
                                        vi_loss_and_grads)
from helpers import gaussian_kl_quadrature


def one_param_state(mu_post, sigma_post, mu_prior, sigma_prior, s=100.0):
    phi = np.array([mu_post, softplus_inv(sigma_post),
                    mu_prior, softplus_inv(sigma_prior)])
    return VariationalState(phi, 1, np.zeros(1, dtype=np.intp), s)


class TestKl:
    def test_identical_distributions_have_zero_kl(self):
        state = one_param_state(0.7, 0.3, 0.7, 0.3)
        assert abs(state.kl()) < 1e-12

    def test_matches_quadrature(self):
        # mu_post 1, sigma_post 1, mu_prior 0, sigma_prior 2
        state = one_param_state(1.0, 1.0, 0.0, 2.0)
        expect = gaussian_kl_quadrature(1.0, 1.0, 0.0, 2.0)
        assert state.kl() == pytest.approx(expect, abs=1e-6)

    def test_matches_quadrature_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            mu_p, mu_q = rng.normal(0, 2, size=2)
            s_p, s_q = np.exp(rng.uniform(-1.5, 1.0, size=2))
            state = one_param_state(mu_p, s_p, mu_q, s_q)
            expect = gaussian_kl_quadrature(mu_p, s_p, mu_q, s_q)
            assert state.kl() == pytest.approx(expect, abs=1e-6)

    def test_common_scale_factor_preserves_log_term(self):
        # with equal means the KL depends on the scales only through their
        # ratio's quadratic part and ln(sigma_prior/sigma_post); scaling both
        # by the same factor changes nothing
        for c in (0.5, 2.0, 7.0):
            a = one_param_state(0.3, 0.4, 0.3, 0.9)
            b = one_param_state(0.3, 0.4 * c, 0.3, 0.9 * c)
            assert a.kl() == pytest.approx(b.kl(), abs=1e-12)

    def test_nonnegative_over_random_states(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            state = one_param_state(rng.normal(0, 3), float(np.exp(rng.uniform(-3, 2))),
                                    rng.normal(0, 3), float(np.exp(rng.uniform(-3, 2))))
            assert state.kl() >= -1e-12

    def test_sum_over_parameters(self):
        phi = np.array([0.5, -0.5, softplus_inv(0.3), softplus_inv(0.8),
                        0.0, softplus_inv(0.5)])
        state = VariationalState(phi, 2, np.zeros(2, dtype=np.intp), 10.0)
        parts = [gaussian_kl_quadrature(0.5, 0.3, 0.0, 0.5),
                 gaussian_kl_quadrature(-0.5, 0.8, 0.0, 0.5)]
        assert state.kl() == pytest.approx(sum(parts), abs=1e-6)


class TestKlGrads:
    def test_zero_at_equality(self):
        state = one_param_state(0.4, 0.6, 0.4, 0.6)
        for block in state.kl_grads():
            assert np.abs(block).max() < 1e-12

    def test_matches_finite_differences(self):
        state = one_param_state(1.0, 1.0, 0.0, 2.0)
        grads = np.concatenate(state.kl_grads())
        h = 1e-6
        numeric = np.empty(4)
        for i in range(4):
            orig = state.phi[i]
            state.phi[i] = orig + h
            up = state.kl()
            state.phi[i] = orig - h
            down = state.kl()
            state.phi[i] = orig
            numeric[i] = (up - down) / (2 * h)
        assert np.abs(grads - numeric).max() < 1e-8

    def test_mean_partials_are_opposite(self):
        # d KL / d mu_post = -d KL / d mu_prior = (mu_post - mu_prior) / sigma_prior^2
        state = one_param_state(1.3, 0.5, -0.2, 0.7)
        d_mu_post, _, d_mu_prior, _ = state.kl_grads()
        expect = (1.3 - (-0.2)) / 0.7 ** 2
        assert d_mu_post[0] == pytest.approx(expect, abs=1e-12)
        assert d_mu_prior[0] == pytest.approx(-expect, abs=1e-12)


class TestSampleWeights:
    def test_zero_noise_returns_posterior_mean(self):
        state = one_param_state(2.5, 0.4, 0.0, 1.0)
        theta, _ = state.sample_weights(eps=np.zeros(1))
        assert theta[0] == 2.5

    def test_monte_carlo_moments(self):
        state = one_param_state(1.5, 0.8, 0.0, 1.0)
        rng = np.random.default_rng(3)
        draws = np.array([state.sample_weights(rng)[0][0] for _ in range(100_000)])
        se_mean = 0.8 / np.sqrt(draws.size)
        assert abs(draws.mean() - 1.5) < 3 * se_mean
        se_std = 0.8 / np.sqrt(2 * (draws.size - 1))
        assert abs(draws.std(ddof=1) - 0.8) < 3 * se_std

    def test_degenerate_posterior_collapses_to_mean(self):
        phi = np.array([0.9, -30.0, 0.0, softplus_inv(1.0)])
        state = VariationalState(phi, 1, np.zeros(1, dtype=np.intp), 10.0)
        theta, _ = state.sample_weights(np.random.default_rng(4))
        assert abs(theta[0] - 0.9) < 1e-12


class TestViLoss:
    def make(self, sample_count=50.0):
        spec = NetSpec(2, (3,), 2, SOFTMAX)
        model = Model(spec)
        rng = np.random.default_rng(5)
        state = init_variational(model, rng, sample_count, sigma_post_init=0.05)
        return spec, model, state, rng

    def test_fully_masked_batch_is_pure_complexity(self):
        spec, model, state, rng = self.make()
        batch = random_batch(spec, 2, 4, rng, mask_all=True)
        step = vi_loss_and_grads(state, model, batch, rng=rng)
        assert step.loss == pytest.approx(state.kl() / state.sample_count, abs=1e-12)
        assert np.allclose(step.data_grad_mu, 0.0)
        assert np.allclose(step.data_grad_rho, 0.0)

    def test_gradient_blocks_match_finite_differences(self):
        rng = np.random.default_rng(6)
        for report in check_vi_blocks(NetSpec(2, (4,), 3, SOFTMAX), rng, n_coords=80):
            assert report.ok(1e-4), report

    def test_huge_sample_count_reduces_to_data_loss(self):
        spec, model, state, rng = self.make(sample_count=1e12)
        batch = random_batch(spec, 2, 4, rng)
        eps = rng.standard_normal(state.n_params)
        step = vi_loss_and_grads(state, model, batch, eps=eps)
        theta, _ = state.sample_weights(eps=eps)
        model.set_params(theta)
        per_seq, _ = model.forward(batch)
        assert abs(step.loss - float(per_seq.sum())) < 1e-6

    def test_same_noise_gives_identical_step(self):
        spec, model, state, rng = self.make()
        batch = random_batch(spec, 2, 4, rng)
        eps = rng.standard_normal(state.n_params)
        a = vi_loss_and_grads(state, model, batch, eps=eps)
        b = vi_loss_and_grads(state, model, batch, eps=eps)
        assert a.loss == b.loss
        assert np.array_equal(a.grad, b.grad)


class TestInit:
    def test_posterior_scale_and_prior_defaults(self):
        model = Model(NetSpec(2, (3,), 2, SOFTMAX))
        state = init_variational(model, np.random.default_rng(7), 100.0)
        assert np.allclose(state.sigma_post(), 1e-3, atol=1e-12)
        assert state.n_groups == 1
        assert state.mu_prior[0] == 0.0
        assert state.sigma_prior()[0] == pytest.approx(0.1, abs=1e-12)

    def test_per_layer_prior_groups(self):
        model = Model(NetSpec(2, (3, 4), 2, SOFTMAX))
        state = init_variational(model, np.random.default_rng(8), 100.0,
                                 prior="per_layer")
        assert state.n_groups == 3  # two lstm layers plus the output head
        wx0, wh0, b0 = model.layers[0]
        first_layer = wx0.size + wh0.size + b0.size
        assert (state.groups[:first_layer] == 0).all()
        assert (state.groups[-model.w_out.size - model.b_out.size:] == 2).all()

    def test_snapshot_roundtrip(self):
        model = Model(NetSpec(2, (3,), 2, SOFTMAX))
        state = init_variational(model, np.random.default_rng(9), 100.0)
        snap = state.snapshot()
        back = VariationalState.from_snapshot(snap)
        assert np.array_equal(back.phi, state.phi)
        assert back.sample_count == state.sample_count


@given(st.floats(0.05, 20.0))
@settings(max_examples=50, deadline=None)
def test_softplus_inverse_roundtrip(y):
    assert softplus(softplus_inv(y)) == pytest.approx(y, rel=1e-12)


def test_toy_training_drives_data_loss_down_and_kl_to_plateau():
    # 2-parameter toy: data loss 0.5 ||theta - x||^2 with x ~ N(target, 0.1^2);
    # optimise posterior and prior jointly by SGD on the per-sample VI loss
    target = np.array([1.0, -2.0])
    final_kls, first_losses, last_losses = [], [], []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        phi = np.array([0.0, 0.0, softplus_inv(0.3), softplus_inv(0.3),
                        0.0, softplus_inv(0.5)])
        state = VariationalState(phi, 2, np.zeros(2, dtype=np.intp), 50.0)
        kls, data_losses = [], []
        for step in range(1500):
            x = target + 0.1 * rng.standard_normal(2)
            theta, eps = state.sample_weights(rng)
            g = theta - x
            data_losses.append(0.5 * float(g @ g))
            kg_mu, kg_rho, kg_mu_pr, kg_rho_pr = state.kl_grads()
            sig = 1.0 / (1.0 + np.exp(-state.rho_post))
            grad = np.concatenate([
                g + kg_mu / 50.0, g * eps * sig + kg_rho / 50.0,
                kg_mu_pr / 50.0, kg_rho_pr / 50.0])
            state.phi -= 0.05 * grad
            kls.append(state.kl())
        final_kls.append(kls[-1])
        first_losses.append(np.mean(data_losses[:100]))
        last_losses.append(np.mean(data_losses[-100:]))
    assert np.mean(last_losses) < 0.25 * np.mean(first_losses)
    assert np.isfinite(final_kls).all()
    assert np.mean(final_kls) < 200.0  # settles on a finite plateau
