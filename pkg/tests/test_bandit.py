import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autocurriculum.bandit import Bandit, BanditConfig, softmax
from helpers import exp3s_brute_force, softmax_direct


def make_bandit(n, eta=1e-3, beta=0.0, epsilon=0.05, variant="exp3s"):
    return Bandit(BanditConfig(n_arms=n, eta=eta, beta=beta,
                               epsilon=epsilon, variant=variant))


class TestPolicy:
    def test_uniform_weights_give_uniform_policy(self):
        b = make_bandit(10, epsilon=0.05)
        assert np.allclose(b.policy(), 0.1, atol=1e-15)

    def test_softmax_of_log_weights(self):
        b = make_bandit(2, epsilon=0.0)
        b.weights = np.array([np.log(2.0), 0.0])
        assert np.allclose(b.policy(), [2 / 3, 1 / 3], atol=1e-12)

    def test_epsilon_mixing(self):
        # hand evaluation of (1 - eps) * softmax + eps / N
        b = make_bandit(2, epsilon=0.05)
        b.weights = np.array([np.log(2.0), 0.0])
        expect = np.array([0.95 * 2 / 3 + 0.025, 0.95 * 1 / 3 + 0.025])
        assert np.allclose(b.policy(), expect, atol=1e-12)

    def test_policy_sums_to_one_and_respects_floor(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            b = make_bandit(n, epsilon=0.05)
            b.weights = rng.normal(0, 10, size=n)
            pi = b.policy()
            assert abs(pi.sum() - 1.0) < 1e-12
            assert (pi >= 0.05 / n - 1e-15).all()

    @given(st.integers(2, 8), st.floats(-20, 20), st.data())
    @settings(max_examples=60, deadline=None)
    def test_shift_invariance(self, n, const, data):
        w = np.array(data.draw(st.lists(
            st.floats(-30, 30, allow_nan=False), min_size=n, max_size=n)))
        b = make_bandit(n)
        b.weights = w
        pi1 = b.policy().copy()
        b.weights = w + const
        assert np.allclose(pi1, b.policy(), atol=1e-12)


class TestSampleArm:
    def test_single_arm_always_sampled(self):
        b = make_bandit(1)
        rng = np.random.default_rng(0)
        assert all(b.sample_arm(rng) == 0 for _ in range(50))

    def test_uniform_frequencies_within_three_sigma(self):
        n, draws = 10, 100_000
        b = make_bandit(n)
        rng = np.random.default_rng(123)
        counts = np.bincount([b.sample_arm(rng) for _ in range(draws)], minlength=n)
        p = 1.0 / n
        sigma = np.sqrt(p * (1 - p) / draws)
        assert np.abs(counts / draws - p).max() < 3 * sigma

    def test_skewed_policy_frequency(self):
        # policy ~ (1 - eps + eps/2, eps/2) = (0.975, 0.025)
        b = make_bandit(2, epsilon=0.05)
        b.weights = np.array([60.0, 0.0])
        rng = np.random.default_rng(7)
        draws = 100_000
        freq = np.mean([b.sample_arm(rng) == 0 for _ in range(draws)])
        sigma = np.sqrt(0.975 * 0.025 / draws)
        assert abs(freq - 0.975) < 3 * sigma


class TestUpdate:
    def test_exp3_importance_weighted_step(self):
        b = make_bandit(2, eta=1e-3, epsilon=0.0, variant="exp3")
        b.policy()
        b.update(0, 1.0)  # r_tilde = 1 / 0.5 = 2
        assert np.allclose(b.weights, [0.002, 0.0], atol=1e-15)

    def test_reward_range_enforced(self):
        b = make_bandit(3)
        b.policy()
        with pytest.raises(ValueError):
            b.update(0, 1.5)
        with pytest.raises(ValueError):
            b.update(0, float("nan"))

    def test_arm_range_enforced(self):
        b = make_bandit(3)
        with pytest.raises(ValueError):
            b.update(3, 0.5)

    def test_round_counter_advances(self):
        b = make_bandit(2)
        b.policy()
        assert b.t == 1
        b.update(0, 0.1)
        assert b.t == 2

    def test_fixed_share_first_round_shares_everything(self):
        # with alpha = 1/t = 1 the self term vanishes: each new weight is the
        # log-average of the other arms' boosted terms (here, N=2: a swap),
        # then the common normalising shift
        b = make_bandit(2, eta=0.5, epsilon=0.05)
        b.weights = np.array([0.3, -0.2])
        pi = b.policy()
        v = b.weights + 0.5 * np.array([1.0 / pi[0], 0.0])
        b.update(0, 1.0)
        swapped = v[::-1]
        expect = swapped - np.log(np.exp(swapped).sum())
        assert np.allclose(b.weights, expect, atol=1e-12)

    def test_fixed_share_three_arms_against_brute_force(self):
        b = make_bandit(3, eta=1e-3, epsilon=0.05)
        b.t = 2
        pi = b.policy()
        expect = exp3s_brute_force(b.weights.copy(), pi, 1, -1.0, 1e-3, 0.0, 2)
        b.update(1, -1.0)
        assert np.abs(b.weights - expect).max() < 1e-10

    def test_single_arm_fixed_share_stays_finite(self):
        b = make_bandit(1, eta=1e-2)
        rng = np.random.default_rng(0)
        for _ in range(100):
            arm = b.sample_arm(rng)
            b.update(arm, float(rng.uniform(-1, 1)))
            assert np.isfinite(b.weights).all()
        assert b.policy()[0] == 1.0

    def test_randomized_states_match_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            cfg = BanditConfig(n_arms=n, eta=float(rng.uniform(1e-4, 0.1)),
                               beta=float(rng.choice([0.0, 0.1])), epsilon=0.05)
            b = Bandit(cfg)
            b.t = int(rng.integers(1, 10 ** 6))
            b.weights = rng.normal(0, 3, size=n)
            pi = b.policy()
            arm = int(rng.integers(0, n))
            r = float(rng.uniform(-1, 1))
            expect = exp3s_brute_force(b.weights.copy(), pi, arm, r,
                                       cfg.eta, cfg.beta, b.t)
            b.update(arm, r)
            assert np.abs(b.weights - expect).max() < 1e-10


def test_softmax_matches_direct_evaluation():
    rng = np.random.default_rng(3)
    for _ in range(100):
        w = rng.normal(0, 5, size=int(rng.integers(1, 10)))
        assert np.allclose(softmax(w), softmax_direct(w), atol=1e-12)


def test_snapshot_roundtrip():
    b = make_bandit(4)
    rng = np.random.default_rng(5)
    for _ in range(20):
        b.update(b.sample_arm(rng), float(rng.uniform(-1, 1)))
    snap = b.snapshot()
    b2 = make_bandit(4)
    b2.restore(snap)
    assert np.array_equal(b2.weights, b.weights)
    assert b2.t == b.t


@pytest.mark.slow
def test_weights_bounded_over_a_million_rounds():
    rng = np.random.default_rng(7)
    b = make_bandit(5, eta=1e-2, epsilon=0.05)
    lo = hi = 0.0
    for _ in range(1_000_000):
        arm = b.sample_arm(rng)
        b.update(arm, float(rng.uniform(-1, 1)))
        w = b.weights
        lo = min(lo, w.min())
        hi = max(hi, w.max())
    assert -50.0 < lo and hi < 50.0
