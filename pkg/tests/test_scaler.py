import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autocurriculum.scaler import RewardScaler, ScalerConfig, nearest_rank


def make_scaler(capacity=1000, q_lo=20.0, q_hi=80.0, seed=0):
    return RewardScaler(ScalerConfig(capacity, q_lo, q_hi),
                        np.random.default_rng(seed))


class TestObserve:
    def test_fill_phase_keeps_everything(self):
        s = make_scaler(capacity=3)
        for v in (1.0, 2.0, 3.0):
            s.observe(v)
        assert sorted(s.reservoir) == [1.0, 2.0, 3.0]
        assert s.seen_count == 3

    def test_non_finite_rejected(self):
        s = make_scaler()
        with pytest.raises(ValueError):
            s.observe(float("nan"))
        with pytest.raises(ValueError):
            s.observe(float("inf"))

    def test_reservoir_size_capped(self):
        s = make_scaler(capacity=10)
        for v in range(100):
            s.observe(float(v))
        assert len(s.reservoir) == 10
        assert s.seen_count == 100

    def test_reservoir_is_representative(self):
        # 20th/80th percentiles of a uniform(0,1) stream land near 0.2/0.8
        q_lo_err, q_hi_err = [], []
        for seed in range(20):
            s = make_scaler(capacity=1000, seed=seed)
            rng = np.random.default_rng(500 + seed)
            for v in rng.random(100_000):
                s.observe(float(v))
            q_lo_err.append(nearest_rank(s._sorted, 20.0) - 0.2)
            q_hi_err.append(nearest_rank(s._sorted, 80.0) - 0.8)
        assert abs(np.mean(q_lo_err)) < 0.05
        assert abs(np.mean(q_hi_err)) < 0.05

    def test_sorted_mirror_stays_consistent(self):
        s = make_scaler(capacity=16, seed=3)
        rng = np.random.default_rng(9)
        for v in rng.normal(size=2000):
            s.observe(float(v))
            assert sorted(s.reservoir) == s._sorted


class TestScale:
    def test_hundred_element_reservoir_midpoint(self):
        # nearest-rank on {1..100}: q_lo = 20, q_hi = 80, so 50 maps to 0
        s = make_scaler()
        for v in range(1, 101):
            s.observe(float(v))
        assert s.scale(50.0) == pytest.approx(0.0, abs=1e-12)

    def test_clipping_branches(self):
        s = make_scaler()
        for v in range(1, 101):
            s.observe(float(v))
        assert s.scale(200.0) == 1.0
        assert s.scale(-5.0) == -1.0

    def test_degenerate_interval(self):
        s = make_scaler(capacity=3)
        for _ in range(3):
            s.observe(7.0)
        assert s.scale(7.0) == 0.0
        assert s.scale(7.1) == 1.0
        assert s.scale(6.9) == -1.0

    def test_cold_start_is_neutral(self):
        s = make_scaler()
        assert s.scale(123.0) == 0.0
        s.observe(5.0)
        assert s.scale(123.0) == 0.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200),
           st.floats(-1e6, 1e6))
    @settings(max_examples=100, deadline=None)
    def test_output_in_unit_interval(self, values, raw):
        s = make_scaler(capacity=200)
        for v in values:
            s.observe(v)
        assert -1.0 <= s.scale(raw) <= 1.0

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=100),
           st.floats(-150, 150), st.floats(0, 50))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_raw(self, values, raw, delta):
        s = make_scaler(capacity=100)
        for v in values:
            s.observe(v)
        assert s.scale(raw + delta) >= s.scale(raw)

    def test_permutation_invariance(self):
        # scale sees the reservoir only through its sorted contents
        rng = np.random.default_rng(11)
        values = list(rng.normal(size=50))
        s1 = make_scaler(capacity=50)
        s2 = make_scaler(capacity=50)
        for v in values:
            s1.observe(v)
        for v in reversed(values):
            s2.observe(v)
        probes = rng.normal(size=100)
        for p in probes:
            assert s1.scale(float(p)) == pytest.approx(s2.scale(float(p)), abs=1e-15)

    def test_clip_fractions_converge_to_quantile_levels(self):
        s = make_scaler(capacity=1000, seed=21)
        rng = np.random.default_rng(42)
        for v in rng.normal(size=5000):
            s.observe(float(v))
        draws = rng.normal(size=10_000)
        lo_frac = np.mean([s.scale(float(v)) == -1.0 for v in draws])
        hi_frac = np.mean([s.scale(float(v)) == 1.0 for v in draws])
        assert abs(lo_frac - 0.20) < 0.03
        assert abs(hi_frac - 0.20) < 0.03


def test_nearest_rank_definition():
    values = list(range(1, 101))
    assert nearest_rank(values, 20.0) == 20
    assert nearest_rank(values, 80.0) == 80
    assert nearest_rank(values, 0.0) == 1     # clamped to the smallest element
    assert nearest_rank(values, 100.0) == 100
    assert nearest_rank([5.0], 50.0) == 5.0


def test_snapshot_roundtrip():
    s = make_scaler(capacity=8)
    rng = np.random.default_rng(2)
    for v in rng.normal(size=100):
        s.observe(float(v))
    snap = s.snapshot()
    s2 = make_scaler(capacity=8)
    s2.restore(snap)
    assert s2.reservoir == s.reservoir
    assert s2.seen_count == s.seen_count
    assert s2.scale(0.3) == s.scale(0.3)
