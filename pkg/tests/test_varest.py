import math

import numpy as np
import pytest

from ojainfer import (
    Dataset,
    SeedSpec,
    VarEstConfig,
    batch_variance,
    learning_rate,
    median_of_means,
    oja_run,
    ojavarest,
    plan_schedule,
)
from ojainfer.oja import gaussian_unit
from ojainfer.synth import sample

from conftest import random_unit


class TestPlanSchedule:
    def test_paper_experiment_shape(self):
        m1, m2, batch = plan_schedule(5000, 2000, 0.05, m1_override=3)
        assert (m1, m2, batch) == (3, 9, 185)

    def test_insufficient_data_rejected(self):
        # n = 54 (~ e^4) at d = 2, delta = 1/e: m2 = 4, m1 = ceil(8 ln(2e)) = 14,
        # leaving zero-sample batches.
        assert max(2, math.ceil(math.log(54))) == 4
        assert math.ceil(8.0 * math.log(2.0 * math.e)) == 14
        with pytest.raises(ValueError):
            plan_schedule(54, 2, 1.0 / math.e)

    def test_full_collapse_overrides(self):
        m1, m2, batch = plan_schedule(100, 5, 0.05, m1_override=1, m2_override=1)
        assert (m1, m2, batch) == (1, 1, 100)

    def test_delta_bounds(self):
        with pytest.raises(ValueError):
            plan_schedule(100, 5, 1.5)


class TestBatchVariance:
    def test_zero_spread(self):
        vt = np.array([1.0, 0.0])
        np.testing.assert_array_equal(batch_variance([vt, vt, vt], vt), np.zeros(2))

    def test_single_orthogonal_vector(self):
        vt = np.array([1.0, 0.0])
        v = np.array([0.0, 1.0])
        np.testing.assert_array_equal(batch_variance([v], vt), v**2)

    def test_hand_computation(self):
        vt = np.array([1.0, 0.0])
        vecs = [np.array([0.0, 1.0]), np.array([0.6, 0.8])]
        np.testing.assert_allclose(batch_variance(vecs, vt), [0.0, 0.82], atol=1e-15)

    def test_sign_flip_bit_identical(self):
        rng = SeedSpec(101).rng()
        vt = random_unit(rng, 5)
        vecs = np.array([random_unit(rng, 5) for _ in range(4)])
        base = batch_variance(vecs, vt)
        flipped = vecs.copy()
        flipped[2] = -flipped[2]
        np.testing.assert_array_equal(batch_variance(flipped, vt), base)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            batch_variance([np.array([1.0, 0.0])], np.array([1.0, 0.0, 0.0]))

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            batch_variance([np.array([2.0, 0.0])], np.array([1.0, 0.0]))


class TestMedianOfMeans:
    def test_odd(self):
        assert median_of_means([1, 2, 3, 4, 5]) == 3.0

    def test_even_middle_pair(self):
        assert median_of_means([1, 2, 3, 4]) == 2.5

    def test_singleton(self):
        assert median_of_means([7]) == 7.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            median_of_means([])


class TestOjaVarEst:
    def test_degenerate_data_gives_zero(self):
        e1 = np.array([1.0, 0.0])
        data = Dataset(np.tile(e1, (64, 1)))
        cfg = VarEstConfig(delta=0.25, m1=2, m2=2, seed=SeedSpec(103), init=e1)
        result = ojavarest(data, 0.25, e1, 1.0, cfg)
        np.testing.assert_array_equal(result.gamma, np.zeros(2))
        np.testing.assert_array_equal(result.batch_sigma2, np.zeros((2, 2)))

    def test_schedule_collapse_single_batch(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 200, rng=SeedSpec(104).rng())
        gap = eigen.gap
        cfg = VarEstConfig(delta=0.1, m1=1, m2=1, seed=SeedSpec(105))
        vt = eigen.leading
        result = ojavarest(data, 0.1, vt, gap, cfg)
        eta = learning_rate(200, gap, cfg.alpha)
        u0 = gaussian_unit(SeedSpec(105).child(0).rng(), 3)
        v = oja_run(data.samples, eta, u0).estimate
        resid = v - float(vt @ v) * vt
        np.testing.assert_allclose(result.gamma, resid**2 / (eta * gap), rtol=1e-12)

    def test_scale_identity_and_nonnegativity(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 600, rng=SeedSpec(106).rng())
        cfg = VarEstConfig(delta=0.1, m1=3, m2=2, seed=SeedSpec(107))
        result = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg)
        assert np.all(result.gamma >= 0.0)
        recomputed = np.median(result.batch_sigma2, axis=0) / (result.eta_b * eigen.gap)
        np.testing.assert_array_equal(result.gamma, recomputed)
        np.testing.assert_array_equal(result.batch_scale_sigma2(),
                                      np.median(result.batch_sigma2, axis=0))

    def test_determinism_and_thread_independence(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 600, rng=SeedSpec(108).rng())
        cfg = VarEstConfig(delta=0.1, m1=2, m2=3, seed=SeedSpec(109))
        a = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg)
        b = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg)
        c = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg, threads=4)
        np.testing.assert_array_equal(a.gamma, b.gamma)
        np.testing.assert_array_equal(a.batch_sigma2, b.batch_sigma2)
        np.testing.assert_array_equal(a.gamma, c.gamma)

    def test_remainder_recorded(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 205, rng=SeedSpec(110).rng())
        cfg = VarEstConfig(delta=0.1, m1=2, m2=2, seed=SeedSpec(111))
        result = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg)
        assert result.batch_size == 51
        assert result.samples_unused == 205 - 4 * 51

    def test_gap_must_be_positive(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 100, rng=SeedSpec(112).rng())
        with pytest.raises(ValueError):
            ojavarest(data, 0.1, eigen.leading, 0.0)

    def test_relative_error_shrinks_with_n(self, synth50, asym50):
        # Default schedule: the batch size grows with n, so the batch-level
        # convergence terms of the error shrink; the trend is large enough to
        # resolve with few trials.
        spec, sigma, eigen, root = synth50
        moments, asym = asym50
        vkk = asym.diag()
        top = np.argsort(vkk)[::-1][:5]
        gap = eigen.gap

        def median_max_err(n, seed):
            errs = []
            for t in range(12):
                st = SeedSpec(seed).child(t)
                data = sample(spec, root, n, rng=st.child(0).rng())
                u0 = gaussian_unit(st.child(1).rng(), 50)
                vt = oja_run(data, learning_rate(n, gap, 2.0), u0).estimate
                cfg = VarEstConfig(delta=0.05, seed=st.child(2))
                res = ojavarest(data, 0.05, vt, gap, cfg)
                errs.append(np.max(np.abs(res.gamma[top] - vkk[top]) / vkk[top]))
            return np.median(errs)

        assert median_max_err(40_000, 120) <= median_max_err(10_000, 121)

    def test_csv_rows_shape(self, synth3):
        spec, sigma, eigen, root = synth3
        data = sample(spec, root, 300, rng=SeedSpec(113).rng())
        cfg = VarEstConfig(delta=0.1, m1=2, m2=2, seed=SeedSpec(114))
        result = ojavarest(data, 0.1, eigen.leading, eigen.gap, cfg)
        rows = result.csv_rows()
        assert len(rows) == 3
        assert set(rows[0]) == {"coordinate", "gamma", "sigma2_group1", "sigma2_group2"}
