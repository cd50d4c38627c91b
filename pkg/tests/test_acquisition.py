import numpy as np
import pytest

from bope.acquisition import (
    AcquisitionConfig,
    EUBO,
    ExactUtility,
    IEUBO,
    QneiuuEvaluator,
    eubo_observed,
    expected_max_gaussian,
    ieubo,
    optimize_qneiuu,
    qneiuu,
    select_pair,
)
from bope.errors import ConfigError, StateError
from bope.gp import ObservationSet
from bope.problems import UtilityFunction, get_utility
from bope.utility_ensemble import ComparisonSet

from conftest import ConstantUtility, RandomLinearUtility, make_fixed_gp


def mc_expected_max(m1, s1, m2, s2, n=10_000_000, seed=0):
    rng = np.random.default_rng(seed)
    x = m1 + s1 * rng.standard_normal(n)
    y = m2 + s2 * rng.standard_normal(n)
    return float(np.maximum(x, y).mean())


class TestExpectedMaxGaussian:
    def test_standard_case_against_monte_carlo(self):
        # E[max of two standard normals] = sqrt(2)*phi(0) = 1/sqrt(pi)
        val = expected_max_gaussian(0, 1, 0, 1)
        assert val == pytest.approx(1 / np.sqrt(np.pi), rel=1e-12)
        assert val == pytest.approx(mc_expected_max(0, 1, 0, 1), abs=1e-3)

    def test_degenerate_returns_max_of_means(self):
        assert expected_max_gaussian(5, 0, 0, 0) == 5.0
        assert expected_max_gaussian(-2, 0, 7, 0) == 7.0

    def test_dominant_mean_limit(self):
        assert expected_max_gaussian(10, 1e-3, 0, 1e-3) == pytest.approx(10, abs=1e-9)

    def test_symmetry(self, rng):
        for _ in range(1000):
            m1, m2 = rng.normal(size=2) * 3
            s1, s2 = rng.random(2) * 2
            a = expected_max_gaussian(m1, s1, m2, s2)
            b = expected_max_gaussian(m2, s2, m1, s1)
            assert a == pytest.approx(b, rel=1e-12)

    def test_dominates_max_of_means(self, rng):
        m1, m2 = rng.normal(size=1000), rng.normal(size=1000)
        s1, s2 = rng.random(1000), rng.random(1000)
        vals = expected_max_gaussian(m1, s1, m2, s2)
        assert np.all(vals >= np.maximum(m1, m2) - 1e-12)

    def test_random_cases_against_monte_carlo(self, rng):
        for seed in range(5):
            m1, m2 = rng.normal(size=2) * 2
            s1, s2 = rng.random(2) * 1.5
            assert expected_max_gaussian(m1, s1, m2, s2) == pytest.approx(
                mc_expected_max(m1, s1, m2, s2, n=2_000_000, seed=seed), abs=3e-3
            )


class TestPairCriteria:
    def test_ieubo_zero_variance_is_max_of_means(self):
        util = ExactUtility(get_utility("linear"))
        y1, y2 = np.array([1.0, 1.0]), np.array([0.5, 0.2])
        assert ieubo(y1, y2, util) == pytest.approx(10.0)

    def test_ieubo_identical_outputs_closed_form(self):
        util = RandomLinearUtility(6, 2, seed=3)
        y = np.array([2.0, 3.0])
        mean, var = util.belief_batch(y[None, :])
        expected = mean[0] + np.sqrt(var[0]) / np.sqrt(np.pi)
        assert ieubo(y, y, util) == pytest.approx(expected, rel=1e-12)

    def test_ieubo_exceeds_mean_when_uncertain(self):
        util = RandomLinearUtility(6, 2, seed=4)
        y = np.array([1.0, 4.0])
        mean, _ = util.belief_batch(y[None, :])
        assert ieubo(y, y, util) > mean[0]

    def test_eubo_single_member_is_max(self):
        util = RandomLinearUtility(1, 2, seed=5)
        y1, y2 = np.array([1.0, 2.0]), np.array([3.0, 0.5])
        s = util.member_scores(np.vstack([y1, y2]))
        assert eubo_observed(y1, y2, util) == pytest.approx(max(s[0, 0], s[0, 1]))

    def test_eubo_identical_outputs_is_ensemble_mean(self):
        util = RandomLinearUtility(5, 2, seed=6)
        y = np.array([2.5, 1.5])
        mean, _ = util.belief_batch(y[None, :])
        assert eubo_observed(y, y, util) == pytest.approx(mean[0], rel=1e-12)

    def test_eubo_jensen_bound(self, rng):
        util = RandomLinearUtility(7, 2, seed=7)
        for _ in range(50):
            y1, y2 = rng.random(2) * 5, rng.random(2) * 5
            means, _ = util.belief_batch(np.vstack([y1, y2]))
            assert eubo_observed(y1, y2, util) >= max(means) - 1e-12


def _toy_gp_and_data(rng, n=6, d=2, k=2, noise=1e-8):
    X = rng.random((n, d))
    Y = np.column_stack([np.sin(3 * X.sum(axis=1)), X[:, 0] ** 2 + 0.5 * X[:, 1]])[:, :k]
    bounds = np.tile([0.0, 1.0], (d, 1))
    gp = make_fixed_gp(X, Y, bounds, [0.4] * d, 1.0, noise)
    return gp, ObservationSet.from_arrays(X, Y), bounds


class TestQneiuu:
    def test_constant_utility_gives_zero(self, rng):
        gp, data, _ = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig(n_posterior_samples=16)
        val = qneiuu(rng.random(2), gp, ConstantUtility(3.0), data, cfg, seed=1)
        assert val == 0.0

    def test_evaluated_design_with_tiny_noise_has_no_value(self, rng):
        gp, data, _ = _toy_gp_and_data(rng, noise=1e-10)
        cfg = AcquisitionConfig(n_posterior_samples=32)
        util = RandomLinearUtility(4, 2, seed=2)
        val = qneiuu(data.X[3], gp, util, data, cfg, seed=3)
        assert val == pytest.approx(0.0, abs=1e-3)

    def test_nonnegative(self, rng):
        gp, data, _ = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig(n_posterior_samples=8)
        util = RandomLinearUtility(3, 2, seed=8)
        for _ in range(20):
            assert qneiuu(rng.random(2), gp, util, data, cfg, seed=4) >= 0.0

    def test_brute_force_recompute_from_cached_samples(self, rng):
        gp, data, _ = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig(n_posterior_samples=16)
        util = RandomLinearUtility(5, 2, seed=9)
        ev = QneiuuEvaluator(gp, util, data, cfg, seed=10)
        x = rng.random(2)
        value = ev(x)
        f_cand = ev.last_candidate_samples  # (N, 1, k)
        F_obs = ev.sampler.observed_samples  # (N, n, k)
        total = 0.0
        M = util.size
        N = cfg.n_posterior_samples
        for j in range(M):
            for s in range(N):
                cand_u = util.member_scores(f_cand[s])[j, 0]
                inc_u = util.member_scores(F_obs[s]).max(axis=1)[j]
                total += max(cand_u - inc_u, 0.0)
        assert value == pytest.approx(total / (M * N), abs=1e-12)

    def test_observation_order_invariance(self, rng):
        gp_a, data_a, bounds = _toy_gp_and_data(rng)
        perm = rng.permutation(data_a.n)
        data_b = ObservationSet.from_arrays(data_a.X[perm], data_a.Y[perm])
        gp_b = make_fixed_gp(data_b.X, data_b.Y, bounds, [0.4, 0.4], 1.0, 1e-8)
        cfg = AcquisitionConfig(n_posterior_samples=12)
        util = RandomLinearUtility(4, 2, seed=11)
        for trial in range(20):
            x = rng.random(2)
            va = qneiuu(x, gp_a, util, data_a, cfg, seed=42)
            vb = qneiuu(x, gp_b, util, data_b, cfg, seed=42)
            assert va == pytest.approx(vb, rel=1e-9, abs=1e-12)

    def test_conditional_sampler_matches_joint_cholesky(self, rng):
        gp, data, _ = _toy_gp_and_data(rng, noise=1e-4)
        from bope.acquisition import JointSampler

        sampler = JointSampler(gp, data, 16, seed=13)
        x = rng.random(2)
        f_cand = sampler.candidate_samples(x[None, :])  # (N, 1, k)
        union = np.vstack([sampler.S_orig, x[None, :]])
        joint = gp.sample_posterior(union, 16, seed=0, base_z=sampler.union_base_z())
        assert np.allclose(joint[:, :-1, :], sampler.observed_samples, atol=1e-9)
        assert np.allclose(joint[:, -1, :], f_cand[:, 0, :], atol=1e-8)

    def test_q_must_match_config(self, rng):
        gp, data, _ = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig()
        with pytest.raises(Exception):
            qneiuu(rng.random((2, 2)), gp, RandomLinearUtility(2, 2, 1), data, cfg, 0)


class TestOptimizeQneiuu:
    def test_deterministic_given_seed(self, rng):
        gp, data, bounds = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig(n_posterior_samples=8, raw_samples=32, restarts=4)
        util = RandomLinearUtility(3, 2, seed=14)
        r1 = optimize_qneiuu(gp, util, data, bounds, cfg, seed=7)
        r2 = optimize_qneiuu(gp, util, data, bounds, cfg, seed=7)
        assert np.array_equal(r1.x, r2.x) and r1.value == r2.value

    def test_result_beats_random_probes_and_stays_in_bounds(self, rng):
        gp, data, bounds = _toy_gp_and_data(rng)
        cfg = AcquisitionConfig(n_posterior_samples=8, raw_samples=64, restarts=6)
        util = RandomLinearUtility(3, 2, seed=15)
        res = optimize_qneiuu(gp, util, data, bounds, cfg, seed=8)
        assert np.all(res.x >= bounds[:, 0]) and np.all(res.x <= bounds[:, 1])
        ev = QneiuuEvaluator(gp, util, data, cfg, seed=8)
        # same seed stream as the optimizer's evaluator is not guaranteed;
        # compare on a fresh evaluator with a common seed for all probes
        probes = ev.batch(rng.random((64, 2)))
        assert ev(res.x) >= probes.max() - 1e-9

    def test_one_dimensional_dense_grid_argmax(self, rng):
        X = np.array([[0.1], [0.5], [0.9]])
        Y = np.array([[0.2], [1.0], [0.4]])
        bounds = np.array([[0.0, 1.0]])
        gp = make_fixed_gp(X, Y, bounds, [0.15], 1.0, 1e-6)
        data = ObservationSet.from_arrays(X, Y)
        util = ExactUtility(
            UtilityFunction(name="id", num_objectives=1, batch_evaluator=lambda Y: Y[:, 0])
        )
        cfg = AcquisitionConfig(n_posterior_samples=64, raw_samples=128, restarts=8)
        res = optimize_qneiuu(gp, util, data, bounds, cfg, seed=21)
        # rebuild the evaluator on the optimizer's own base-draw stream so
        # the dense grid scans the same fixed-sample acquisition surface
        _, sample_seed = np.random.SeedSequence(21).spawn(2)
        ev = QneiuuEvaluator(gp, util, data, cfg, np.random.default_rng(sample_seed))
        grid = np.linspace(0, 1, 2000)[:, None]
        vals = ev.batch(grid)
        x_grid = grid[int(np.argmax(vals)), 0]
        assert abs(res.x[0] - x_grid) < 1e-2
        assert res.value >= vals.max() - 1e-9


class TestSelectPair:
    def _make(self, rng, n=8, k=2):
        X = rng.random((n, 2))
        Y = rng.random((n, k)) * 4
        return ObservationSet.from_arrays(X, Y)

    def test_two_observations_returns_the_only_pair(self, rng):
        data = self._make(rng, n=2)
        util = RandomLinearUtility(3, 2, seed=16)
        choice = select_pair(data, util, ComparisonSet(2), AcquisitionConfig())
        assert (choice.i, choice.j) == (0, 1)

    @pytest.mark.parametrize("criterion", [IEUBO, EUBO])
    def test_matches_brute_force(self, rng, criterion):
        for trial in range(20):
            data = self._make(rng, n=int(rng.integers(3, 12)))
            util = RandomLinearUtility(4, 2, seed=trial)
            cfg = AcquisitionConfig(pair_criterion=criterion, exclude_asked_pairs=False)
            choice = select_pair(data, util, ComparisonSet(2), cfg)
            crit = ieubo if criterion == IEUBO else eubo_observed
            best_val, best_pair = -np.inf, None
            for i in range(data.n):
                for j in range(i + 1, data.n):
                    if np.array_equal(data.Y[i], data.Y[j]):
                        continue
                    v = crit(data.Y[i], data.Y[j], util)
                    if v > best_val:
                        best_val, best_pair = v, (i, j)
            assert (choice.i, choice.j) == best_pair
            assert choice.value == pytest.approx(best_val, rel=1e-12)

    def test_excludes_asked_pairs(self, rng):
        data = self._make(rng, n=4)
        util = RandomLinearUtility(3, 2, seed=17)
        cfg = AcquisitionConfig()
        history = ComparisonSet(2)
        first = select_pair(data, util, history, cfg)
        history.append(first.y1, first.y2, 1)
        second = select_pair(data, util, history, cfg)
        assert {(first.i, first.j)} != {(second.i, second.j)}

    def test_all_pairs_asked_falls_back_with_flag(self, rng):
        data = self._make(rng, n=3)
        util = RandomLinearUtility(3, 2, seed=18)
        cfg = AcquisitionConfig()
        history = ComparisonSet(2)
        for i in range(3):
            for j in range(i + 1, 3):
                history.append(data.Y[i], data.Y[j], 1)
        choice = select_pair(data, util, history, cfg)
        assert choice.fallback_used

    def test_tie_break_is_lexicographic(self, rng):
        data = self._make(rng, n=5)
        util = ConstantUtility(1.0)
        cfg = AcquisitionConfig(exclude_asked_pairs=False)
        choice = select_pair(data, util, ComparisonSet(2), cfg)
        assert (choice.i, choice.j) == (0, 1)

    def test_single_observation_is_state_error(self, rng):
        data = self._make(rng, n=1)
        with pytest.raises(StateError):
            select_pair(data, ConstantUtility(), ComparisonSet(2), AcquisitionConfig())


def test_config_validation():
    with pytest.raises(ConfigError):
        AcquisitionConfig(restarts=300, raw_samples=256)
    with pytest.raises(ConfigError):
        AcquisitionConfig(q=2)
    with pytest.raises(ConfigError):
        AcquisitionConfig(pair_criterion="nope")
