"""Context-tree weighting recursion and the piecewise-linear turbo equalizers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp
from sklearn.base import clone

from ctw_turbo.adaptive import AdaptiveLinearEqualizer, FilterBank, first_iteration_lms, quantize, scale_training_symbols
from ctw_turbo.base import TurboBlock
from ctw_turbo.ctw import (
    ContextTree,
    CTWTurboEqualizer,
    LMSTurboEqualizer,
    PiecewiseLinearTurboEqualizer,
    _carry_over,
    ctw_predict,
    ctw_update,
    ctw_weights,
    run_ctw_sequence,
)
from ctw_turbo.partitioning import node_path
from ctw_turbo.turbo import run_frame
from ctw_turbo.verification import explicit_mixture, partition_predictions, perfect_feedback_run


def make_tree(depth, n=3, nf=2, c=0.5, mu=0.05):
    return ContextTree(depth, FilterBank(2 ** (depth + 1) - 1, n, nf, mu=mu), c)


class TestWeights:
    def test_depth_zero(self):
        np.testing.assert_array_equal(ctw_weights(make_tree(0), [1]), [1.0])

    def test_depth_one_uniform(self):
        np.testing.assert_allclose(ctw_weights(make_tree(1), [2, 1]), [0.5, 0.5])

    def test_depth_two_at_start(self):
        # leaf, middle, root
        np.testing.assert_allclose(ctw_weights(make_tree(2), [5, 2, 1]), [0.25, 0.25, 0.5])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 3), st.integers(0, 2**32 - 1), st.integers(1, 60))
    def test_normalized_after_updates(self, depth, seed, steps):
        r = np.random.default_rng(seed)
        tree = make_tree(depth)
        leaves = list(tree.paths().values())
        for _ in range(steps):
            path = leaves[r.integers(len(leaves))]
            y, xb = r.standard_normal(3), r.standard_normal(2)
            pred = ctw_predict(tree, path, y, xb)
            assert pred.betas.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(pred.betas > 0)
            ctw_update(tree, path, r.choice([-1.0, 1.0]) * 3, pred.node_estimates, y, xb)
        for path in leaves:
            assert ctw_weights(tree, path).sum() == pytest.approx(1.0, abs=1e-12)
        leaves_ids = np.arange(2**depth, 2 ** (depth + 1))
        np.testing.assert_array_equal(tree.log_a[leaves_ids], tree.log_b[leaves_ids])
        assert np.all(np.isfinite(tree.log_a[1:]))


class TestUpdate:
    def test_zero_error_keeps_accumulators(self):
        tree = make_tree(2)
        path = [6, 3, 1]
        ctw_update(tree, path, 0.0, np.zeros(3), np.zeros(3), np.zeros(2))
        np.testing.assert_allclose(tree.log_b, 0.0)
        np.testing.assert_allclose(tree.log_a, 0.0, atol=1e-15)

    def test_one_step_depth_one(self):
        tree = make_tree(1)
        e_leaf, e_root = 0.8, 0.3
        ctw_update(tree, [3, 1], 1.0, np.array([1 - e_leaf, 1 - e_root]), np.zeros(3), np.zeros(2))
        assert math.exp(tree.log_b[3]) == pytest.approx(math.exp(-0.5 * e_leaf**2))
        assert tree.log_a[3] == tree.log_b[3]
        a_root = 0.5 * 1.0 * math.exp(tree.log_a[3]) + 0.5 * math.exp(-0.5 * e_root**2)
        assert math.exp(tree.log_a[1]) == pytest.approx(a_root)

    def test_touches_exactly_the_path(self):
        tree = make_tree(3)
        path = node_path(13, 3)
        before = tree.filters.W.copy()
        ctw_update(tree, path, 1.0, np.zeros(4), np.ones(3), np.ones(2))
        changed = np.flatnonzero(np.any(tree.filters.W != before, axis=1))
        assert sorted(changed) == sorted(path)
        assert tree.filters.n_updates == 4

    def test_no_underflow_over_long_runs(self):
        tree = make_tree(2)
        for _ in range(5000):
            ctw_update(tree, [4, 2, 1], 1.0, np.full(3, -1.0), np.zeros(3), np.zeros(2))
        assert np.all(np.isfinite(tree.log_a[1:]))
        assert ctw_weights(tree, [4, 2, 1]).sum() == pytest.approx(1.0)

    def test_root_accumulator_is_partition_sum(self):
        # A_root = sum_P 2**-C(P) exp(-c L_P)
        run = perfect_feedback_run(depth=2, n=200, seed=1)
        partitions, bits, preds = partition_predictions(run)
        losses = np.sum(np.abs(preds - run.truth) ** 2, axis=1)
        expected = logsumexp(-bits * math.log(2) - run.c * losses)
        # replay to recover the final root accumulator
        tree = make_tree(2, n=15, nf=19, mu=1e-2)
        tree.filters.W[:] = 0
        for t, leaf in enumerate(run.leaves):
            path = node_path(int(leaf), 2)
            ctw_update(tree, path, run.truth[t], run.trace.node_estimates[t], run.y_windows[t], run.xbar_windows[t])
        assert tree.log_a[1] == pytest.approx(expected, abs=1e-9)
        assert len(partitions) == 5


class TestSequence:
    def test_mixture_equivalence(self):
        run = perfect_feedback_run(depth=2, n=500, seed=0)
        assert np.max(np.abs(run.trace.estimates - explicit_mixture(run))) <= 1e-9

    @pytest.mark.parametrize("depth", [0, 1, 3])
    def test_mixture_equivalence_other_depths(self, depth):
        run = perfect_feedback_run(depth=depth, n=300, seed=2)
        assert np.max(np.abs(run.trace.estimates - explicit_mixture(run))) <= 1e-9

    def test_d_plus_one_updates_per_sample(self):
        tree = make_tree(2)
        r = np.random.default_rng(0)
        trace = run_ctw_sequence(tree, r.standard_normal((50, 3)), r.standard_normal((50, 2)), r.integers(4, 8, 50))
        np.testing.assert_array_equal(trace.updates, 3)
        assert tree.leaf_lookups == 50

    def test_decision_directed_reference(self):
        # with a DD reference, the error at each node is Q(xhat_ctw) - xhat_node
        tree = make_tree(1)
        tree.filters.W[1:] = [[1.0, 0, 0], [0.2, 0, 0], [0.0, 0, 0]]
        y, xb = np.array([0.3, 0.0, 0.0]), np.zeros(2)
        pred = ctw_predict(tree, [2, 1], y, xb)
        errors = ctw_update(tree, [2, 1], quantize(pred.estimate), pred.node_estimates, y, xb)
        np.testing.assert_allclose(errors, quantize(pred.estimate) - pred.node_estimates)

    def test_record_combined_filters(self):
        tree = make_tree(1)
        r = np.random.default_rng(0)
        trace = run_ctw_sequence(tree, r.standard_normal((10, 3)), r.standard_normal((10, 2)), [2, 3] * 5, record=True)
        assert trace.combined_w.shape == (10, 3)

    def test_depth_mismatch(self):
        with pytest.raises(ValueError):
            ContextTree(2, FilterBank(3, 2, 1))


class TestCarryOver:
    def test_nearest_previous_centroid(self):
        bank = FilterBank(3, 2, 1)
        prev = (np.array([1, 2]), np.array([[0.0], [1.0]]), np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([[5.0], [6.0]]))
        _carry_over(bank, {1: np.array([0.9]), 2: np.array([0.2]), 3: np.array([0.6])}, prev)
        np.testing.assert_array_equal(bank.W[1:], [[2, 2], [1, 1], [2, 2]])
        np.testing.assert_array_equal(bank.F[1:, 0], [6, 5, 6])


class TestTurboEqualizers:
    def test_depth_zero_ctw_equals_lms(self, small_frame):
        a = run_frame(small_frame, CTWTurboEqualizer(depth=0), n_iter=3)
        b = run_frame(small_frame, LMSTurboEqualizer(), n_iter=3)
        for ha, hb in zip(a.receiver.history_, b.receiver.history_):
            np.testing.assert_array_equal(ha["estimates"], hb["estimates"])

    def test_one_region_equals_lms(self, small_frame):
        a = run_frame(small_frame, PiecewiseLinearTurboEqualizer(n_regions=1), n_iter=2)
        b = run_frame(small_frame, LMSTurboEqualizer(), n_iter=2)
        np.testing.assert_array_equal(a.receiver.history_[-1]["estimates"], b.receiver.history_[-1]["estimates"])

    def test_lms_second_iteration_reference(self, small_frame, priors):
        # independent loop: scaled training, then decision-directed with the feedback filter
        f = small_frame
        eq = LMSTurboEqualizer().partial_fit(f.y, f.training)
        eq.partial_fit(f.y, f.training, priors)
        block = TurboBlock(f.y, f.training, priors, 9, 5, 5)
        _, w1, _ = first_iteration_lms(block.y_windows, f.training, 1e-3)
        ref = AdaptiveLinearEqualizer(15, 19, mu=1e-3, w=w1)
        centroid = block.q_windows[block.n_train :].mean(axis=0)
        for t in range(block.n_train):
            xs = scale_training_symbols(block.train_windows[t], centroid, center=block.center)
            ref.step(f.training[t], block.y_windows[t], xs)
        out = []
        for t in range(block.n_train, block.n_total):
            est = ref.predict(block.y_windows[t], block.xbar_windows[t])
            out.append(est)
            ref.lms_step(quantize(est) - est, block.y_windows[t], block.xbar_windows[t])
        np.testing.assert_allclose(eq.estimates_, out, atol=1e-12)

    def test_ctw_attributes(self, small_frame, priors):
        f = small_frame
        eq = CTWTurboEqualizer(depth=2, record=True).partial_fit(f.y, f.training)
        assert eq.iteration_ == 1 and eq.estimates_.shape == (1024,)
        eq.partial_fit(f.y, f.training, priors)
        np.testing.assert_array_equal(eq.updates_per_sample_, 3)
        assert eq.level_weights_.shape == (1024, 3)
        np.testing.assert_allclose(eq.level_weights_.sum(axis=1), 1.0, atol=1e-12)
        assert len(eq.tree_state_) == 7
        for node in eq.tree_state_[3:]:
            assert node["log_a"] == node["log_b"]
        assert eq.combined_weights_.shape == (1024, 15)
        assert set(np.unique(eq.regions_)) <= {4, 5, 6, 7}
        assert eq.tree_.leaf_lookups == 1024

    def test_third_iteration_carries_filters(self, small_frame, priors):
        f = small_frame
        eq = CTWTurboEqualizer(depth=1).partial_fit(f.y, f.training).partial_fit(f.y, f.training, priors)
        eq.partial_fit(f.y, f.training, priors)
        assert eq.iteration_ == 3
        assert np.all(np.isfinite(eq.estimates_))
        assert eq.previous_[2].shape == (3, 15)

    def test_perfect_priors_zero_centroids(self, small_frame):
        f = small_frame
        prior = 50.0 * f.data_symbols.real
        eq = PiecewiseLinearTurboEqualizer(n_regions=2).partial_fit(f.y, f.training).partial_fit(f.y, f.training, prior)
        np.testing.assert_allclose(eq.codebook_.leaf_centroids_, 0.0, atol=1e-12)

    def test_train_weights_option(self, small_frame, priors):
        f = small_frame
        a = CTWTurboEqualizer(depth=1, train_weights=True).partial_fit(f.y, f.training).partial_fit(f.y, f.training, priors)
        b = CTWTurboEqualizer(depth=1).partial_fit(f.y, f.training).partial_fit(f.y, f.training, priors)
        assert not np.array_equal(a.estimates_, b.estimates_)
        assert abs(a.tree_state_[0]["log_b"]) > abs(b.tree_state_[0]["log_b"])

    def test_rls_nodes(self, small_frame, priors):
        f = small_frame
        eq = CTWTurboEqualizer(depth=1, filter_kind="rls").partial_fit(f.y, f.training).partial_fit(f.y, f.training, priors)
        assert np.all(np.isfinite(eq.estimates_))

    def test_reset(self, small_frame):
        eq = CTWTurboEqualizer(depth=1).partial_fit(small_frame.y, small_frame.training)
        assert not hasattr(eq.reset(), "iteration_")

    def test_clone_keeps_params(self):
        eq = CTWTurboEqualizer(depth=3, c=0.25, train_weights=True)
        assert clone(eq).get_params() == eq.get_params()
        assert LMSTurboEqualizer(mu=0.01).get_params()["mu"] == 0.01

    def test_bad_region_count(self, small_frame):
        eq = PiecewiseLinearTurboEqualizer(n_regions=3).partial_fit(small_frame.y, small_frame.training)
        with pytest.raises(ValueError, match="power of two"):
            eq.partial_fit(small_frame.y, small_frame.training, np.zeros(1024))
