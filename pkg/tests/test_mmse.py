"""Exact and time-averaged MMSE filters, soft statistics and output LLRs."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from ctw_turbo.channel import (
    PROAKIS_C,
    ChannelModel,
    build_convolution_matrices,
    make_frame,
    received_windows,
    symbol_windows,
    variance_windows,
)
from ctw_turbo.mmse import (
    ExactMMSETurboEqualizer,
    TimeAveragedMMSETurboEqualizer,
    _covariance,
    analytic_mse,
    exact_mmse_filter,
    exact_mmse_filters,
    extrinsic_llr_from_estimates,
    mmse_estimate,
    mmse_value,
    soft_stats_from_llr,
    time_avg_wiener,
)
from ctw_turbo.turbo import run_frame

SIGMA2 = 0.1


class TestSoftStats:
    def test_no_prior(self):
        s = soft_stats_from_llr([0.0])
        assert s.xbar[0] == 0 and s.q[0] == 1

    def test_llr_two(self):
        s = soft_stats_from_llr([2.0])
        assert s.xbar[0].real == pytest.approx(0.7615941559557649)
        assert s.q[0] == pytest.approx(0.41997434161402614)

    def test_saturated(self):
        s = soft_stats_from_llr([1e9, -1e9])
        np.testing.assert_allclose(s.xbar.real, [1, -1])
        np.testing.assert_allclose(s.q, 0, atol=1e-20)

    @given(st.lists(st.floats(-60, 60), min_size=1, max_size=20))
    def test_variance_identity(self, llr):
        s = soft_stats_from_llr(llr)
        np.testing.assert_allclose(s.q, 1 - np.abs(s.xbar) ** 2, atol=1e-15)
        assert np.all((s.q >= 0) & (s.q <= 1))
        assert np.all(s.xbar.imag == 0)


class TestExactFilter:
    def test_all_ones_is_wiener_with_identity(self, proakis_cm):
        dim = proakis_cm.H_bar.shape[1]
        a = exact_mmse_filter(proakis_cm, SIGMA2, np.ones(dim))
        b = time_avg_wiener(proakis_cm, SIGMA2, np.eye(dim))
        assert np.max(np.abs(a.w - b.w)) <= 1e-12
        assert np.max(np.abs(a.f - b.f)) <= 1e-12

    def test_all_zeros_is_scaled_matched_filter(self, proakis_cm):
        cm = proakis_cm
        w = exact_mmse_filter(cm, SIGMA2, np.zeros(cm.H_bar.shape[1])).w
        expected = cm.v.conj() / (SIGMA2 + np.vdot(cm.v, cm.v).real)
        np.testing.assert_allclose(w, expected.conj(), atol=1e-13)

    def test_wiener_at_zero_is_perfect_prior_filter(self, proakis_cm):
        dim = proakis_cm.H_bar.shape[1]
        a = exact_mmse_filter(proakis_cm, SIGMA2, np.zeros(dim))
        b = time_avg_wiener(proakis_cm, SIGMA2, np.zeros(dim))
        np.testing.assert_allclose(a.w, b.w, atol=1e-14)

    def test_feedback_is_h_transpose_w(self, proakis_cm, rng):
        f = exact_mmse_filter(proakis_cm, SIGMA2, rng.uniform(size=18))
        np.testing.assert_allclose(f.f, proakis_cm.H.T @ f.w, atol=1e-14)

    def test_batched_matches_single(self, proakis_cm, rng):
        Q = rng.uniform(size=(40, 18))
        W = exact_mmse_filters(proakis_cm, SIGMA2, Q, chunk=7)
        for q, w in zip(Q, W):
            np.testing.assert_allclose(w, exact_mmse_filter(proakis_cm, SIGMA2, q).w, atol=1e-12)

    def test_nonlinear_in_q(self, proakis_cm, rng):
        q = rng.uniform(0.2, 1.0, 18)
        w = exact_mmse_filter(proakis_cm, SIGMA2, q).w
        w_half = exact_mmse_filter(proakis_cm, SIGMA2, 0.5 * q).w
        assert np.linalg.norm(w_half - 0.5 * w) / np.linalg.norm(0.5 * w) > 1e-3

    def test_optimal_against_perturbations(self, proakis_cm, rng):
        q = rng.uniform(size=18)
        w = exact_mmse_filter(proakis_cm, SIGMA2, q).w
        best = analytic_mse(proakis_cm, SIGMA2, w, q)
        assert best == pytest.approx(mmse_value(proakis_cm, SIGMA2, q), abs=1e-12)
        for _ in range(100):
            dw = 0.05 * (rng.standard_normal(15) + 1j * rng.standard_normal(15))
            assert analytic_mse(proakis_cm, SIGMA2, w + dw, q) > best

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=18, max_size=18), st.floats(1e-4, 2.0))
    def test_covariance_is_positive_definite(self, q, sigma2):
        cm = build_convolution_matrices(PROAKIS_C, 9, 5)
        R = _covariance(cm, sigma2, np.array(q))
        np.linalg.cholesky(R)
        np.testing.assert_allclose(R, R.conj().T)

    def test_time_varying_filters_vary(self, proakis_cm, rng):
        W = exact_mmse_filters(proakis_cm, SIGMA2, rng.uniform(size=(50, 18)))
        assert np.std(W, axis=0).max() > 1e-2

    def test_constant_q_gives_constant_taps(self, proakis_cm):
        W = exact_mmse_filters(proakis_cm, SIGMA2, np.full((10, 18), 0.3))
        np.testing.assert_allclose(W, W[0][None, :].repeat(10, 0), atol=1e-14)

    def test_alternating_q_gives_two_filters(self, proakis_cm):
        q = np.tile([0.0, 1.0], 40)
        Q = variance_windows(q, 5, 9, 5)[20:60]
        W = exact_mmse_filters(proakis_cm, SIGMA2, Q)
        distinct = np.unique(np.round(W, 12), axis=0)
        assert distinct.shape[0] == 2

    def test_rejects_bad_q(self, proakis_cm):
        with pytest.raises(ValueError):
            exact_mmse_filter(proakis_cm, SIGMA2, np.full(18, 1.5))
        with pytest.raises(ValueError):
            exact_mmse_filter(proakis_cm, SIGMA2, np.ones(17))
        with pytest.raises(ValueError):
            exact_mmse_filter(proakis_cm, 0.0, np.ones(18))


class TestEstimate:
    def test_scalar_channel(self):
        cm = build_convolution_matrices([1.0], 0, 0)
        f = exact_mmse_filter(cm, SIGMA2, np.zeros(0))
        assert mmse_estimate(f, [0.7], [0.0]) == pytest.approx(f.w[0] * 0.7)

    def test_perfect_priors_noiseless(self, proakis_cm, rng):
        cm = proakis_cm
        f = exact_mmse_filter(cm, SIGMA2, np.zeros(18))
        alpha = np.vdot(cm.v, np.linalg.solve(SIGMA2 * np.eye(15) + np.outer(cm.v, cm.v.conj()), cm.v))
        for _ in range(20):
            x = 1.0 - 2 * rng.integers(0, 2, 19)
            xhat = mmse_estimate(f, cm.H @ x, x, center=cm.center)
            assert abs(xhat - alpha * x[cm.center]) <= 1e-9

    def test_window_mismatch(self, proakis_cm):
        f = exact_mmse_filter(proakis_cm, SIGMA2, np.ones(18))
        with pytest.raises(ValueError):
            mmse_estimate(f, np.zeros(14), np.zeros(19))

    def test_monte_carlo_mse_matches_formula(self, proakis_cm):
        cm = proakis_cm
        r = np.random.default_rng(3)
        q = r.uniform(size=18)
        w = exact_mmse_filter(cm, SIGMA2, r.uniform(size=18)).w  # deliberately mismatched
        n = 100_000
        qfull = np.insert(q, cm.center, 1.0)
        mag = np.sqrt(1 - qfull)
        xbar = mag * np.where(r.random((n, 19)) < 0.5, 1.0, -1.0)
        x = np.where(r.random((n, 19)) < (1 + xbar) / 2, 1.0, -1.0)
        noise = np.sqrt(SIGMA2 / 2) * (r.standard_normal((n, 15)) + 1j * r.standard_normal((n, 15)))
        y = x @ cm.H.T + noise
        xbar[:, cm.center] = 0
        xhat = (y - xbar @ cm.H.T) @ w
        empirical = np.mean(np.abs(xhat - x[:, cm.center]) ** 2)
        assert empirical == pytest.approx(analytic_mse(cm, SIGMA2, w, q), rel=0.02)

    def test_linear_mmse_not_better_than_conditional_mean(self):
        # length-3 channel, 3-tap equalizer: windows of 5 symbols, no priors
        h = np.array([0.5, 0.8, 0.3])
        cm = build_convolution_matrices(h, 1, 1)
        sigma2 = 0.2
        r = np.random.default_rng(11)
        n = 20_000
        x = 1.0 - 2 * r.integers(0, 2, (n, 5))
        y = x @ cm.H.T.real + np.sqrt(sigma2 / 2) * r.standard_normal((n, 3))
        # real noise per dimension; conditional mean over the 32 hypotheses
        hyp = np.array(list(itertools.product([1.0, -1.0], repeat=5)))
        means = hyp @ cm.H.T.real
        logw = -((y[:, None, :] - means[None]) ** 2).sum(2) / sigma2
        logw -= logw.max(1, keepdims=True)
        p = np.exp(logw)
        p /= p.sum(1, keepdims=True)
        cond_mean = p @ hyp[:, cm.center]
        mse_cm = np.mean((cond_mean - x[:, cm.center]) ** 2)
        w = np.linalg.solve(cm.H.real @ cm.H.real.T + 0.5 * sigma2 * np.eye(3), cm.v.real)
        mse_lin = np.mean((y @ w - x[:, cm.center]) ** 2)
        assert mse_lin >= mse_cm


class TestExtrinsicLLR:
    def test_exact_estimates_saturate(self, rng):
        x = 1.0 - 2 * rng.integers(0, 2, 100)
        L = extrinsic_llr_from_estimates(x.astype(complex))
        np.testing.assert_array_equal(np.abs(L), 50.0)
        np.testing.assert_array_equal(np.sign(L), x)

    def test_zero_estimates(self):
        np.testing.assert_array_equal(extrinsic_llr_from_estimates(np.zeros(10)), 0.0)

    def test_empty(self):
        assert extrinsic_llr_from_estimates(np.zeros(0)).size == 0

    def test_known_model(self):
        # alpha = 1, Var(nu_r) = s2  ->  L = 2 r / s2
        L = extrinsic_llr_from_estimates(np.array([0.3, -0.1]), gain=1.0, variance=0.5)
        np.testing.assert_allclose(L, [1.2, -0.4])

    def test_antisymmetric(self, rng):
        xhat = 0.8 * (1.0 - 2 * rng.integers(0, 2, 1000)) + 0.4 * rng.standard_normal(1000)
        np.testing.assert_allclose(extrinsic_llr_from_estimates(-xhat), -extrinsic_llr_from_estimates(xhat), atol=1e-12)

    def test_phase_rotation_nearly_invariant(self, rng):
        # the phase comes from hard decisions on Re(xhat), so invariance is approximate
        x = 1.0 - 2 * rng.integers(0, 2, 5000)
        xhat = 0.8 * x + 0.3 * (rng.standard_normal(5000) + 1j * rng.standard_normal(5000))
        L1 = extrinsic_llr_from_estimates(xhat)
        L2 = extrinsic_llr_from_estimates(xhat * np.exp(0.4j))
        assert np.max(np.abs(L1 - L2)) / np.max(np.abs(L1)) < 0.02

    @pytest.mark.parametrize("alpha, sigma", [(1.0, 0.6), (0.7, 0.5), (0.3, 0.6)])
    def test_calibration(self, alpha, sigma):
        r = np.random.default_rng(21)
        n = 1_000_000
        x = 1.0 - 2 * r.integers(0, 2, n)
        xhat = alpha * x + sigma * r.standard_normal(n)
        L = extrinsic_llr_from_estimates(xhat)
        edges = np.linspace(-6, 6, 25)
        idx = np.digitize(L, edges)
        worst = 0.0
        for b in np.unique(idx):
            sel = idx == b
            if sel.sum() < 2000:
                continue
            worst = max(worst, abs(np.mean(x[sel] > 0) - np.mean(expit(L[sel]))))
        assert worst <= 0.05


class TestTurboEqualizers:
    def test_noiseless_exact_mmse_decodes(self):
        channel = ChannelModel(np.asarray(PROAKIS_C, complex), 1e-8)
        frame = make_frame(channel, 512, 64, np.random.default_rng(0))
        eq = ExactMMSETurboEqualizer(taps=PROAKIS_C, sigma_n2=1e-6)
        res = run_frame(frame, eq, n_iter=2)
        assert res.ber[-1] == 0.0

    def test_exact_matches_per_symbol_filters(self, small_frame):
        f = small_frame
        prior = np.random.default_rng(1).normal(0, 3, f.data_symbols.size)
        eq = ExactMMSETurboEqualizer(taps=PROAKIS_C, sigma_n2=f.channel.sigma_n2).partial_fit(f.y, f.training, prior)
        cm = build_convolution_matrices(PROAKIS_C, 9, 5)
        xbar = np.concatenate([f.training, np.tanh(prior / 2)])
        q = np.concatenate([np.zeros(f.training.size), 1 - np.tanh(prior / 2) ** 2])
        Y, X, Q = received_windows(f.y, 9, 5), symbol_windows(xbar, 5, 9, 5), variance_windows(q, 5, 9, 5)
        for i in (0, 17, 500, 1023):
            t = f.training.size + i
            filt = exact_mmse_filter(cm, f.channel.sigma_n2, Q[t])
            assert eq.estimates_[i] == pytest.approx(mmse_estimate(filt, Y[t], X[t], center=cm.center), abs=1e-10)

    def test_timeavg_is_time_invariant(self, small_frame):
        f = small_frame
        eq = TimeAveragedMMSETurboEqualizer(taps=PROAKIS_C, sigma_n2=f.channel.sigma_n2)
        eq.partial_fit(f.y, f.training, np.random.default_rng(2).normal(0, 2, 1024))
        assert eq.filters_.shape[0] == 1024
        np.testing.assert_array_equal(eq.filters_, np.broadcast_to(eq.filters_[0], eq.filters_.shape))

    def test_sklearn_params(self):
        eq = ExactMMSETurboEqualizer(taps=PROAKIS_C, sigma_n2=0.2)
        assert eq.get_params()["sigma_n2"] == 0.2
        assert eq.set_params(n1=3).n1 == 3
