"""
Linear MMSE turbo equalization with known channel.

The exact equalizer recomputes its filter for every symbol from the prior
variances of the interfering symbols,

    w(t) = conj(R(t)^{-1} v),   R(t) = sigma_n^2 I + H_bar diag(q(t)) H_bar^H + v v^H,

and forms ``xhat(t) = w^T y(t) - f^T xbar(t)`` with ``f = H^T w`` and the
prior mean of the symbol of interest set to zero. The time-averaged variant
replaces ``diag(q(t))`` by its average over the block. All systems are
solved through a Cholesky factorization.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._validation import LLR_CLIP, check_llr, check_positive, check_unit_interval
from .base import BaseTurboEqualizer
from .channel import build_convolution_matrices

# variance floor for the Gaussian output model
_VAR_FLOOR = 1e-12


@dataclass
class SoftStats:
    """Prior mean ``xbar`` and variance ``q = 1 - |xbar|^2`` of BPSK symbols."""

    xbar: np.ndarray
    q: np.ndarray


@dataclass
class EqualizerFilters:
    """Feedforward ``w`` (length N) and feedback ``f`` (length N+M-1)."""

    w: np.ndarray
    f: np.ndarray


def soft_stats_from_llr(llr):
    """``xbar = tanh(L/2)``, ``q = 1 - xbar^2`` for BPSK priors (LLRs clipped to +-50)."""
    L = check_llr(np.atleast_1d(llr))
    xbar = np.tanh(L / 2.0)
    return SoftStats(xbar.astype(complex), 1.0 - xbar**2)


def _covariance(cm, sigma_n2, qvec):
    qvec = check_unit_interval(qvec, "qvec")
    if qvec.shape != (cm.H_bar.shape[1],):
        raise ValueError(
            f"qvec must have length {cm.H_bar.shape[1]}, got {qvec.shape}"
        )
    Hb = cm.H_bar
    R = (Hb * qvec) @ Hb.conj().T + np.outer(cm.v, cm.v.conj())
    R[np.diag_indices_from(R)] += sigma_n2
    return R


def _solve_pd(R, b):
    try:
        factor = cho_factor(R, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("MMSE covariance is not positive definite") from exc
    return cho_solve(factor, b)


def exact_mmse_filter(cm, sigma_n2, qvec):
    """MMSE filters for one symbol given the interferer variances ``qvec``.

    Parameters
    ----------
    cm : ConvolutionMatrices
    sigma_n2 : float
        Noise variance, must be positive.
    qvec : array_like, length N+M-2
        Prior variances of every window symbol except the symbol of interest.

    Returns
    -------
    EqualizerFilters
    """
    sigma_n2 = check_positive(sigma_n2, "sigma_n2")
    u = _solve_pd(_covariance(cm, sigma_n2, qvec), cm.v)
    w = u.conj()
    return EqualizerFilters(w, cm.H.T @ w)


def time_avg_wiener(cm, sigma_n2, mean_q):
    """Time-invariant MMSE filters built from the averaged variances ``E[Q(t)]``.

    ``mean_q`` may be a vector (the diagonal) or a square diagonal matrix.
    """
    mean_q = np.asarray(mean_q, dtype=float)
    if mean_q.ndim == 2:
        mean_q = np.diag(mean_q)
    return exact_mmse_filter(cm, sigma_n2, mean_q)


def exact_mmse_filters(cm, sigma_n2, qvecs, chunk=4096):
    """Batched :func:`exact_mmse_filter`: feedforward filters for every row of ``qvecs``.

    Returns ``W`` of shape (T, N); feedback filters are ``W @ H``.
    """
    sigma_n2 = check_positive(sigma_n2, "sigma_n2")
    qvecs = check_unit_interval(np.atleast_2d(qvecs), "qvecs")
    Hb = cm.H_bar
    base = np.outer(cm.v, cm.v.conj()) + sigma_n2 * np.eye(cm.n)
    out = np.empty((qvecs.shape[0], cm.n), dtype=complex)
    for start in range(0, qvecs.shape[0], chunk):
        q = qvecs[start : start + chunk]
        R = np.einsum("ik,tk,jk->tij", Hb, q, Hb.conj()) + base
        try:
            L = np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("MMSE covariance is not positive definite") from exc
        rhs = np.broadcast_to(cm.v[:, None], (q.shape[0], cm.n, 1))
        z = np.linalg.solve(L, rhs)
        u = np.linalg.solve(np.conj(np.swapaxes(L, 1, 2)), z)[..., 0]
        out[start : start + chunk] = u.conj()
    return out


def mmse_estimate(filters, y_window, xbar_window, center=None):
    """``w^T y - f^T xbar`` with the prior mean of the symbol of interest zeroed.

    ``center`` is the index of the symbol of interest inside ``xbar_window``;
    when given, that entry is forced to zero before filtering.
    """
    y_window = np.asarray(y_window, dtype=complex)
    xbar_window = np.asarray(xbar_window, dtype=complex)
    if y_window.shape != filters.w.shape or xbar_window.shape != filters.f.shape:
        raise ValueError("window lengths do not match the filter dimensions")
    if center is not None:
        xbar_window = xbar_window.copy()
        xbar_window[center] = 0.0
    return filters.w @ y_window - filters.f @ xbar_window


def mmse_value(cm, sigma_n2, qvec):
    """Minimum MSE ``1 - v^H R^{-1} v`` at variances ``qvec``."""
    u = _solve_pd(_covariance(cm, sigma_n2, qvec), cm.v)
    return float(1.0 - np.real(cm.v.conj() @ u))


def analytic_mse(cm, sigma_n2, w, qvec):
    """MSE of ``xhat = w^T (y - H xbar)`` for a unit-power symbol of interest.

    ``|1 - w^T v|^2 + w^T H_bar Q H_bar^H w^* + sigma_n^2 ||w||^2``.
    """
    w = np.asarray(w, dtype=complex)
    qvec = check_unit_interval(qvec, "qvec")
    g = w @ cm.H_bar
    return float(
        np.abs(1.0 - w @ cm.v) ** 2
        + np.sum(qvec * np.abs(g) ** 2)
        + sigma_n2 * np.real(w @ w.conj())
    )


def output_model(cm, sigma_n2, W, qvecs):
    """Gain and real-projection noise variance of filters ``W`` at variances ``qvecs``.

    For ``xhat = alpha x + nu`` with BPSK ``x``, returns ``alpha = w^T v`` and the
    variance of ``Re(conj(alpha)/|alpha| nu)``, the only component that carries
    information about ``x``. ``W`` and ``qvecs`` may be single rows or stacks.
    """
    W = np.atleast_2d(W)
    qvecs = np.atleast_2d(qvecs)
    alpha = W @ cm.v
    phase = np.conj(alpha) / np.maximum(np.abs(alpha), _VAR_FLOOR)
    g = (W @ cm.H_bar) * phase[:, None]
    var = np.sum(qvecs * np.real(g) ** 2, axis=1) + 0.5 * sigma_n2 * np.sum(
        np.abs(W) ** 2, axis=1
    )
    return alpha, var


def extrinsic_llr_from_estimates(xhat, gain=None, variance=None):
    """Extrinsic LLRs from equalizer outputs under a Gaussian output model.

    The model is ``xhat = alpha x + nu``. The estimate is projected onto the
    direction of ``alpha``, ``r = Re(conj(alpha)/|alpha| xhat) = |alpha| x + nu_r``,
    and ``L = 2 |alpha| r / Var(nu_r)``. For circular noise this equals
    ``4 Re(conj(alpha) xhat) / E|nu|^2``.

    Parameters
    ----------
    xhat : array_like
        Equalizer outputs over the data period.
    gain, variance : scalar or array_like, optional
        Per-symbol ``alpha`` and ``Var(nu_r)``. When ``gain`` is omitted its
        phase is taken from ``mean(xhat * sign(Re xhat))`` and its magnitude
        from the moments of ``r``: for ``r = a x + nu`` with BPSK ``x`` and
        Gaussian ``nu``, ``a**4 = (3 E[r^2]^2 - E[r^4]) / 2``. A missing
        ``variance`` is ``E[r^2] - |alpha|^2``. Unlike residuals measured
        against hard decisions, these estimates do not shrink when many
        decisions are wrong.

    Returns
    -------
    ndarray
        LLRs clipped to +-50 (prior contribution is zero since the centre
        prior mean is not used by the estimate).
    """
    xhat = np.asarray(xhat, dtype=complex)
    if xhat.ndim != 1:
        raise ValueError("xhat must be one-dimensional")
    if xhat.size == 0:
        return np.zeros(0)
    if gain is None:
        decisions = np.where(xhat.real >= 0, 1.0, -1.0)
        direction = np.mean(xhat * decisions)
        phase = np.conj(direction) / abs(direction) if abs(direction) > 0 else 1.0
        r = np.real(phase * xhat)
        m2 = np.mean(r**2)
        a2 = np.sqrt(max(0.5 * (3.0 * m2**2 - np.mean(r**4)), 0.0))
        mag = np.sqrt(a2)
        gain = mag * np.conj(phase)
    gain = np.asarray(gain, dtype=complex)
    mag = np.abs(gain)
    phase = np.where(mag > 0, np.conj(gain) / np.maximum(mag, _VAR_FLOOR), 1.0)
    r = np.real(phase * xhat)
    if variance is None:
        variance = np.mean(r**2) - np.mean(mag**2)
    variance = np.maximum(np.asarray(variance, dtype=float), _VAR_FLOOR)
    return np.clip(2.0 * mag * r / variance, -LLR_CLIP, LLR_CLIP)


class ExactMMSETurboEqualizer(BaseTurboEqualizer):
    """Per-symbol linear MMSE turbo equalizer (channel known).

    Parameters
    ----------
    taps : array_like
        Channel impulse response ``h(0), ..., h(M-1)``.
    sigma_n2 : float
        Noise variance.
    n1, n2 : int
        Equalizer span ``[t-N2, t+N1]``.
    """

    def __init__(self, taps=None, sigma_n2=0.1, n1=9, n2=5):
        self.taps = taps
        self.sigma_n2 = sigma_n2
        self.n1 = n1
        self.n2 = n2

    @property
    def channel_length(self):
        return len(self.taps)

    def _filters(self, cm, qdata):
        return exact_mmse_filters(cm, self.sigma_n2, qdata)

    def _equalize(self, block):
        cm = build_convolution_matrices(self.taps, self.n1, self.n2)
        data = slice(block.n_train, block.n_total)
        qdata = block.q_windows[data]
        W = np.broadcast_to(self._filters(cm, qdata), (qdata.shape[0], cm.n))
        xhat = np.einsum("tn,tn->t", W, block.y_windows[data]) - np.einsum(
            "tn,tn->t", W @ cm.H, block.xbar_windows[data]
        )
        alpha, var = output_model(cm, self.sigma_n2, W, self._model_variances(qdata))
        self.filters_ = W
        self.gain_ = alpha
        return xhat, extrinsic_llr_from_estimates(xhat, gain=alpha, variance=var)

    def _model_variances(self, qdata):
        return qdata


class TimeAveragedMMSETurboEqualizer(ExactMMSETurboEqualizer):
    """MMSE turbo equalizer using the block-averaged prior variances.

    This is the Wiener solution a converged direct-adaptation equalizer
    tracks; its output LLRs assume the same averaged variances.
    """

    def _filters(self, cm, qdata):
        f = time_avg_wiener(cm, self.sigma_n2, qdata.mean(axis=0))
        return f.w[None, :]

    def _model_variances(self, qdata):
        return np.broadcast_to(qdata.mean(axis=0), qdata.shape)
