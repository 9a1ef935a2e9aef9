"""
Sequential linear equalizers ``xhat = w^T y - f^T xbar`` trained by LMS or RLS.

Conjugation convention (used everywhere): the LMS update descends
``|e|^2`` for ``e = reference - xhat``, i.e.

    w <- w + mu e conj(y),    f <- f - mu e conj(xbar).

RLS solves ``theta = M^{-1} p`` for the stacked predictor ``theta = [w; -f]``
acting on ``d = [y; xbar]``, with ``M = sum conj(d) d^T + delta I`` and
``p = sum conj(d) reference``, updated by the matrix inversion lemma.
"""

import numpy as np

LMS = "lms"
RLS = "rls"


def quantize(xhat):
    """Nearest BPSK point; ``Re(xhat) == 0`` maps to +1."""
    return np.where(np.real(xhat) >= 0, 1.0, -1.0) + 0j


def scale_training_symbols(x_window, centroid, center=None):
    """Scale known symbols by ``sqrt(1 - q)`` to mimic prior uncertainty.

    ``centroid`` is either a full-window variance vector or one that omits the
    symbol of interest (length ``len(x_window) - 1``). In the latter case the
    variance 1 is inserted at ``center``, so that entry is zeroed exactly as the
    prior mean of the symbol of interest is during data detection.
    """
    x_window = np.asarray(x_window)
    centroid = np.asarray(centroid, dtype=float)
    if centroid.shape[-1] == x_window.shape[-1] - 1:
        if center is None:
            raise ValueError("center index required for a reduced variance vector")
        centroid = np.insert(centroid, center, 1.0, axis=-1)
    elif centroid.shape[-1] != x_window.shape[-1]:
        raise ValueError("centroid length does not match the symbol window")
    return np.sqrt(np.clip(1.0 - centroid, 0.0, 1.0)) * x_window


class AdaptiveLinearEqualizer:
    """Single adaptive feedforward/feedback equalizer.

    Parameters
    ----------
    n : int
        Feedforward length N.
    n_feedback : int
        Feedback length N+M-1 (0 for a feedforward-only equalizer).
    mu : float
        LMS step size.
    kind : {"lms", "rls"}
    delta : float
        RLS ridge; ``M(0) = delta I``.
    """

    def __init__(self, n, n_feedback, mu=1e-3, kind=LMS, delta=1.0, w=None, f=None):
        if kind not in (LMS, RLS):
            raise ValueError(f"unknown filter kind {kind!r}")
        self.mu = mu
        self.kind = kind
        self.delta = delta
        self.w = np.zeros(n, complex) if w is None else np.array(w, dtype=complex)
        self.f = np.zeros(n_feedback, complex) if f is None else np.array(f, dtype=complex)
        if kind == RLS:
            self.P = np.eye(n + n_feedback, dtype=complex) / delta

    def predict(self, y_window, xbar_window):
        y_window = np.asarray(y_window)
        xbar_window = np.asarray(xbar_window)
        if y_window.shape != self.w.shape or xbar_window.shape != self.f.shape:
            raise ValueError("window lengths do not match the filter dimensions")
        return self.w @ y_window - self.f @ xbar_window

    def lms_step(self, error, y_window, xbar_window):
        self.w += self.mu * error * np.conj(y_window)
        self.f -= self.mu * error * np.conj(xbar_window)

    def rls_step(self, reference, y_window, xbar_window):
        d = np.concatenate([y_window, xbar_window])
        theta = np.concatenate([self.w, -self.f])
        Pd = self.P @ d.conj()
        gain = Pd / (1.0 + d @ Pd)
        theta = theta + gain * (reference - theta @ d)
        self.P -= np.outer(gain, d @ self.P)
        n = self.w.size
        self.w, self.f = theta[:n], -theta[n:]

    def step(self, reference, y_window, xbar_window):
        """Update toward ``reference`` with whichever rule ``kind`` selects."""
        if self.kind == RLS:
            self.rls_step(reference, y_window, xbar_window)
        else:
            self.lms_step(reference - self.predict(y_window, xbar_window), y_window, xbar_window)


class FilterBank:
    """Equalizers for every node of a tree, indexed by heap id (1-based).

    Vectorized over the nodes passed to :meth:`predict` / :meth:`update`;
    ``n_updates`` counts node-filter updates.
    """

    def __init__(self, n_nodes, n, n_feedback, mu=1e-3, kind=LMS, delta=1.0):
        if kind not in (LMS, RLS):
            raise ValueError(f"unknown filter kind {kind!r}")
        self.mu = mu
        self.kind = kind
        self.delta = delta
        self.W = np.zeros((n_nodes + 1, n), complex)
        self.F = np.zeros((n_nodes + 1, n_feedback), complex)
        if kind == RLS:
            self.P = np.broadcast_to(
                np.eye(n + n_feedback, dtype=complex) / delta, (n_nodes + 1, n + n_feedback, n + n_feedback)
            ).copy()
        self.n_updates = 0

    @property
    def n_nodes(self):
        return self.W.shape[0] - 1

    def predict(self, nodes, y_window, xbar_window):
        """Node outputs; ``xbar_window`` may be shared or one row per node."""
        return (self.W[nodes] * y_window).sum(axis=1) - (self.F[nodes] * xbar_window).sum(axis=1)

    def update(self, nodes, errors, y_window, xbar_window):
        """Apply one update per node; ``errors`` are ``reference - prediction``."""
        nodes = np.asarray(nodes)
        errors = np.asarray(errors)
        if self.kind == LMS:
            self.W[nodes] += self.mu * errors[:, None] * np.conj(y_window)
            self.F[nodes] -= self.mu * errors[:, None] * np.conj(xbar_window)
        else:
            xbar = np.broadcast_to(xbar_window, (nodes.size, self.F.shape[1]))
            d = np.concatenate([np.broadcast_to(y_window, (nodes.size, self.W.shape[1])), xbar], axis=1)
            P = self.P[nodes]
            Pd = np.einsum("kij,kj->ki", P, d.conj())
            gain = Pd / (1.0 + (Pd * d).sum(axis=1))[:, None]
            n = self.W.shape[1]
            # errors are a priori, so theta += gain * error
            self.W[nodes] += gain[:, :n] * errors[:, None]
            self.F[nodes] -= gain[:, n:] * errors[:, None]
            self.P[nodes] = P - gain[:, :, None] * np.einsum("kj,kji->ki", d, P)[:, None, :]
        self.n_updates += nodes.size


def first_iteration_lms(y_windows, training, mu, w0=None, record=False):
    """Feedforward-only LMS over a whole block: trained on ``training``, then
    decision directed.

    Returns
    -------
    xhat : ndarray
        Output for every sample of the block.
    w : ndarray
        Filter after the last sample.
    history : ndarray or None
        Filter before each update, shape (n, N), when ``record`` is set.
    """
    n_total, n = y_windows.shape
    w = np.zeros(n, complex) if w0 is None else np.array(w0, dtype=complex)
    n_train = len(training)
    xhat = np.empty(n_total, complex)
    history = np.empty((n_total, n), complex) if record else None
    for t in range(n_total):
        yt = y_windows[t]
        if record:
            history[t] = w
        est = w @ yt
        xhat[t] = est
        ref = training[t] if t < n_train else (1.0 if est.real >= 0 else -1.0)
        w += mu * (ref - est) * np.conj(yt)
    return xhat, w, history
