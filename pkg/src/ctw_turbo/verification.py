"""
Numerical checks of the analytical claims behind the equalizers.

* the derivative of ``v^H M^{-1} v`` with respect to ``M``,
* the excess MSE of a centroid filter used at nearby prior variances,
* the context-tree output as an explicit mixture over pruned subtrees,
* the cumulative-loss regret of that mixture against every subtree.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_unit_interval
from .adaptive import LMS, FilterBank
from .channel import (
    PROAKIS_C,
    build_convolution_matrices,
    map_bpsk,
    received_windows,
    symbol_windows,
    transmit,
    ChannelModel,
)
from .ctw import ContextTree, run_ctw_sequence
from .mmse import _covariance, _solve_pd, analytic_mse, exact_mmse_filter, mmse_value
from .partitioning import (
    TreeVectorQuantizer,
    enumerate_partitions,
    node_path,
    partition_prior_bits,
)

# --------------------------------------------------------------------------
# gradient of v^H M^{-1} v


def quadratic_form_gradient(M, v):
    """Gradient ``G`` of ``phi(M) = v^H M^{-1} v`` such that ``d phi = tr(G dM)``.

    ``G = -M^{-1} v v^H M^{-1}``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    u = np.linalg.solve(M, np.atleast_1d(np.asarray(v, dtype=complex)))
    return -np.outer(u, u.conj())


@dataclass
class GradientCheck:
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray


def gradient_lemma_check(taps=PROAKIS_C, n1=9, n2=5, sigma_n2=0.1, n_directions=20, seed=0, step=1e-6):
    """Compare analytic and central-difference derivatives of the MMSE quadratic form.

    At a random interior variance vector ``q`` the function
    ``phi(Delta) = v^H (M + H_bar diag(Delta) H_bar^H)^{-1} v`` with
    ``M = sigma^2 I + H_bar diag(q) H_bar^H + v v^H`` is differentiated along
    ``n_directions`` random diagonal directions ``d``:
    analytic ``tr(G H_bar diag(d) H_bar^H)`` against
    ``(phi(h d) - phi(-h d)) / 2h``.
    """
    rng = np.random.default_rng(seed)
    cm = build_convolution_matrices(taps, n1, n2)
    Hb = cm.H_bar
    q = rng.uniform(0.2, 0.8, Hb.shape[1])
    M = _covariance(cm, sigma_n2, q)
    G = quadratic_form_gradient(M, cm.v)

    def phi(delta):
        return np.real(cm.v.conj() @ _solve_pd(M + (Hb * delta) @ Hb.conj().T, cm.v))

    analytic = np.empty(n_directions)
    numeric = np.empty(n_directions)
    for i in range(n_directions):
        d = rng.standard_normal(Hb.shape[1])
        dM = (Hb * d) @ Hb.conj().T
        analytic[i] = np.real(np.trace(G @ dM))
        numeric[i] = (phi(step * d) - phi(-step * d)) / (2 * step)
    scale = np.maximum(np.abs(analytic), np.finfo(float).tiny)
    return GradientCheck(float(np.max(np.abs(analytic - numeric) / scale)), analytic, numeric)


# --------------------------------------------------------------------------
# excess MSE of a centroid filter


def mse_gap(cm, sigma_n2, centroid, q):
    """``MSE(w(centroid); q) - MMSE(q)``: excess error of the centroid filter at ``q``."""
    w = exact_mmse_filter(cm, sigma_n2, centroid).w
    return analytic_mse(cm, sigma_n2, w, q) - mmse_value(cm, sigma_n2, q)


def mse_gap_check(taps=PROAKIS_C, sigma_n2=0.1, centroid=None, radii=(0.1, 0.05, 0.025), n1=9, n2=5, seed=0):
    """Excess MSE at distance ``r`` from ``centroid`` along one fixed random direction.

    Returns ``(radii, gaps)``. The centroid defaults to 0.5 everywhere so that
    every radius up to 0.5 stays inside ``[0, 1]``.
    """
    cm = build_convolution_matrices(taps, n1, n2)
    dim = cm.H_bar.shape[1]
    centroid = np.full(dim, 0.5) if centroid is None else check_unit_interval(centroid, "centroid")
    u = np.random.default_rng(seed).standard_normal(dim)
    u /= np.linalg.norm(u)
    radii = np.asarray(radii, dtype=float)
    gaps = np.array([mse_gap(cm, sigma_n2, centroid, np.clip(centroid + r * u, 0.0, 1.0)) for r in radii])
    return radii, gaps


# --------------------------------------------------------------------------
# perfect-feedback context-tree runs


@dataclass
class PerfectFeedbackRun:
    """A context-tree run on known symbols and the data it saw."""

    trace: object
    leaves: np.ndarray
    truth: np.ndarray
    depth: int
    c: float
    y_windows: np.ndarray
    xbar_windows: np.ndarray


def perfect_feedback_run(depth=2, n=1000, seed=0, snr_db=10.0, filter_kind=LMS, mu=1e-2, c=0.5, taps=PROAKIS_C, n1=9, n2=5, delta=1.0):
    """Run the weighted equalizer with the true symbols as reference.

    Symbols go through the channel; every symbol gets a Gaussian-consistent
    prior LLR whose quality is drawn per symbol, so the variance windows are
    spread over ``[0, 1]``. The tree is built by LBG on those windows.
    """
    rng = np.random.default_rng(seed)
    channel = ChannelModel.from_snr(taps, snr_db)
    m = len(taps)
    x = map_bpsk(rng.integers(0, 2, n, dtype=np.int8))
    y = transmit(x, channel, rng)
    sigma = rng.uniform(0.0, 4.0, n)
    llr = 0.5 * sigma**2 * x.real + sigma * rng.standard_normal(n)
    xbar = np.tanh(llr / 2.0)
    q = 1.0 - xbar**2
    center = m + n2 - 1
    Y = received_windows(y, n1, n2)
    X = np.array(symbol_windows(xbar.astype(complex), m, n1, n2))
    X[:, center] = 0.0
    Q = np.delete(symbol_windows(q, m, n1, n2), center, axis=1)
    vq = TreeVectorQuantizer(depth=depth).fit(Q)
    bank = FilterBank(2 ** (depth + 1) - 1, n1 + n2 + 1, n1 + n2 + m, mu=mu, kind=filter_kind, delta=delta)
    tree = ContextTree(depth, bank, c)
    trace = run_ctw_sequence(tree, Y, X, vq.labels_, reference=x)
    return PerfectFeedbackRun(trace, vq.labels_, x, depth, c, Y, X)


def _partition_columns(partition, leaves, depth):
    """Column of ``node_estimates`` holding the partition's node for every sample."""
    cols = {}
    for leaf in range(2**depth, 2 ** (depth + 1)):
        path = node_path(leaf, depth)
        cols[leaf] = next(i for i, node in enumerate(path) if node in partition)
    return np.array([cols[int(leaf)] for leaf in leaves])


def partition_predictions(run):
    """``(partitions, prior_bits, predictions)``; ``predictions[i, t]`` is the
    output of the piecewise-linear equalizer of partition ``i`` at time ``t``."""
    partitions = enumerate_partitions(run.depth)
    idx = np.arange(run.leaves.size)
    preds = np.array(
        [run.trace.node_estimates[idx, _partition_columns(p, run.leaves, run.depth)] for p in partitions]
    )
    bits = np.array([partition_prior_bits(p, run.depth) for p in partitions])
    return partitions, bits, preds


def explicit_mixture(run):
    """Mixture of all partition equalizers weighted by ``2**-C(P) exp(-c L_P(t-1))``."""
    _, bits, preds = partition_predictions(run)
    losses = np.abs(preds - run.truth) ** 2
    past = np.cumsum(losses, axis=1) - losses
    logw = -bits[:, None] * math.log(2.0) - run.c * past
    logw -= logw.max(axis=0)
    w = np.exp(logw)
    w /= w.sum(axis=0)
    return np.sum(w * preds, axis=0)


def mixture_equivalence_error(depth=2, n=500, seed=0, **kwargs):
    """Largest per-sample gap between the tree output and the explicit mixture."""
    run = perfect_feedback_run(depth=depth, n=n, seed=seed, **kwargs)
    return float(np.max(np.abs(run.trace.estimates - explicit_mixture(run))))


@dataclass
class RegretRow:
    seed: int
    n: int
    partition: str
    prior_bits: int
    partition_loss: float
    ctw_loss: float
    bound: float

    @property
    def slack(self):
        return self.bound - self.ctw_loss


def regret_rows(run, seed=0):
    """Bound ``L_P + C(P) ln 2 / c`` against the tree's cumulative loss, per partition."""
    partitions, bits, preds = partition_predictions(run)
    ctw_loss = float(np.sum(np.abs(run.truth - run.trace.estimates) ** 2))
    rows = []
    for p, b, pred in zip(partitions, bits, preds):
        loss = float(np.sum(np.abs(run.truth - pred) ** 2))
        rows.append(
            RegretRow(seed, run.truth.size, "-".join(map(str, sorted(p))), int(b), loss, ctw_loss, loss + b * math.log(2.0) / run.c)
        )
    return rows


def regret_check(depth=2, lengths=(100, 1000, 5000), seeds=range(10), **kwargs):
    """Regret rows for every ``(n, seed)``; the claim is ``slack >= 0`` everywhere."""
    rows = []
    for n in lengths:
        for seed in seeds:
            rows.extend(regret_rows(perfect_feedback_run(depth=depth, n=n, seed=seed, **kwargs), seed))
    return rows


def batch_partition_loss(run, partition):
    """Least-squares loss of the best fixed linear filter per region of ``partition``."""
    D = np.concatenate([run.y_windows, -run.xbar_windows], axis=1)
    cols = _partition_columns(partition, run.leaves, run.depth)
    nodes = np.array([node_path(int(leaf), run.depth)[c] for leaf, c in zip(run.leaves, cols)])
    loss = 0.0
    for node in np.unique(nodes):
        sel = nodes == node
        theta, *_ = np.linalg.lstsq(D[sel], run.truth[sel], rcond=None)
        loss += float(np.sum(np.abs(run.truth[sel] - D[sel] @ theta) ** 2))
    return loss


def best_batch_loss(run):
    return min(batch_partition_loss(run, p) for p in enumerate_partitions(run.depth))


def log_regret_ratios(depth=2, lengths=(1000, 2000), seed=0, **kwargs):
    """``(ctw_loss - best batch loss) / ln n`` with RLS node filters, per length.

    One run of the longest length is made; shorter lengths are its prefixes
    (the sequential outputs up to ``n`` do not depend on later samples).
    """
    kwargs.setdefault("filter_kind", "rls")
    n_max = max(lengths)
    run = perfect_feedback_run(depth=depth, n=n_max, seed=seed, **kwargs)
    ratios = []
    for n in lengths:
        sub = PerfectFeedbackRun(
            _prefix_trace(run.trace, n), run.leaves[:n], run.truth[:n], depth, run.c, run.y_windows[:n], run.xbar_windows[:n]
        )
        ctw_loss = float(np.sum(np.abs(sub.truth - sub.trace.estimates) ** 2))
        ratios.append((ctw_loss - best_batch_loss(sub)) / math.log(n))
    return np.array(ratios)


def _prefix_trace(trace, n):
    return type(trace)(*(None if field is None else field[:n] for field in trace))
