"""
Piecewise-linear turbo equalizers over a partition of the prior-variance space.

:class:`PiecewiseLinearTurboEqualizer` fixes the partition to the leaves of an
LBG codebook. :class:`CTWTurboEqualizer` keeps an equalizer at every node of
the LBG context tree and mixes the node estimates along the path of the
current leaf so that the output equals the performance-weighted mixture of
all piecewise-linear equalizers defined by pruned subtrees.

Mixture semantics
-----------------
Every node keeps ``B = exp(-c * sum of its squared errors)``; leaves have
``A = B`` and internal nodes ``A = A_left A_right / 2 + B / 2``, so the root
accumulator equals ``sum_P 2**-C(P) exp(-c L_P)`` over pruned subtrees ``P``.
The weight of the path node at depth ``d`` is

    beta_d = prod_{j=1..d} (A_sibling(j) / 2) * s_d * B_d / A_root,

with ``s_d = 1/2`` above the deepest level and 1 at a leaf; the weights sum to
one. Accumulators are kept in the log domain.
"""

import math
from typing import NamedTuple

import numpy as np

from .adaptive import LMS, FilterBank, first_iteration_lms, quantize, scale_training_symbols
from .base import BaseTurboEqualizer
from .mmse import extrinsic_llr_from_estimates
from .partitioning import TreeVectorQuantizer, node_path

_LOG_HALF = math.log(0.5)


class ContextTree:
    """Depth-``D`` context tree: per-node log accumulators plus a filter bank.

    Parameters
    ----------
    depth : int
    filters : FilterBank
        One equalizer per node (heap-indexed).
    c : float
        Loss exponent of the node accumulators.
    """

    def __init__(self, depth, filters, c=0.5):
        self.depth = int(depth)
        if filters.n_nodes != self.n_nodes:
            raise ValueError("filter bank size does not match the tree")
        self.filters = filters
        self.c = float(c)
        self.log_a = np.zeros(self.n_nodes + 1)
        self.log_b = np.zeros(self.n_nodes + 1)
        self.leaf_lookups = 0

    @property
    def n_nodes(self):
        return 2 ** (self.depth + 1) - 1

    def reset_weights(self):
        self.log_a[:] = 0.0
        self.log_b[:] = 0.0

    def paths(self):
        """``{leaf: node_path(leaf)}`` for every leaf."""
        return {leaf: node_path(leaf, self.depth) for leaf in range(2**self.depth, 2 ** (self.depth + 1))}


class CTWPrediction(NamedTuple):
    estimate: complex
    betas: np.ndarray
    node_estimates: np.ndarray


def ctw_weights(tree, leaf_path):
    """Mixture weights of the nodes in ``leaf_path`` (same leaf-to-root order)."""
    log_a, log_b = tree.log_a, tree.log_b
    depth = len(leaf_path) - 1
    root_first = leaf_path[::-1]
    log_root = log_a[1]
    betas = np.empty(depth + 1)
    prefix = 0.0
    for d, node in enumerate(root_first):
        stop = _LOG_HALF if d < depth else 0.0
        betas[depth - d] = math.exp(prefix + stop + log_b[node] - log_root)
        if d < depth:
            prefix += _LOG_HALF + log_a[root_first[d + 1] ^ 1]
    return betas


def ctw_predict(tree, leaf_path, y_window, xbar_window):
    """Weighted estimate ``sum_l beta_l xhat_l`` over the nodes of ``leaf_path``.

    Returns
    -------
    CTWPrediction
        ``(estimate, betas, node_estimates)`` with ``betas`` and
        ``node_estimates`` in leaf-to-root order.
    """
    node_est = tree.filters.predict(leaf_path, y_window, xbar_window)
    betas = ctw_weights(tree, leaf_path)
    return CTWPrediction(np.sum(betas * node_est), betas, node_est)


def ctw_update(tree, leaf_path, reference, node_estimates, y_window, xbar_window):
    """Update accumulators bottom-up along ``leaf_path`` and adapt its node filters.

    Returns the node errors ``reference - node_estimates``.
    """
    errors = reference - np.asarray(node_estimates)
    log_a, log_b = tree.log_a, tree.log_b
    leaf = leaf_path[0]
    for node, err in zip(leaf_path, errors):
        log_b[node] -= tree.c * (err.real * err.real + err.imag * err.imag)
        if node == leaf and node >= 2**tree.depth:
            log_a[node] = log_b[node]
        else:
            split = _LOG_HALF + log_a[2 * node] + log_a[2 * node + 1]
            stop = _LOG_HALF + log_b[node]
            hi, lo = (split, stop) if split > stop else (stop, split)
            log_a[node] = hi + math.log1p(math.exp(lo - hi))
    tree.filters.update(leaf_path, errors, y_window, xbar_window)
    return errors


class CTWTrace(NamedTuple):
    estimates: np.ndarray
    node_estimates: np.ndarray
    betas: np.ndarray
    updates: np.ndarray
    combined_w: np.ndarray | None = None


def run_ctw_sequence(tree, y_windows, xbar_windows, leaves, reference=None, record=False):
    """Run the weighted equalizer over a sequence of samples.

    Parameters
    ----------
    tree : ContextTree
    y_windows, xbar_windows : ndarray
        Regressors per sample.
    leaves : array_like of int
        Leaf heap id of every sample.
    reference : array_like, optional
        Known symbols (perfect feedback). When omitted the reference is the
        quantized weighted estimate (decision directed).
    record : bool
        Also return the weighted feedforward filter ``sum_l beta_l w_l`` in
        effect at every sample.

    Returns
    -------
    CTWTrace
        Weighted estimates, node estimates and weights (leaf-to-root order),
        the number of node-filter updates made for each sample and, when
        recorded, the combined feedforward filters.
    """
    n = len(leaves)
    paths = tree.paths()
    est = np.empty(n, complex)
    node_est = np.empty((n, tree.depth + 1), complex)
    betas = np.empty((n, tree.depth + 1))
    updates = np.empty(n, dtype=np.int64)
    combined = np.empty((n, tree.filters.W.shape[1]), complex) if record else None
    for t in range(n):
        path = paths[int(leaves[t])]
        tree.leaf_lookups += 1
        yt, xt = y_windows[t], xbar_windows[t]
        pred = ctw_predict(tree, path, yt, xt)
        if record:
            combined[t] = pred.betas @ tree.filters.W[path]
        ref = quantize(pred.estimate) if reference is None else reference[t]
        before = tree.filters.n_updates
        ctw_update(tree, path, ref, pred.node_estimates, yt, xt)
        updates[t] = tree.filters.n_updates - before
        est[t] = pred.estimate
        node_est[t] = pred.node_estimates
        betas[t] = pred.betas
    return CTWTrace(est, node_est, betas, updates, combined)


def _carry_over(bank, centroids, prev):
    """Initialise every node in ``centroids`` ({node: centroid}) from the nearest
    node of the previous iteration, ``prev = (nodes, centroids, W, F)``."""
    prev_nodes, prev_c, prev_w, prev_f = prev
    for node, c in centroids.items():
        j = int(np.argmin(((prev_c - c) ** 2).sum(axis=1)))
        bank.W[node] = prev_w[j]
        bank.F[node] = prev_f[j]


class _AdaptiveTurboEqualizer(BaseTurboEqualizer):
    """Shared first iteration: feedforward-only LMS, trained then decision directed."""

    def _equalize(self, block):
        if self.iteration_ == 1:
            xhat, w, _ = first_iteration_lms(block.y_windows, block.x_train, self.mu)
            self.w_first_ = w
            xhat = xhat[block.n_train :]
        else:
            xhat = self._piecewise_iteration(block)
        return xhat, extrinsic_llr_from_estimates(xhat)

    def _new_bank(self, depth, block):
        n_feedback = block.n1 + block.n2 + block.m
        return FilterBank(
            2 ** (depth + 1) - 1,
            block.n1 + block.n2 + 1,
            n_feedback,
            mu=self.mu,
            kind=self.filter_kind,
            delta=self.delta,
        )

    def _fit_codebook(self, depth, block):
        qdata = block.q_windows[block.n_train :]
        return TreeVectorQuantizer(depth=depth).fit(qdata), qdata

    def _leaf_scales(self, vq, block):
        leaves = np.arange(2**vq.depth, 2 ** (vq.depth + 1))
        ones = np.ones(block.n1 + block.n2 + block.m)
        return {
            int(k): scale_training_symbols(ones, vq.centroid(k), center=block.center)
            for k in leaves
        }


class PiecewiseLinearTurboEqualizer(_AdaptiveTurboEqualizer):
    """Adaptive piecewise-linear turbo equalizer on a fixed LBG partition.

    Parameters
    ----------
    n_regions : int
        Number of regions ``K`` (a power of two; the LBG codebook size).
    mu : float
        LMS step size.
    n1, n2 : int
        Equalizer span ``[t-N2, t+N1]``.
    channel_length : int
        Assumed channel memory ``M`` (sets the feedback length ``N+M-1``).
    filter_kind : {"lms", "rls"}
    delta : float
        RLS ridge.
    record : bool
        Keep the feedforward filter used at every data sample in
        ``weight_history_``.
    """

    def __init__(self, n_regions=4, mu=1e-3, n1=9, n2=5, channel_length=5, filter_kind=LMS, delta=1.0, record=False):
        self.n_regions = n_regions
        self.mu = mu
        self.n1 = n1
        self.n2 = n2
        self.channel_length = channel_length
        self.filter_kind = filter_kind
        self.delta = delta
        self.record = record

    @property
    def _depth(self):
        k = int(self.n_regions)
        if k < 1 or k & (k - 1):
            raise ValueError(f"n_regions must be a power of two, got {self.n_regions}")
        return k.bit_length() - 1

    def _piecewise_iteration(self, block):
        depth = self._depth
        vq, qdata = self._fit_codebook(depth, block)
        bank = self._new_bank(depth, block)
        leaves = np.arange(2**depth, 2 ** (depth + 1))
        centroids = {int(k): vq.centroid(k) for k in leaves}
        if self.iteration_ == 2:
            bank.W[leaves] = self.w_first_
        else:
            _carry_over(bank, centroids, self.previous_)

        by_leaf = self._leaf_scales(vq, block)
        scales = np.array([by_leaf[int(k)] for k in leaves])
        Y, Xtr, x = block.y_windows, block.train_windows, block.x_train
        for t in range(block.n_train):
            xs = scales * Xtr[t]
            est = bank.predict(leaves, Y[t], xs)
            bank.update(leaves, x[t] - est, Y[t], xs)

        regions = vq.predict(qdata)
        Xb = block.xbar_windows
        xhat = np.empty(block.n_data, complex)
        history = np.empty((block.n_data, bank.W.shape[1]), complex) if self.record else None
        for i, t in enumerate(range(block.n_train, block.n_total)):
            node = regions[i : i + 1]
            if self.record:
                history[i] = bank.W[node[0]]
            est = bank.predict(node, Y[t], Xb[t])
            xhat[i] = est[0]
            bank.update(node, quantize(est) - est, Y[t], Xb[t])

        self.codebook_ = vq
        self.regions_ = regions
        if self.record:
            self.weight_history_ = history
        self.previous_ = (leaves, vq.node_centroids_[leaves], bank.W[leaves].copy(), bank.F[leaves].copy())
        self.filters_ = bank
        return xhat


class LMSTurboEqualizer(PiecewiseLinearTurboEqualizer):
    """Ordinary decision-directed LMS turbo equalizer (a single region)."""

    def __init__(self, mu=1e-3, n1=9, n2=5, channel_length=5, filter_kind=LMS, delta=1.0, record=False):
        super().__init__(1, mu, n1, n2, channel_length, filter_kind, delta, record)


class CTWTurboEqualizer(_AdaptiveTurboEqualizer):
    """Context-tree-weighted piecewise-linear turbo equalizer.

    Parameters
    ----------
    depth : int
        Tree depth ``D``; the tree has ``2**D`` leaves.
    mu : float
        LMS step size of every node filter.
    c : float
        Loss exponent of the node accumulators.
    n1, n2, channel_length, filter_kind, delta
        As for :class:`PiecewiseLinearTurboEqualizer`.
    record : bool
        Keep the weighted feedforward filter in effect at every data sample
        in ``combined_weights_``.
    train_weights : bool
        Let training-phase errors enter the node accumulators. Off by default:
        during training the root is updated ``2**D`` times per sample, so its
        accumulated loss is not comparable with the leaves' and would lock
        the mixture onto the root for the whole data phase. Node filters are
        trained either way.

    Attributes
    ----------
    level_weights_ : ndarray of shape (n_data, depth + 1)
        Weights of the path nodes per data sample, root first.
    updates_per_sample_ : ndarray
        Node-filter updates made for each data-phase sample.
    tree_state_ : list of dict
        Node centroids, log accumulators and filter norms at the end of the
        iteration.
    """

    def __init__(self, depth=2, mu=1e-3, c=0.5, n1=9, n2=5, channel_length=5, filter_kind=LMS, delta=1.0, record=False, train_weights=False):
        self.depth = depth
        self.mu = mu
        self.c = c
        self.n1 = n1
        self.n2 = n2
        self.channel_length = channel_length
        self.filter_kind = filter_kind
        self.delta = delta
        self.record = record
        self.train_weights = train_weights

    def _piecewise_iteration(self, block):
        depth = int(self.depth)
        vq, qdata = self._fit_codebook(depth, block)
        bank = self._new_bank(depth, block)
        nodes = np.arange(1, 2 ** (depth + 1))
        centroids = {int(k): vq.centroid(k) for k in nodes}
        if self.iteration_ == 2:
            bank.W[nodes] = self.w_first_
        else:
            _carry_over(bank, centroids, self.previous_)
        tree = ContextTree(depth, bank, self.c)
        paths = tree.paths()

        scales = self._leaf_scales(vq, block)
        Y, Xtr, x = block.y_windows, block.train_windows, block.x_train
        for t in range(block.n_train):
            yt = Y[t]
            for leaf, path in paths.items():
                xs = scales[leaf] * Xtr[t]
                est = bank.predict(path, yt, xs)
                ctw_update(tree, path, x[t], est, yt, xs)

        if not self.train_weights:
            tree.reset_weights()
        leaves = vq.predict(qdata)
        data = slice(block.n_train, block.n_total)
        trace = run_ctw_sequence(tree, Y[data], block.xbar_windows[data], leaves, record=self.record)

        self.codebook_ = vq
        self.tree_ = tree
        self.regions_ = leaves
        self.level_weights_ = trace.betas[:, ::-1]
        self.updates_per_sample_ = trace.updates
        self.tree_state_ = [
            {
                "node": int(k),
                "centroid": vq.centroid(k),
                "log_a": float(tree.log_a[k]),
                "log_b": float(tree.log_b[k]),
                "w_norm": float(np.linalg.norm(bank.W[k])),
                "f_norm": float(np.linalg.norm(bank.F[k])),
            }
            for k in nodes
        ]
        if self.record:
            self.combined_weights_ = trace.combined_w
        self.previous_ = (nodes, vq.node_centroids_[nodes], bank.W[nodes].copy(), bank.F[nodes].copy())
        self.filters_ = bank
        return trace.estimates
