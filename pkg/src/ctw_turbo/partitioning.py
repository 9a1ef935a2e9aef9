"""
LBG vector quantization by binary splitting, and the context tree it induces.

Nodes are numbered in binary-heap order: the root is 1 and node ``k`` has
children ``2k`` and ``2k + 1``. Leaves of a depth-``D`` tree are
``2**D, ..., 2**(D+1) - 1``. The centroid of an internal node is the codeword
it held just before being split.
"""

from functools import lru_cache
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted


def node_path(leaf, depth):
    """Heap ids from ``leaf`` up to the root, e.g. ``node_path(11, 3) == [11, 5, 2, 1]``."""
    leaf = int(leaf)
    if not (2**depth <= leaf < 2 ** (depth + 1)):
        raise ValueError(f"{leaf} is not a leaf of a depth-{depth} tree")
    path = [leaf]
    while path[-1] > 1:
        path.append(path[-1] // 2)
    return path


def node_depth(node):
    return int(node).bit_length() - 1


@lru_cache(maxsize=None)
def _partitions(node, depth, max_depth):
    if depth == max_depth:
        return (frozenset([node]),)
    left = _partitions(2 * node, depth + 1, max_depth)
    right = _partitions(2 * node + 1, depth + 1, max_depth)
    return (frozenset([node]),) + tuple(a | b for a in left for b in right)


def enumerate_partitions(depth):
    """All complete pruned subtrees of the depth-``depth`` tree, as sets of leaf nodes.

    The count follows ``m(d) = m(d-1)**2 + 1`` (1, 2, 5, 26, 677, ...).
    """
    if depth > 4:
        raise ValueError("enumeration is only meant for oracle checks (depth <= 4)")
    return list(_partitions(1, 0, int(depth)))


def partition_prior_bits(partition, depth):
    """Code length ``C(P)`` such that ``sum_P 2**-C(P) == 1``.

    One bit for every node of the pruned subtree (its leaves and their
    ancestors) that sits above the maximum depth.
    """
    nodes = set()
    for leaf in partition:
        node = int(leaf)
        while node >= 1:
            nodes.add(node)
            node //= 2
    return sum(1 for node in nodes if node_depth(node) < depth)


def partition_node_on_path(partition, path):
    """The single node of ``partition`` lying on ``path`` (leaf-to-root list)."""
    hits = [node for node in path if node in partition]
    if len(hits) != 1:
        raise ValueError("path does not cross the partition exactly once")
    return hits[0]


def _sq_dist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


class TreeVectorQuantizer(ClusterMixin, BaseEstimator):
    """LBG quantizer grown by ``depth`` binary splits.

    Parameters
    ----------
    depth : int
        Number of splits; the codebook has ``2**depth`` leaves.
    epsilon : float
        Split perturbation, scaled by the per-dimension standard deviation of
        the parent's cell.
    tol : float
        Lloyd iterations stop when the relative distortion change drops below
        ``tol``.
    max_iter : int
        Lloyd iteration cap per level.

    Attributes
    ----------
    node_centroids_ : ndarray of shape (2**(depth+1), n_features)
        Row ``k`` is the centroid of heap node ``k``; row 0 is unused (NaN).
    distortion_history_ : list of list of float
        Mean squared distortion after every Lloyd iteration, per level.
    labels_ : ndarray
        Leaf heap id of every training sample.
    """

    def __init__(self, depth=2, epsilon=1e-3, tol=1e-6, max_iter=100):
        self.depth = depth
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        depth = int(self.depth)
        if depth < 0:
            raise ValueError("depth must be non-negative")
        if X.shape[0] < 2**depth:
            raise ValueError(
                f"need at least {2**depth} samples for depth {depth}, got {X.shape[0]}"
            )
        nodes = np.full((2 ** (depth + 1), X.shape[1]), np.nan)
        codebook = X.mean(axis=0, keepdims=True)
        nodes[1] = codebook[0]
        labels = np.zeros(X.shape[0], dtype=np.intp)
        history = [[float(_sq_dist(X, codebook).min(axis=1).mean())]]
        for level in range(1, depth + 1):
            children = []
            for k in range(codebook.shape[0]):
                cell = X[labels == k]
                spread = cell.std(axis=0) if cell.shape[0] else np.zeros(X.shape[1])
                children.append(codebook[k] - self.epsilon * spread)
                children.append(codebook[k] + self.epsilon * spread)
            codebook, labels, dist = self._lloyd(X, np.array(children))
            history.append(dist)
            first = 2**level
            nodes[first : first + codebook.shape[0]] = codebook
        self.node_centroids_ = nodes
        self.distortion_history_ = history
        self.labels_ = labels + 2**depth
        return self

    def _lloyd(self, X, codebook):
        history = []
        prev = np.inf
        for _ in range(self.max_iter):
            d = _sq_dist(X, codebook)
            labels = d.argmin(axis=1)
            dist = float(d[np.arange(X.shape[0]), labels].mean())
            history.append(dist)
            if prev < np.inf and prev - dist <= self.tol * max(prev, 1e-300):
                break
            prev = dist
            codebook = self._update(X, codebook, labels, d)
        else:
            d = _sq_dist(X, codebook)
            labels = d.argmin(axis=1)
            history.append(float(d[np.arange(X.shape[0]), labels].mean()))
        return codebook, labels, history

    @staticmethod
    def _update(X, codebook, labels, d):
        new = codebook.copy()
        counts = np.bincount(labels, minlength=codebook.shape[0])
        for k in range(codebook.shape[0]):
            if counts[k]:
                new[k] = X[labels == k].mean(axis=0)
        for k in np.flatnonzero(counts == 0):
            # empty cell: take over the farthest point of the largest cell
            big = int(np.argmax(counts))
            members = np.flatnonzero(labels == big)
            far = members[np.argmax(d[members, big])]
            if d[far, big] > 0:
                new[k] = X[far]
                labels[far] = k
                counts[big] -= 1
                counts[k] += 1
                new[big] = X[labels == big].mean(axis=0)
        return new

    @property
    def leaf_centroids_(self):
        check_is_fitted(self, "node_centroids_")
        return self.node_centroids_[2**self.depth :]

    def centroid(self, node):
        check_is_fitted(self, "node_centroids_")
        return self.node_centroids_[int(node)]

    def nearest_region(self, q, level=None):
        """Heap id of the nearest centroid among the nodes at ``level`` (default: leaves).

        Ties resolve to the lowest heap id.
        """
        check_is_fitted(self, "node_centroids_")
        level = self.depth if level is None else int(level)
        first = 2**level
        C = self.node_centroids_[first : 2 * first]
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return _sq_dist(q, C).argmin(axis=1) + first

    def predict(self, X):
        """Leaf heap id of every row of ``X``."""
        return self.nearest_region(check_array(X, dtype=float))

    def transform(self, X):
        """Euclidean distance from every row of ``X`` to every leaf centroid."""
        return np.sqrt(_sq_dist(check_array(X, dtype=float), self.leaf_centroids_))

    def save(self, path):
        """Write the codebook as text: a header, then ``node c_1 ... c_d`` per line."""
        check_is_fitted(self, "node_centroids_")
        lines = [f"# depth={self.depth} dim={self.node_centroids_.shape[1]}"]
        for node in range(1, self.node_centroids_.shape[0]):
            values = " ".join(repr(float(v)) for v in self.node_centroids_[node])
            lines.append(f"{node} {values}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text().splitlines()
        header = dict(item.split("=") for item in text[0].lstrip("# ").split())
        depth, dim = int(header["depth"]), int(header["dim"])
        nodes = np.full((2 ** (depth + 1), dim), np.nan)
        for line in text[1:]:
            if line.strip():
                parts = line.split()
                nodes[int(parts[0])] = [float(v) for v in parts[1:]]
        vq = cls(depth=depth)
        vq.node_centroids_ = nodes
        return vq
