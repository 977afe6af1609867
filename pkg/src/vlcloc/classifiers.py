"""Grid-label classifiers: KNN voting, extreme learning machine, random forest.

Every classifier maps an M-dim RSS vector (dB) to one of G grid labels and
the grid point's coordinates. All three are deterministic functions of the
training data, the hyperparameters and (for ELM / RF) an explicit seed.
Tie rules are fixed so repeated runs agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrainSet:
    """Training view of the fingerprints: one row per RSS vector."""

    features: np.ndarray     # (n, M) dB
    labels: np.ndarray       # (n,) grid indices in [0, G)
    grid_coords: np.ndarray  # (G, 2) meters

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        coords = np.asarray(self.grid_coords, dtype=float)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a non-empty (n, M) matrix")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must align with feature rows")
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("grid_coords must have shape (G, 2)")
        if labels.min() < 0 or labels.max() >= coords.shape[0]:
            raise ValueError("labels must index into grid_coords")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "grid_coords", coords)

    @property
    def num_grid_points(self) -> int:
        return self.grid_coords.shape[0]


@dataclass(frozen=True)
class GridPrediction:
    grid_index: int
    coords: np.ndarray  # (2,) meters


def _as_query_matrix(queries) -> np.ndarray:
    q = np.asarray(queries, dtype=float)
    if q.ndim == 1:
        q = q[np.newaxis, :]
    if q.ndim != 2:
        raise ValueError("queries must be a vector or an (n, M) matrix")
    return q


class _GridClassifier:
    """Shared prediction plumbing; subclasses implement predict_labels."""

    name: str
    train_set: TrainSet

    def predict_labels(self, queries) -> np.ndarray:
        raise NotImplementedError

    def predict(self, query) -> GridPrediction:
        label = int(self.predict_labels(query)[0])
        return GridPrediction(label, self.train_set.grid_coords[label].copy())

    def predict_coords(self, queries) -> np.ndarray:
        """(n, 2) coordinates of the predicted grid labels."""
        return self.train_set.grid_coords[self.predict_labels(queries)]


class KnnClassifier(_GridClassifier):
    """k-nearest-neighbour voting on Euclidean distance.

    Neighbour order breaks distance ties by lower training-row index; equal
    vote counts go to the label with the smaller mean neighbour distance,
    then to the lower label.
    """

    name = "knn"

    def __init__(self, train: TrainSet, k: int):
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        if k > train.features.shape[0]:
            raise ValueError(f"k = {k} exceeds the {train.features.shape[0]} training rows")
        self.train_set = train
        self.k = k
        self._sq_norms = np.einsum("ij,ij->i", train.features, train.features)

    def predict_labels(self, queries) -> np.ndarray:
        q = _as_query_matrix(queries)
        x = self.train_set.features
        labels = self.train_set.labels
        g = self.train_set.num_grid_points
        k = self.k
        out = np.empty(q.shape[0], dtype=int)
        chunk = max(1, int(4e6) // max(1, x.shape[0]))
        for start in range(0, q.shape[0], chunk):
            qc = q[start : start + chunk]
            d2 = np.maximum(
                self._sq_norms[np.newaxis, :]
                + np.einsum("ij,ij->i", qc, qc)[:, np.newaxis]
                - 2.0 * qc @ x.T,
                0.0,
            )
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
            for r in range(qc.shape[0]):
                cand = np.nonzero(d2[r] <= kth[r])[0]  # ascending index order
                order = np.argsort(d2[r, cand], kind="stable")
                nn = cand[order][:k]
                votes = np.bincount(labels[nn], minlength=g)
                top = votes.max()
                tied = np.nonzero(votes == top)[0]
                if tied.size == 1:
                    out[start + r] = tied[0]
                    continue
                dists = np.sqrt(d2[r, nn])
                means = np.array(
                    [dists[labels[nn] == lab].mean() for lab in tied]
                )
                out[start + r] = tied[np.argmin(means)]  # argmin keeps lower label on ties
        return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


class ElmClassifier(_GridClassifier):
    """Single-hidden-layer network trained in closed form.

    Input weights and biases are drawn uniformly from [-1, 1]; the output
    weights are the minimum-norm least-squares solution of
    sigmoid(X W + b) B = T for one-hot targets T, solved through SVD.
    Features are z-scored with training statistics before the hidden layer.
    """

    name = "elm"

    def __init__(self, train: TrainSet, hidden: int, seed):
        if hidden < 1:
            raise ValueError(f"hidden must be at least 1, got {hidden}")
        self.train_set = train
        self.hidden = hidden
        x = train.features
        self._mu = x.mean(axis=0)
        sigma = x.std(axis=0)
        self._sigma = np.where(sigma > 0.0, sigma, 1.0)
        rng = np.random.default_rng(seed)
        m = x.shape[1]
        self._w = rng.uniform(-1.0, 1.0, (m, hidden))
        self._b = rng.uniform(-1.0, 1.0, hidden)
        h = self._hidden_out(x)
        targets = np.zeros((x.shape[0], train.num_grid_points))
        targets[np.arange(x.shape[0]), train.labels] = 1.0
        self.output_weights = np.linalg.lstsq(h, targets, rcond=None)[0]

    def _hidden_out(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid((x - self._mu) / self._sigma @ self._w + self._b)

    def scores(self, queries) -> np.ndarray:
        """(n, G) output-layer activations."""
        return self._hidden_out(_as_query_matrix(queries)) @ self.output_weights

    def predict_labels(self, queries) -> np.ndarray:
        return np.argmax(self.scores(queries), axis=1)  # argmax: lower label wins ties


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    label: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.label >= 0


def entropy(labels: np.ndarray) -> float:
    """Shannon entropy (bits) of a label array."""
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    p = counts / labels.size
    return float(-(p * np.log2(p)).sum())


def best_stump_split(values: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(information gain, threshold) of the best single-feature threshold.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; gain is the entropy reduction of the induced two-way split.
    Returns (-inf, nan) when the feature is constant over the node.
    """
    order = np.argsort(values, kind="stable")
    vs = values[order]
    ys = labels[order]
    cuts = np.nonzero(vs[1:] > vs[:-1])[0]
    if cuts.size == 0:
        return -math.inf, math.nan

    classes, yc = np.unique(ys, return_inverse=True)
    n = ys.size
    onehot = np.zeros((n, classes.size))
    onehot[np.arange(n), yc] = 1.0
    cum = onehot.cumsum(axis=0)
    left = cum[cuts]
    total = cum[-1]

    def plogp_sum(counts):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = counts * np.log2(counts)
        return np.where(counts > 0.0, term, 0.0).sum(axis=-1)

    sizes_l = (cuts + 1).astype(float)
    sizes_r = n - sizes_l
    h_left = np.log2(sizes_l) - plogp_sum(left) / sizes_l
    h_right = np.log2(sizes_r) - plogp_sum(total - left) / sizes_r
    h_parent = math.log2(n) - plogp_sum(total) / n
    gains = h_parent - (sizes_l * h_left + sizes_r * h_right) / n
    j = int(np.argmax(gains))  # first max: smallest threshold on gain ties
    thr = 0.5 * (vs[cuts[j]] + vs[cuts[j] + 1])
    return float(gains[j]), float(thr)


class RandomForest(_GridClassifier):
    """Bootstrap forest of depth-limited trees with stump-style node tests.

    Each node test is one feature against one threshold; candidate features
    are a random subset of ceil(sqrt(M)) per node; the split maximizing
    information gain wins. Queries route left when value <= threshold.
    """

    name = "rf"

    def __init__(self, train: TrainSet, trees: int, depth: int, seed):
        if trees < 1 or depth < 1:
            raise ValueError("trees and depth must be at least 1")
        self.train_set = train
        self.trees = trees
        self.depth = depth
        rng = np.random.default_rng(seed)
        x = train.features
        y = train.labels
        n, m = x.shape
        self._n_candidates = max(1, math.ceil(math.sqrt(m)))
        self._roots = []
        for _ in range(trees):
            boot = rng.integers(0, n, n)
            self._roots.append(self._grow(x[boot], y[boot], depth, rng))

    def _grow(self, x: np.ndarray, y: np.ndarray, depth_left: int,
              rng: np.random.Generator) -> _TreeNode:
        if depth_left == 0 or y.size < 2 or np.all(y == y[0]):
            return _TreeNode(label=int(np.argmax(np.bincount(y))))
        feats = rng.choice(x.shape[1], self._n_candidates, replace=False)
        best_gain = 0.0
        best_feat = -1
        best_thr = math.nan
        for f in feats:  # drawn order breaks equal-gain ties
            gain, thr = best_stump_split(x[:, f], y)
            if gain > best_gain:
                best_gain, best_feat, best_thr = gain, int(f), thr
        if best_feat < 0:
            return _TreeNode(label=int(np.argmax(np.bincount(y))))
        mask = x[:, best_feat] <= best_thr
        return _TreeNode(
            feature=best_feat,
            threshold=best_thr,
            left=self._grow(x[mask], y[mask], depth_left - 1, rng),
            right=self._grow(x[~mask], y[~mask], depth_left - 1, rng),
        )

    @staticmethod
    def _route(node: _TreeNode, x: np.ndarray, idx: np.ndarray, out: np.ndarray):
        if node.is_leaf:
            out[idx] = node.label
            return
        mask = x[idx, node.feature] <= node.threshold
        RandomForest._route(node.left, x, idx[mask], out)
        RandomForest._route(node.right, x, idx[~mask], out)

    def tree_labels(self, queries) -> np.ndarray:
        """(trees, n) per-tree predicted labels."""
        q = _as_query_matrix(queries)
        all_labels = np.empty((len(self._roots), q.shape[0]), dtype=int)
        idx = np.arange(q.shape[0])
        for t, root in enumerate(self._roots):
            self._route(root, q, idx, all_labels[t])
        return all_labels

    def predict_labels(self, queries) -> np.ndarray:
        per_tree = self.tree_labels(queries)
        g = self.train_set.num_grid_points
        votes = np.zeros((per_tree.shape[1], g), dtype=int)
        rows = np.arange(per_tree.shape[1])
        for t in range(per_tree.shape[0]):
            votes[rows, per_tree[t]] += 1
        return np.argmax(votes, axis=1)  # lower label wins vote ties
