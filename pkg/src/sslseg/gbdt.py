"""Multiclass gradient-boosted trees with second-order (Newton) splits.

One regression tree per class per round, all grown from the softmax
cross-entropy gradients of the margins at the start of the round.  Splits
are searched on quantile-binned features; ``exact_splits=True`` bins every
distinct value instead, which makes the search exhaustive.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgumentError

NUM_CLASSES = 4
MIN_SPLIT_GAIN = 1e-12
MIN_HESSIAN = 1e-16
LOSS_SLACK = 1e-9
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class GbdtConfig:
    num_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    l2_reg: float = 1.0
    min_child_weight: float = 1.0
    histogram_bins: int = 64
    row_subsample: float = 0.8
    seed: int = 0
    exact_splits: bool = False

    def __post_init__(self):
        if self.num_rounds < 0:
            raise InvalidArgumentError("num_rounds must be >= 0")
        if self.max_depth < 0:
            raise InvalidArgumentError("max_depth must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if not 0.0 < self.row_subsample <= 1.0:
            raise InvalidArgumentError("row_subsample must be in (0, 1]")
        if self.l2_reg < 0 or self.min_child_weight < 0:
            raise InvalidArgumentError("l2_reg and min_child_weight must be >= 0")
        if self.histogram_bins < 2:
            raise InvalidArgumentError("histogram_bins must be >= 2")


@dataclass(frozen=True)
class Tree:
    """Pre-order node arrays; ``feature == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go to ``left``.
    """

    class_index: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def num_nodes(self):
        return int(self.feature.shape[0])

    def depth(self):
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def leaf_weight_sum(self):
        return float(self.value[self.feature < 0].sum())

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return self.class_index == other.class_index and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "value")
        )


@dataclass
class TreeEnsemble:
    num_features: int
    learning_rate: float
    trees: list = field(default_factory=list)
    num_classes: int = NUM_CLASSES
    # training log-loss after 0, 1, ..., num_rounds rounds; not serialised
    loss_history: list = field(default_factory=list, compare=False, repr=False)
    _flat: tuple = field(default=None, init=False, compare=False, repr=False)

    @property
    def num_rounds(self):
        return len(self.trees) // self.num_classes

    def num_nodes(self):
        return sum(t.num_nodes for t in self.trees)

    def flattened(self):
        """All trees packed into shared node arrays with absolute child indices."""
        if self._flat is None:
            feats, thr, left, right, val, roots, cls = [], [], [], [], [], [], []
            offset = 0
            for t in self.trees:
                roots.append(offset)
                cls.append(t.class_index)
                feats.append(t.feature)
                thr.append(t.threshold)
                left.append(np.where(t.left >= 0, t.left + offset, -1))
                right.append(np.where(t.right >= 0, t.right + offset, -1))
                val.append(t.value)
                offset += t.num_nodes

            def cat(parts, dtype):
                return np.ascontiguousarray(np.concatenate(parts) if parts else np.empty(0), dtype=dtype)

            self._flat = (
                cat(feats, np.int64),
                cat(thr, np.float64),
                cat(left, np.int64),
                cat(right, np.int64),
                cat(val, np.float64),
                np.asarray(roots, dtype=np.int64),
                np.asarray(cls, dtype=np.int64),
            )
        return self._flat


def softmax(margins):
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(margins, labels):
    z = margins - margins.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def _check_features(features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidArgumentError(f"features must be a non-empty N x C matrix, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("features contain NaN or Inf")
    return np.ascontiguousarray(x)


def bin_edges(column, max_bins, exact=False):
    """Split candidates for one feature, each strictly between two observed values.

    ``exact`` returns every midpoint between consecutive distinct values;
    otherwise at most ``max_bins - 1`` edges placed at sample quantiles.
    """
    distinct = np.unique(column)
    if distinct.size <= 1:
        return np.empty(0)
    if exact or distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    ordered = np.sort(column)
    n = ordered.size
    cuts = ordered[(np.arange(1, max_bins) * n) // max_bins]
    nxt = np.searchsorted(distinct, cuts, side="right")
    ok = nxt < distinct.size
    lower = distinct[nxt[ok] - 1]
    upper = distinct[nxt[ok]]
    return np.unique((lower + upper) / 2.0)


def quantize(x, max_bins, exact=False):
    """Bin every feature; returns ``(bins, edges)`` with ``bin <= k  <=>  x <= edges[k]``."""
    edges = [bin_edges(x[:, f], max_bins, exact) for f in range(x.shape[1])]
    widest = max(len(e) for e in edges) + 1
    dtype = np.uint8 if widest <= 256 else (np.uint16 if widest <= 65536 else np.int64)
    bins = np.empty(x.shape, dtype=dtype)
    for f, e in enumerate(edges):
        bins[:, f] = np.searchsorted(e, x[:, f], side="left")
    return bins, edges


class _TreeGrower:
    def __init__(self, bins, edges, grad, hess, config, class_index, subtract=True):
        self.bins = bins
        self.edges = edges
        self.grad = grad
        self.hess = hess
        self.cfg = config
        self.class_index = class_index
        self.subtract = subtract
        self.bins_per_feature = np.array([len(e) + 1 for e in edges], dtype=np.int64)
        self.n_bins = int(self.bins_per_feature.max())
        self.nodes = []  # [feature, threshold, left, right, value]

    def _hist(self, rows):
        return kernels.build_histogram(self.bins, rows, self.grad, self.hess, self.n_bins)

    def grow(self, rows):
        hist = self._hist(rows) if self.cfg.max_depth > 0 else None
        self._grow(rows, hist, 0)
        arr = list(zip(*self.nodes))
        return Tree(
            class_index=self.class_index,
            feature=np.asarray(arr[0], dtype=np.int64),
            threshold=np.asarray(arr[1], dtype=np.float64),
            left=np.asarray(arr[2], dtype=np.int64),
            right=np.asarray(arr[3], dtype=np.int64),
            value=np.asarray(arr[4], dtype=np.float64),
        )

    def _grow(self, rows, hist, depth):
        cfg = self.cfg
        g_sum = float(self.grad[rows].sum())
        h_sum = float(self.hess[rows].sum())
        node = len(self.nodes)
        self.nodes.append(None)
        if hist is not None and depth < cfg.max_depth and rows.size >= 2:
            gain, f, b = kernels.best_split(
                hist, self.bins_per_feature, g_sum, h_sum, cfg.l2_reg, cfg.min_child_weight
            )
            if f >= 0 and gain > MIN_SPLIT_GAIN:
                go_left = self.bins[rows, f] <= b
                lrows, rrows = rows[go_left], rows[~go_left]
                lhist = rhist = None
                if depth + 1 < cfg.max_depth:
                    if not self.subtract:
                        lhist, rhist = self._hist(lrows), self._hist(rrows)
                    elif lrows.size <= rrows.size:
                        lhist = self._hist(lrows)
                        rhist = hist - lhist
                    else:
                        rhist = self._hist(rrows)
                        lhist = hist - rhist
                left = self._grow(lrows, lhist, depth + 1)
                right = self._grow(rrows, rhist, depth + 1)
                self.nodes[node] = (f, float(self.edges[f][b]), left, right, 0.0)
                return node
        self.nodes[node] = (-1, 0.0, -1, -1, -g_sum / (h_sum + cfg.l2_reg))
        return node


def _add_tree_margins(x, tree, learning_rate, margins):
    kernels.predict_margins(
        x, tree.feature, tree.threshold, tree.left, tree.right, tree.value,
        np.zeros(1, dtype=np.int64), np.array([tree.class_index], dtype=np.int64),
        learning_rate, margins,
    )


def fit_gbdt(features, labels, config=None, num_classes=NUM_CLASSES):
    """Boost ``config.num_rounds`` rounds of ``num_classes`` trees each."""
    config = config or GbdtConfig()
    x = _check_features(features)
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise InvalidArgumentError("labels must be a vector with one entry per feature row")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InvalidArgumentError("labels must be integers")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= num_classes:
        raise InvalidArgumentError(f"labels must lie in 0..{num_classes - 1}")

    n = x.shape[0]
    bins, edges = quantize(x, config.histogram_bins, config.exact_splits)
    onehot = (y[:, None] == np.arange(num_classes)).astype(np.float64)
    margins = np.zeros((n, num_classes))
    ensemble = TreeEnsemble(num_features=x.shape[1], learning_rate=config.learning_rate,
                            num_classes=num_classes)
    ensemble.loss_history.append(log_loss(margins, y))
    rng = np.random.default_rng(config.seed)
    all_rows = np.arange(n, dtype=np.int64)

    for _ in range(config.num_rounds):
        p = softmax(margins)
        grad = p - onehot
        hess = np.maximum(p * (1.0 - p), MIN_HESSIAN)
        if config.row_subsample < 1.0:
            rows = np.flatnonzero(rng.random(n) < config.row_subsample).astype(np.int64)
            if rows.size == 0:
                rows = all_rows
        else:
            rows = all_rows
        round_trees = []
        for k in range(num_classes):
            grower = _TreeGrower(bins, edges, np.ascontiguousarray(grad[:, k]),
                                 np.ascontiguousarray(hess[:, k]), config, k,
                                 subtract=not config.exact_splits)
            round_trees.append(grower.grow(rows))
        before = margins.copy()
        prev_loss = ensemble.loss_history[-1]
        for _attempt in range(MAX_BACKTRACKS + 1):
            margins = before.copy()
            for tree in round_trees:
                _add_tree_margins(x, tree, config.learning_rate, margins)
            loss = log_loss(margins, y)
            if loss <= prev_loss + LOSS_SLACK:
                break
            # a subsampled round overshot on the full set: halve its leaf weights
            round_trees = [_scaled(t, 0.5) for t in round_trees]
        ensemble.trees.extend(round_trees)
        ensemble.loss_history.append(loss)
    return ensemble


def _scaled(tree, factor):
    return Tree(tree.class_index, tree.feature, tree.threshold, tree.left, tree.right,
                tree.value * factor)


def predict_margins(ensemble, features):
    x = _check_features(features)
    if x.shape[1] != ensemble.num_features:
        raise InvalidArgumentError(
            f"expected {ensemble.num_features} features, got {x.shape[1]}"
        )
    margins = np.zeros((x.shape[0], ensemble.num_classes))
    if ensemble.trees:
        feat, thr, left, right, val, roots, cls = ensemble.flattened()
        kernels.predict_margins(x, feat, thr, left, right, val, roots, cls,
                                ensemble.learning_rate, margins)
    return margins


def predict_proba(ensemble, features):
    """Softmax class probabilities, one row per feature row."""
    return softmax(predict_margins(ensemble, features))
