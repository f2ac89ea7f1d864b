"""From-scratch random forest for the binary bonafide/spoof decision.

CART-style greedy trees: at each node a seeded subset of features is drawn,
candidate thresholds are the midpoints between consecutive sorted unique
values, and the split maximizing impurity decrease (gini or entropy) wins.
Trees grow until pure, until no positive-gain split exists, or to max_depth.
Each tree of a forest trains on an independent bootstrap seeded by
(seed + tree_index), so any execution order produces the identical model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EmptyDataset, LayoutMismatch

DEFAULT_GRID_TREES = (10, 100, 500, 1000)
CRITERIA = ("gini", "entropy")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # n x n_features
    labels: np.ndarray  # n, values in {0, 1}
    record_ids: tuple[str, ...]
    layout_hash: str
    system_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))

    @property
    def n_records(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    criterion: str = "gini"
    features_per_split: int | None = None  # default floor(sqrt(n_features))
    seed: int = 0
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")


@dataclass
class Tree:
    """Flat node arrays; children of -1 mark a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)  # [n_class0, n_class1]
    gain: list[float] = field(default_factory=list)

    def leaf_class(self, node: int) -> int:
        c0, c1 = self.counts[node]
        return 1 if c1 > c0 else 0

    def predict_one(self, x: np.ndarray) -> int:
        node = 0
        while self.left[node] != -1:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.leaf_class(node)


@dataclass(frozen=True)
class TrainedModel:
    trees: tuple[Tree, ...]
    config: ForestConfig
    layout_hash: str


def _impurity(counts0: np.ndarray, counts1: np.ndarray, total: np.ndarray, criterion: str) -> np.ndarray:
    p0 = counts0 / total
    p1 = counts1 / total
    if criterion == "gini":
        return 1.0 - p0 * p0 - p1 * p1
    with np.errstate(divide="ignore", invalid="ignore"):
        e0 = np.where(p0 > 0.0, p0 * np.log2(p0), 0.0)
        e1 = np.where(p1 > 0.0, p1 * np.log2(p1), 0.0)
    return -(e0 + e1)


def _best_split(x: np.ndarray, y: np.ndarray, criterion: str, min_leaf: int):
    """Best (threshold, gain) for one feature at one node, or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = xs.shape[0]
    cut = np.nonzero(xs[:-1] < xs[1:])[0]  # split after position i
    if cut.size == 0:
        return None
    n_left = cut + 1
    n_right = n - n_left
    if min_leaf > 1:
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]
        if cut.size == 0:
            return None
    ones = np.cumsum(ys)
    ones_left = ones[cut]
    ones_right = ones[-1] - ones_left
    imp_left = _impurity(n_left - ones_left, ones_left, n_left, criterion)
    imp_right = _impurity(n_right - ones_right, ones_right, n_right, criterion)
    total_ones = ones[-1]
    imp_parent = _impurity(np.array([n - total_ones]), np.array([total_ones]),
                           np.array([n]), criterion)[0]
    gain = imp_parent - (n_left * imp_left + n_right * imp_right) / n
    best = int(np.argmax(gain))
    threshold = 0.5 * (xs[cut[best]] + xs[cut[best] + 1])
    return float(threshold), float(gain[best])


def _grow(tree: Tree, X: np.ndarray, y: np.ndarray, rows: np.ndarray,
          config: ForestConfig, n_features_split: int, rng: np.random.Generator) -> None:
    """Depth-first, left-child-first growth with an explicit stack."""
    stack: list[tuple[np.ndarray, int, int, int]] = [(rows, 0, -1, 0)]
    while stack:
        node_rows, depth, parent, side = stack.pop()
        node = len(tree.feature)
        if parent >= 0:
            (tree.left if side == 0 else tree.right)[parent] = node
        ones = int(y[node_rows].sum())
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.counts.append([node_rows.size - ones, ones])
        tree.gain.append(0.0)

        pure = ones == 0 or ones == node_rows.size
        at_depth = config.max_depth is not None and depth >= config.max_depth
        if pure or at_depth or node_rows.size < 2 * config.min_samples_leaf:
            continue

        candidates = rng.choice(X.shape[1], size=n_features_split, replace=False)
        # zero-gain splits are accepted (like sklearn): XOR-style data needs a
        # neutral first cut before any purity shows up; recursion still ends
        # because both sides are strictly smaller
        best_gain = -np.inf
        best_feature = -1
        best_threshold = 0.0
        for f in candidates:
            found = _best_split(X[node_rows, f], y[node_rows], config.criterion,
                                config.min_samples_leaf)
            if found is not None and found[1] > best_gain:
                best_threshold, best_gain = found
                best_feature = int(f)
        if best_feature < 0:
            continue

        tree.feature[node] = best_feature
        tree.threshold[node] = best_threshold
        tree.gain[node] = best_gain
        mask = X[node_rows, best_feature] <= best_threshold
        # push right first so the left child is grown (and numbered) first
        stack.append((node_rows[~mask], depth + 1, node, 1))
        stack.append((node_rows[mask], depth + 1, node, 0))


def _resolve_features_per_split(config: ForestConfig, n_features: int) -> int:
    k = config.features_per_split
    if k is None:
        k = max(1, int(np.sqrt(n_features)))
    if not (1 <= k <= n_features):
        raise ValueError(f"features_per_split {k} out of range for {n_features} features")
    return k


def train_tree(data: LabeledDataset, config: ForestConfig, tree_seed: int) -> Tree:
    """Grow one CART tree on the whole dataset (no bootstrap here)."""
    if data.n_records == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    rng = np.random.default_rng(tree_seed)
    tree = Tree()
    rows = np.arange(data.n_records)
    k = _resolve_features_per_split(config, data.features.shape[1])
    _grow(tree, data.features, data.labels, rows, config, k, rng)
    return tree


def train_forest(data: LabeledDataset, config: ForestConfig) -> TrainedModel:
    """Train n_trees trees, each on an independent seeded bootstrap."""
    if data.n_records == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if len(np.unique(data.labels)) < 2:
        raise EmptyDataset("training data must contain both classes")
    n = data.n_records
    k = _resolve_features_per_split(config, data.features.shape[1])
    trees = []
    for t in range(config.n_trees):
        seed = config.seed + t
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        tree = Tree()
        _grow(tree, data.features, data.labels, np.sort(rows), config, k,
              np.random.default_rng(seed))
        trees.append(tree)
    return TrainedModel(trees=tuple(trees), config=config, layout_hash=data.layout_hash)


def predict(model: TrainedModel, features: np.ndarray) -> tuple[int, float]:
    """Majority vote over trees; score is the fraction voting spoof.

    A 50/50 tie resolves to bonafide (label 0).
    """
    x = np.asarray(features, dtype=np.float64)
    votes = sum(tree.predict_one(x) for tree in model.trees)
    score = votes / len(model.trees)
    return (1 if score > 0.5 else 0), score


def _tree_votes(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Level-synchronous traversal of one tree for all rows at once."""
    feature = np.asarray(tree.feature, dtype=np.int64)
    threshold = np.asarray(tree.threshold)
    left = np.asarray(tree.left, dtype=np.int64)
    right = np.asarray(tree.right, dtype=np.int64)
    counts = np.asarray(tree.counts, dtype=np.int64)
    nodes = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        feat = feature[nodes]
        walking = feat >= 0
        if not walking.any():
            break
        idx = np.nonzero(walking)[0]
        go_left = X[idx, feat[idx]] <= threshold[nodes[idx]]
        nodes[idx] = np.where(go_left, left[nodes[idx]], right[nodes[idx]])
    return (counts[nodes, 1] > counts[nodes, 0]).astype(np.int64)


def predict_batch(model: TrainedModel, dataset: LabeledDataset) -> np.ndarray:
    """Labels for every record; identical to predict() row by row."""
    if dataset.layout_hash != model.layout_hash:
        raise LayoutMismatch(
            f"features layout {dataset.layout_hash} != model layout {model.layout_hash}"
        )
    X = dataset.features
    votes = np.zeros(X.shape[0], dtype=np.int64)
    for tree in model.trees:
        votes += _tree_votes(tree, X)
    return (votes * 2 > len(model.trees)).astype(np.int64)


def accuracy(model: TrainedModel, dataset: LabeledDataset) -> float:
    preds = predict_batch(model, dataset)
    return float(np.mean(preds == dataset.labels))


@dataclass(frozen=True)
class GridCell:
    n_trees: int
    criterion: str
    dev_accuracy: float


def default_grid(seed: int = 0) -> list[ForestConfig]:
    return [
        ForestConfig(n_trees=n, criterion=c, seed=seed)
        for n in DEFAULT_GRID_TREES
        for c in CRITERIA
    ]


def grid_search(
    train: LabeledDataset, dev: LabeledDataset, grid: list[ForestConfig] | None = None,
    seed: int = 0,
) -> tuple[TrainedModel, list[GridCell]]:
    """Train every grid cell, report dev accuracy, return the best model.

    Ties prefer fewer trees, then gini.
    """
    if train.layout_hash != dev.layout_hash:
        raise LayoutMismatch(
            f"train layout {train.layout_hash} != dev layout {dev.layout_hash}"
        )
    if grid is None:
        grid = default_grid(seed)
    report = []
    best: tuple[float, int, int, TrainedModel] | None = None
    for config in grid:
        model = train_forest(train, config)
        acc = accuracy(model, dev)
        report.append(GridCell(config.n_trees, config.criterion, acc))
        rank = (-acc, config.n_trees, CRITERIA.index(config.criterion))
        if best is None or rank < best[:3]:
            best = (*rank, model)
    assert best is not None
    return best[3], report


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT = "fdspoof-forest-v1"


def save_model(model: TrainedModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "config": {
            "n_trees": model.config.n_trees,
            "criterion": model.config.criterion,
            "features_per_split": model.config.features_per_split,
            "seed": model.config.seed,
            "max_depth": model.config.max_depth,
            "min_samples_leaf": model.config.min_samples_leaf,
            "bootstrap": model.config.bootstrap,
        },
        "layout_hash": model.layout_hash,
        "trees": [
            {
                "feature": tree.feature,
                "threshold": tree.threshold,
                "left": tree.left,
                "right": tree.right,
                "counts": tree.counts,
                "gain": tree.gain,
            }
            for tree in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_model(path: str | Path) -> TrainedModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise LayoutMismatch(f"unknown model format {doc.get('format')!r}")
    config = ForestConfig(**doc["config"])
    trees = tuple(
        Tree(
            feature=t["feature"],
            threshold=t["threshold"],
            left=t["left"],
            right=t["right"],
            counts=t["counts"],
            gain=t["gain"],
        )
        for t in doc["trees"]
    )
    return TrainedModel(trees=trees, config=config, layout_hash=doc["layout_hash"])
