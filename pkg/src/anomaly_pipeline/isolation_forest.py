"""Isolation forest: random isolation trees on subsamples, path-length scoring.

Score for a point is S = 2^(-E(h)/c(n)) where E(h) averages path lengths
over the trees and c(n) normalizes by the expected path length of an
unsuccessful binary search over the subsample size. A point the trees
isolate quickly scores near 1; an interior point scores below 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

EULER_MASCHERONI = 0.5772156649
_EXACT_HARMONIC_LIMIT = 10_000

DEFAULT_TREE_COUNT = 100
DEFAULT_SUBSAMPLE = 256


def c_normalizer(n: int) -> float:
    """Average unsuccessful-search path length: c(n) = 2 H(n-1) - 2 (n-1)/n.

    The harmonic number is summed exactly up to 10^4 and approximated by
    ln(n-1) + Euler's constant beyond that.
    """
    if n < 2:
        raise ValueError(f"c_normalizer needs n >= 2, got {n}")
    if n - 1 <= _EXACT_HARMONIC_LIMIT:
        harmonic = float(np.sum(1.0 / np.arange(1, n)))
    else:
        harmonic = math.log(n - 1) + EULER_MASCHERONI
    return 2.0 * harmonic - 2.0 * (n - 1) / n


@dataclass
class TreeNode:
    """Internal node (feature, value, children) or leaf (count only)."""

    count: int
    feature: int | None = None
    value: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class IsolationTree:
    root: TreeNode
    height_limit: int


@dataclass
class IsolationForest:
    trees: list[IsolationTree] = field(default_factory=list)
    subsample_size: int = DEFAULT_SUBSAMPLE
    tree_count: int = DEFAULT_TREE_COUNT
    seed: int = 0
    dimension: int | None = None

    @property
    def fitted(self) -> bool:
        return bool(self.trees)


def _grow(rows: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> TreeNode:
    n = rows.shape[0]
    if n <= 1 or depth >= limit:
        return TreeNode(count=n)
    # Only features with spread can produce a split strictly inside (min, max).
    mins = rows.min(axis=0)
    maxs = rows.max(axis=0)
    usable = np.flatnonzero(maxs > mins)
    if usable.size == 0:
        return TreeNode(count=n)
    feature = int(usable[rng.integers(usable.size)])
    value = float(rng.uniform(mins[feature], maxs[feature]))
    mask = rows[:, feature] < value
    # A draw exactly equal to the min sends everything right; force progress.
    if not mask.any() or mask.all():
        return TreeNode(count=n)
    return TreeNode(
        count=n,
        feature=feature,
        value=value,
        left=_grow(rows[mask], depth + 1, limit, rng),
        right=_grow(rows[~mask], depth + 1, limit, rng),
    )


def fit_forest(data: np.ndarray, tree_count: int = DEFAULT_TREE_COUNT,
               subsample_size: int = DEFAULT_SUBSAMPLE, seed: int = 0) -> IsolationForest:
    """Build tree_count isolation trees on independent uniform subsamples.

    Each tree draws from its own RNG stream keyed (seed, tree index), so a
    parallel build would produce the same forest as this serial one.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError(f"fit_forest needs a 2D matrix with >= 2 rows, got shape {data.shape}")
    if tree_count < 1:
        raise ConfigError(f"tree_count must be >= 1, got {tree_count}")
    if subsample_size < 2:
        raise ConfigError(f"subsample_size must be >= 2, got {subsample_size}")
    n = min(subsample_size, data.shape[0])
    limit = math.ceil(math.log2(n))
    trees = []
    for t in range(tree_count):
        rng = np.random.default_rng([seed, t])
        pick = rng.choice(data.shape[0], size=n, replace=False)
        trees.append(IsolationTree(root=_grow(data[pick], 0, limit, rng), height_limit=limit))
    return IsolationForest(
        trees=trees, subsample_size=n, tree_count=tree_count, seed=seed,
        dimension=data.shape[1],
    )


def path_length(tree: IsolationTree, x: np.ndarray) -> float:
    """Edges from root to x's leaf, plus c(m) when the leaf holds m > 1 samples."""
    node = tree.root
    edges = 0
    while not node.is_leaf:
        node = node.left if x[node.feature] < node.value else node.right
        edges += 1
    if node.count > 1:
        return edges + c_normalizer(node.count)
    return float(edges)


def _batch_path_lengths(tree: IsolationTree, rows: np.ndarray) -> np.ndarray:
    """Path length for every row at once via recursive index partitioning."""
    out = np.empty(rows.shape[0])

    def walk(node: TreeNode, idx: np.ndarray, depth: int):
        if node.is_leaf:
            adj = c_normalizer(node.count) if node.count > 1 else 0.0
            out[idx] = depth + adj
            return
        left = rows[idx, node.feature] < node.value
        walk(node.left, idx[left], depth + 1)
        walk(node.right, idx[~left], depth + 1)

    walk(tree.root, np.arange(rows.shape[0]), 0)
    return out


def score(forest: IsolationForest, x: np.ndarray) -> float:
    """Anomaly score S = 2^(-E(h(x)) / c(subsample_size)) in (0, 1)."""
    return float(score_batch(forest, np.asarray(x, dtype=np.float64)[None])[0])


def score_batch(forest: IsolationForest, rows: np.ndarray) -> np.ndarray:
    if not forest.fitted:
        raise DataError("forest has no trees; fit it first")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or (forest.dimension is not None and rows.shape[1] != forest.dimension):
        raise DataError(
            f"expected rows of dimension {forest.dimension}, got shape {rows.shape}"
        )
    if rows.shape[0] == 0:
        return np.empty(0)
    totals = np.zeros(rows.shape[0])
    for tree in forest.trees:
        totals += _batch_path_lengths(tree, rows)
    mean_path = totals / len(forest.trees)
    return np.power(2.0, -mean_path / c_normalizer(forest.subsample_size))


def partition_outliers(forest: IsolationForest, rows: np.ndarray,
                       contamination: float | None = None,
                       score_threshold: float | None = None,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Split row indices into (inliers, outliers) by score.

    Exactly one of contamination / score_threshold must be given. In
    contamination mode the top ceil(fraction * count) scores are outliers,
    ties broken toward the lower row index. Threshold mode flags S > t.
    """
    if (contamination is None) == (score_threshold is None):
        raise ConfigError("supply exactly one of contamination or score_threshold")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    scores = score_batch(forest, rows)
    if score_threshold is not None:
        outlier_mask = scores > score_threshold
        idx = np.arange(rows.shape[0])
        return idx[~outlier_mask], idx[outlier_mask]
    if not 0.0 < contamination < 1.0:
        raise ConfigError(f"contamination must lie in (0, 1), got {contamination}")
    k = math.ceil(contamination * rows.shape[0])
    # Sort by (-score, index): equal scores keep the earlier row first.
    order = np.lexsort((np.arange(scores.size), -scores))
    outliers = np.sort(order[:k])
    inliers = np.sort(order[k:])
    return inliers, outliers


def forest_to_document(forest: IsolationForest) -> dict:
    """JSON-ready dump of the forest (config plus per-tree node lists)."""

    def encode(node: TreeNode) -> dict:
        if node.is_leaf:
            return {"count": node.count}
        return {
            "count": node.count,
            "feature": node.feature,
            "value": node.value,
            "left": encode(node.left),
            "right": encode(node.right),
        }

    return {
        "format": "anomaly-pipeline-iforest/1",
        "subsample_size": forest.subsample_size,
        "tree_count": forest.tree_count,
        "seed": forest.seed,
        "dimension": forest.dimension,
        "trees": [
            {"height_limit": t.height_limit, "root": encode(t.root)} for t in forest.trees
        ],
    }


def forest_from_document(doc: dict) -> IsolationForest:
    if doc.get("format") != "anomaly-pipeline-iforest/1":
        raise ConfigError(f"unrecognized forest document format: {doc.get('format')!r}")

    def decode(node: dict) -> TreeNode:
        if "feature" not in node:
            return TreeNode(count=node["count"])
        return TreeNode(
            count=node["count"],
            feature=node["feature"],
            value=node["value"],
            left=decode(node["left"]),
            right=decode(node["right"]),
        )

    return IsolationForest(
        trees=[
            IsolationTree(root=decode(t["root"]), height_limit=t["height_limit"])
            for t in doc["trees"]
        ],
        subsample_size=doc["subsample_size"],
        tree_count=doc["tree_count"],
        seed=doc["seed"],
        dimension=doc.get("dimension"),
    )
