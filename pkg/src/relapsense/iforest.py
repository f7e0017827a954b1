"""Isolation Forest novelty detector, built from scratch.

Trees recursively split on a uniformly chosen feature at a uniform point
strictly between that feature's min and max within the node, stopping at
depth ceil(log2(psi)), single rows, or all-duplicate rows. A sample's
path length plus the c(n) adjustment for unbuilt subtrees, averaged over
trees, gives the anomaly score s = 2^(-E[h]/c(psi)) in (0, 1].

Per-tree RNG seeds derive from the master seed via splitmix64, so
training is reproducible regardless of build order or parallelism.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataContractError

EULER_GAMMA = 0.5772156649015329

_M64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 step; used to expand the master seed per tree."""
    z = (state + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    return splitmix64((master + index) & _M64)


def avg_path_length_c(n: int) -> float:
    """Expected unsuccessful-search path length in a BST of n points.

    c(n) = 2 H(n-1) - 2 (n-1)/n with H(i) ~ ln(i) + Euler-Mascheroni;
    c(0) = c(1) = 0.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n <= 1:
        return 0.0
    h = math.log(n - 1) + EULER_GAMMA
    return 2.0 * h - 2.0 * (n - 1) / n


@dataclass
class TreeNode:
    """Internal node (feature/value/children) or leaf (size only)."""

    size: int = 0
    split_feature: int = -1
    split_value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"size": self.size}
        return {
            "feature": self.split_feature,
            "value": self.split_value,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeNode":
        if "size" in doc:
            return cls(size=int(doc["size"]))
        return cls(
            split_feature=int(doc["feature"]),
            split_value=float(doc["value"]),
            left=cls.from_dict(doc["left"]),
            right=cls.from_dict(doc["right"]),
        )


def _build_tree(X: np.ndarray, idx: np.ndarray, depth: int, max_depth: int, rng) -> TreeNode:
    n = idx.size
    if n <= 1 or depth >= max_depth:
        return TreeNode(size=n)
    sub = X[idx]
    mins = sub.min(axis=0)
    maxs = sub.max(axis=0)
    candidates = np.flatnonzero(maxs > mins)
    if candidates.size == 0:  # all rows identical
        return TreeNode(size=n)
    f = int(candidates[rng.integers(candidates.size)])
    lo, hi = mins[f], maxs[f]
    value = float(rng.uniform(lo, hi))
    for _ in range(8):  # keep the split strictly inside (min, max)
        if lo < value < hi:
            break
        value = float(rng.uniform(lo, hi))
    else:
        value = float(np.nextafter(lo, hi))  # adjacent floats: smallest interior point
        if not lo < value < hi:
            return TreeNode(size=n)
    go_left = X[idx, f] < value
    return TreeNode(
        size=n,
        split_feature=f,
        split_value=value,
        left=_build_tree(X, idx[go_left], depth + 1, max_depth, rng),
        right=_build_tree(X, idx[~go_left], depth + 1, max_depth, rng),
    )


def path_length(tree: TreeNode, x: np.ndarray) -> float:
    """Edges to the reached leaf plus c(leaf size) for the unbuilt subtree."""
    node = tree
    depth = 0
    while not node.is_leaf:
        node = node.left if x[node.split_feature] < node.split_value else node.right
        depth += 1
    return depth + avg_path_length_c(node.size)


def _path_lengths_batch(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.zeros(len(X))
    stack = [(tree, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = depth + avg_path_length_c(node.size)
            continue
        go_left = X[idx, node.split_feature] < node.split_value
        stack.append((node.left, idx[go_left], depth + 1))
        stack.append((node.right, idx[~go_left], depth + 1))
    return out


@dataclass
class ForestModel:
    trees: list[TreeNode]
    n_trees: int
    psi: int  # requested subsample size
    psi_used: int  # actual per-tree subsample size, min(psi, N)
    seed: int
    column_names: list[str] = field(default_factory=list)

    def to_json(self, path) -> None:
        doc = {
            "meta": {
                "n_trees": self.n_trees,
                "psi": self.psi,
                "psi_used": self.psi_used,
                "seed": self.seed,
                "columns": self.column_names,
            },
            "trees": [t.to_dict() for t in self.trees],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "ForestModel":
        doc = json.loads(Path(path).read_text())
        meta = doc["meta"]
        return cls(
            trees=[TreeNode.from_dict(t) for t in doc["trees"]],
            n_trees=int(meta["n_trees"]),
            psi=int(meta["psi"]),
            psi_used=int(meta["psi_used"]),
            seed=int(meta["seed"]),
            column_names=list(meta["columns"]),
        )


def fit(
    X: np.ndarray,
    n_trees: int = 100,
    psi: int = 256,
    seed: int = 0,
    column_names: list[str] | None = None,
    labels: np.ndarray | None = None,
) -> ForestModel:
    """Train a forest on inlier rows.

    `labels`, when given, is checked: any 'relapse' row is a fatal
    contract violation (novelty detection trains on normal data only).
    """
    X = np.asarray(X, dtype=float)
    if labels is not None and np.any(np.asarray(labels) == "relapse"):
        raise DataContractError("training matrix contains relapse-labeled rows")
    if X.ndim != 2 or len(X) < 2:
        raise DataContractError("training matrix needs at least 2 rows")
    psi_used = min(psi, len(X))
    max_depth = math.ceil(math.log2(psi_used))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, i))
        idx = rng.choice(len(X), size=psi_used, replace=False)
        trees.append(_build_tree(X, idx, 0, max_depth, rng))
    return ForestModel(
        trees=trees,
        n_trees=n_trees,
        psi=psi,
        psi_used=psi_used,
        seed=seed,
        column_names=list(column_names or []),
    )


def mean_path_length(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = np.zeros(len(X))
    for tree in model.trees:
        total += _path_lengths_batch(tree, X)
    return total / len(model.trees)


def score_from_path(mean_path: np.ndarray | float, psi_used: int) -> np.ndarray | float:
    return 2.0 ** (-np.asarray(mean_path, dtype=float) / avg_path_length_c(psi_used))


def score(model: ForestModel, x: np.ndarray) -> float:
    """Anomaly score in (0, 1]; higher means more anomalous."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != _dimension(model):
        raise DataContractError("scoring vector dimension does not match the model")
    eh = mean_path_length(model, x[None, :])[0]
    return float(score_from_path(eh, model.psi_used))


def score_matrix(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != _dimension(model):
        raise DataContractError("scoring matrix dimension does not match the model")
    return np.asarray(score_from_path(mean_path_length(model, X), model.psi_used))


def _dimension(model: ForestModel) -> int:
    if model.column_names:
        return len(model.column_names)
    # fall back to the deepest split feature seen
    best = 0

    def walk(node: TreeNode):
        nonlocal best
        if not node.is_leaf:
            best = max(best, node.split_feature + 1)
            walk(node.left)
            walk(node.right)

    for t in model.trees:
        walk(t)
    return best


def score_days(
    model: ForestModel, frame: pd.DataFrame, feature_columns: list[str], pooling: str = "mean"
) -> pd.DataFrame:
    """Pool row scores into one score per (subject, date).

    Returns a frame with subject_id, date, label, split, n_rows, score.
    Days enter only through their scoreable rows; days absent from the
    matrix are the caller's 'unscoreable' set.
    """
    if list(feature_columns) != list(model.column_names):
        raise DataContractError("matrix columns do not match the trained model")
    scores = score_matrix(model, frame[feature_columns].to_numpy(dtype=float))
    pooled = (
        frame.assign(_score=scores)
        .groupby(["subject_id", "date"], sort=True)
        .agg(
            label=("label", "first"),
            split=("split", "first"),
            n_rows=("_score", "size"),
            score=("_score", pooling),
        )
        .reset_index()
    )
    return pooled
