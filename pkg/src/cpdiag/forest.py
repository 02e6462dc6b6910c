"""Random forest over binary indicators, built from scratch.

Trees are grown to purity on bootstrap resamples with Gini splits over a
random subset of columns per node.  Binary features admit a single split
point (0 vs 1), which keeps the node search to one counting pass.  Trees
are stored as flat arrays, and every tree derives its RNG stream from
(seed, tree index) so the forest is reproducible regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .signals import N_CLASSES


@dataclass
class Tree:
    """Flat node arrays: feature < 0 marks a leaf whose class is in ``leaf``."""

    feature: np.ndarray  # (n_nodes,) int32, split column or -1
    left: np.ndarray  # (n_nodes,) int32, child for feature == 0
    right: np.ndarray  # (n_nodes,) int32, child for feature == 1
    leaf: np.ndarray  # (n_nodes,) int32, class at leaf nodes, -1 elsewhere


@dataclass
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None  # default floor(sqrt(p))
    seed: int = 0


@dataclass
class ForestModel:
    trees: list[Tree]
    oob_accuracy: float
    n_columns: int
    params: ForestParams = field(default_factory=ForestParams)


def _gini_best_split(
    x: np.ndarray, y_onehot: np.ndarray, idx: np.ndarray, candidates: np.ndarray
) -> int:
    """Best column (by weighted child Gini) among candidates, or -1 if none splits."""
    sub = x[np.ix_(idx, candidates)].astype(np.float64)
    counts1 = sub.T @ y_onehot[idx]  # (mtry, n_classes)
    total = y_onehot[idx].sum(axis=0)
    counts0 = total[None, :] - counts1
    n1 = counts1.sum(axis=1)
    n0 = counts0.sum(axis=1)
    valid = (n0 > 0) & (n1 > 0)
    if not valid.any():
        return -1
    n = len(idx)
    with np.errstate(divide="ignore", invalid="ignore"):
        gini0 = 1.0 - (counts0**2).sum(axis=1) / np.maximum(n0, 1) ** 2
        gini1 = 1.0 - (counts1**2).sum(axis=1) / np.maximum(n1, 1) ** 2
        weighted = (n0 * gini0 + n1 * gini1) / n
    weighted[~valid] = np.inf
    return int(np.argmin(weighted))


def _build_tree(x: np.ndarray, y: np.ndarray, y_onehot: np.ndarray, mtry: int, rng) -> Tree:
    p = x.shape[1]
    feature: list[int] = []
    left: list[int] = []
    right: list[int] = []
    leaf: list[int] = []

    def new_node() -> int:
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        leaf.append(-1)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        counts = np.bincount(y[idx], minlength=N_CLASSES)
        if (counts > 0).sum() <= 1:
            leaf[node] = int(np.argmax(counts))
            continue
        candidates = np.sort(rng.permutation(p)[:mtry])
        best = _gini_best_split(x, y_onehot, idx, candidates)
        if best < 0:
            leaf[node] = int(np.argmax(counts))  # exhausted: majority, ties to low code
            continue
        col = int(candidates[best])
        mask = x[idx, col] == 0
        feature[node] = col
        left_id = new_node()
        right_id = new_node()
        left[node] = left_id
        right[node] = right_id
        stack.append((left_id, idx[mask]))
        stack.append((right_id, idx[~mask]))
    return Tree(
        feature=np.array(feature, dtype=np.int32),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        leaf=np.array(leaf, dtype=np.int32),
    )


def tree_predict(tree: Tree, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.uint8))
    node = np.zeros(len(x), dtype=np.int32)
    while True:
        feats = tree.feature[node]
        active = feats >= 0
        if not active.any():
            break
        rows = np.flatnonzero(active)
        goes_right = x[rows, feats[rows]] != 0
        node[rows] = np.where(goes_right, tree.right[node[rows]], tree.left[node[rows]])
    return tree.leaf[node]


def rf_train(matrix, labels, params: ForestParams | None = None, threads: int = 1) -> ForestModel:
    """Grow the forest and compute the out-of-bag accuracy estimate."""
    params = params or ForestParams()
    x = np.asarray(matrix, dtype=np.uint8)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise InvalidInputError("matrix rows must match labels")
    n, p = x.shape
    if n == 0 or p == 0:
        raise InvalidInputError("empty training data")
    mtry = params.mtry if params.mtry is not None else max(1, int(np.sqrt(p)))
    mtry = min(mtry, p)
    y_onehot = np.zeros((n, N_CLASSES), dtype=np.float64)
    y_onehot[np.arange(n), y] = 1.0

    results = _grow_trees(x, y, y_onehot, mtry, params, threads)
    trees = [tree for tree, _ in results]
    oob_votes = np.zeros((n, N_CLASSES), dtype=np.int64)
    for (tree, boot) in results:
        oob = np.ones(n, dtype=bool)
        oob[boot] = False
        if oob.any():
            preds = tree_predict(tree, x[oob])
            oob_votes[np.flatnonzero(oob), preds] += 1
    has_vote = oob_votes.sum(axis=1) > 0
    if has_vote.any():
        oob_pred = np.argmax(oob_votes[has_vote], axis=1)
        oob_accuracy = float(np.mean(oob_pred == y[has_vote]))
    else:
        oob_accuracy = float("nan")
    return ForestModel(trees=trees, oob_accuracy=oob_accuracy, n_columns=p, params=params)


_tree_env: dict = {}


def _init_tree_worker(x, y, y_onehot, mtry, seed) -> None:
    _tree_env.update(x=x, y=y, y_onehot=y_onehot, mtry=mtry, seed=seed)


def _grow_one(tree_idx: int) -> tuple[Tree, np.ndarray]:
    x, y, y_onehot = _tree_env["x"], _tree_env["y"], _tree_env["y_onehot"]
    rng = np.random.default_rng([_tree_env["seed"], tree_idx])
    boot = rng.integers(0, len(y), len(y))
    tree = _build_tree(x[boot], y[boot], y_onehot[boot], _tree_env["mtry"], rng)
    return tree, boot


def _grow_trees(x, y, y_onehot, mtry, params: ForestParams, threads: int):
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, params.n_trees // (threads * 4))
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_init_tree_worker,
            initargs=(x, y, y_onehot, mtry, params.seed),
        ) as pool:
            return list(pool.map(_grow_one, range(params.n_trees), chunksize=chunk))
    _init_tree_worker(x, y, y_onehot, mtry, params.seed)
    return [_grow_one(t) for t in range(params.n_trees)]


def rf_predict_matrix(model: ForestModel, rows) -> np.ndarray:
    """Plurality vote over trees; ties go to the lowest class code."""
    x = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
    if x.shape[1] != model.n_columns:
        raise InvalidInputError(f"row has {x.shape[1]} columns, model expects {model.n_columns}")
    votes = np.zeros((len(x), N_CLASSES), dtype=np.int64)
    for tree in model.trees:
        votes[np.arange(len(x)), tree_predict(tree, x)] += 1
    return np.argmax(votes, axis=1)


def rf_predict(model: ForestModel, row) -> int:
    return int(rf_predict_matrix(model, np.atleast_2d(row))[0])


def rf_trainer(params: ForestParams | None = None, threads: int = 1):
    """Trainer callable for forward curves; exposes the fitted model's OOB via attribute."""

    def train(x, y):
        model = rf_train(x, y, params=params, threads=threads)
        predictor = lambda rows: rf_predict_matrix(model, rows)
        predictor.model = model
        return predictor

    return train
