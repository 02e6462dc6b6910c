"""Minimum-redundancy maximum-relevance ranking of binary indicators.

Relevance is the empirical mutual information (in bits) between an
indicator column and the class label; redundancy is the mean mutual
information with the already selected columns.  Selection is greedy on
the difference criterion, ties broken by lowest column index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError


@dataclass
class MIScore:
    """Bookkeeping for one greedy selection step."""

    column_index: int
    relevance: float
    redundancy: float
    score: float


@dataclass
class SelectionResult:
    ordered_columns: list[int]
    scores: list[MIScore]


def _entropy_terms(joint: np.ndarray) -> float:
    # joint: counts matrix; plug-in MI in bits with 0 log 0 = 0
    n = joint.sum()
    if n == 0:
        return 0.0
    pj = joint / n
    px = pj.sum(axis=1, keepdims=True)
    py = pj.sum(axis=0, keepdims=True)
    mask = pj > 0
    mi = float(np.sum(pj[mask] * np.log2(pj[mask] / (px @ py)[mask])))
    return max(mi, 0.0)


def mutual_information(x, y) -> float:
    """Plug-in mutual information (bits) between two discrete sequences."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("inputs must be equal-length one-dimensional sequences")
    if len(x) < 1:
        raise InvalidInputError("inputs must be non-empty")
    xv, xi = np.unique(x, return_inverse=True)
    yv, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((len(xv), len(yv)), dtype=np.int64)
    np.add.at(joint, (xi, yi), 1)
    return _entropy_terms(joint)


def _mi_columns_vs_labels(x: np.ndarray, y_onehot: np.ndarray) -> np.ndarray:
    """MI (bits) of each binary column of x against the label, vectorized."""
    n, n_classes = y_onehot.shape
    class_counts = y_onehot.sum(axis=0)
    c1 = x.T.astype(np.float64) @ y_onehot  # (p, n_classes): count of x=1 per class
    c0 = class_counts[None, :] - c1
    joint = np.stack([c0, c1], axis=1) / n  # (p, 2, n_classes)
    px = joint.sum(axis=2, keepdims=True)
    py = joint.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * np.log2(joint / (px * py))
    return np.maximum(np.nansum(terms, axis=(1, 2)), 0.0)


def _mi_columns_vs_column(x: np.ndarray, col: np.ndarray) -> np.ndarray:
    """MI (bits) of each binary column of x against one binary column."""
    n = len(col)
    ones = x.sum(axis=0).astype(np.float64)
    s1 = float(col.sum())
    n11 = x.T.astype(np.float64) @ col.astype(np.float64)
    n10 = ones - n11
    n01 = s1 - n11
    n00 = n - n11 - n10 - n01
    joint = np.stack([n00, n01, n10, n11], axis=1).reshape(-1, 2, 2) / n
    px = joint.sum(axis=2, keepdims=True)
    py = joint.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * np.log2(joint / (px * py))
    return np.maximum(np.nansum(terms, axis=(1, 2)), 0.0)


def _onehot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes), dtype=np.float64)
    out[np.arange(len(y)), y] = 1.0
    return out


def mrmr_rank(matrix: np.ndarray, labels, k: int) -> SelectionResult:
    """Greedy mRMR (difference form) ranking of the first k columns.

    Step 1 picks the most relevant column; each later step maximizes
    relevance minus mean MI with the selected set.  Ties go to the lowest
    column index.
    """
    x = np.asarray(matrix, dtype=np.uint8)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise InvalidInputError("matrix rows must match labels")
    p = x.shape[1]
    if k > p:
        raise InvalidInputError(f"cannot select {k} of {p} columns")
    relevance = _mi_columns_vs_labels(x, _onehot(y, int(y.max()) + 1 if len(y) else 1))

    selected: list[int] = []
    scores: list[MIScore] = []
    redundancy_sum = np.zeros(p)
    available = np.ones(p, dtype=bool)
    for step in range(k):
        if step == 0:
            criterion = relevance.copy()
            redundancy = np.zeros(p)
        else:
            redundancy = redundancy_sum / len(selected)
            criterion = relevance - redundancy
        criterion[~available] = -np.inf
        j = int(np.argmax(criterion))  # first max = lowest index on ties
        selected.append(j)
        available[j] = False
        scores.append(
            MIScore(
                column_index=j,
                relevance=float(relevance[j]),
                redundancy=float(redundancy[j]),
                score=float(criterion[j]),
            )
        )
        if step < k - 1:
            redundancy_sum += _mi_columns_vs_column(x, x[:, j])
    return SelectionResult(ordered_columns=selected, scores=scores)


def write_selection_trace(result: SelectionResult, names: Sequence[str], path) -> None:
    """Selection trace CSV: step, column, name, relevance, redundancy, criterion."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "column_index", "name", "relevance", "redundancy", "criterion"])
        for step, s in enumerate(result.scores, start=1):
            writer.writerow(
                [
                    step,
                    s.column_index,
                    names[s.column_index],
                    repr(s.relevance),
                    repr(s.redundancy),
                    repr(s.score),
                ]
            )


@dataclass
class CurvePoint:
    k: int
    train_accuracy: float
    eval_accuracies: list[float]


def forward_curve(
    train_x: np.ndarray,
    train_y: np.ndarray,
    order: Sequence[int],
    trainer: Callable,
    max_k: int,
    eval_sets: Sequence[tuple[np.ndarray, np.ndarray]] = (),
    ks: Sequence[int] | None = None,
) -> list[CurvePoint]:
    """Train on the first K ranked columns for K = 1..max_k (or the given Ks).

    ``trainer(x, y)`` must return a predictor ``f(x) -> labels``.  Each curve
    point records the training accuracy and one accuracy per eval set.
    """
    order = list(order)
    if max_k > len(order):
        raise InvalidInputError(f"max_k {max_k} exceeds ranked columns {len(order)}")
    points = []
    for k in ks if ks is not None else range(1, max_k + 1):
        cols = order[:k]
        predict = trainer(train_x[:, cols], train_y)
        train_acc = float(np.mean(predict(train_x[:, cols]) == train_y))
        evals = [float(np.mean(predict(ex[:, cols]) == ey)) for ex, ey in eval_sets]
        points.append(CurvePoint(k=k, train_accuracy=train_acc, eval_accuracies=evals))
    return points


def select_optimal_k(curve: Sequence[CurvePoint], max_k: int = 30) -> int:
    """Smallest K in [1, max_k] maximizing training accuracy."""
    if not curve:
        raise InvalidInputError("empty curve")
    best_k, best_acc = None, -1.0
    for point in curve:
        if point.k > max_k:
            continue
        if point.train_accuracy > best_acc:
            best_k, best_acc = point.k, point.train_accuracy
    if best_k is None:
        raise InvalidInputError(f"no curve point with K <= {max_k}")
    return best_k
