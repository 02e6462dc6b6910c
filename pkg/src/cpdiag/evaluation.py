"""Experimental protocol: stratified splits, full-indicator runs, forward selection.

The data set splits into a training set (one sixth) and a test set whose
rows are further partitioned into 10 stratified slices; reported test
accuracy is the mean and standard deviation over the slices.  Feature
selection only ever sees training rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .forest import ForestParams, rf_predict_matrix, rf_train
from .indicators import IndicatorMatrix, IndicatorSpec
from .naive_bayes import (
    NaiveBayesModel,
    explain_table,
    nb_predict_matrix,
    nb_train,
    nb_trainer,
)
from .selection import CurvePoint, SelectionResult, forward_curve, mrmr_rank, select_optimal_k
from .signals import N_CLASSES

logger = logging.getLogger(__name__)

N_SLICES = 10
TRAIN_FRACTION = 6  # one observation in six trains


@dataclass
class SplitPlan:
    """Training ids, test ids and 10 disjoint stratified test slices."""

    train_ids: np.ndarray
    test_ids: np.ndarray
    slices: list[np.ndarray]
    seed: int


def _allocate_stratified(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation of ``total`` over classes, ties to low codes."""
    exact = counts * (total / counts.sum())
    base = np.floor(exact).astype(np.int64)
    remainder = total - base.sum()
    order = np.argsort(-(exact - base), kind="stable")  # stable: low codes win ties
    for c in order[:remainder]:
        base[c] += 1
    return base


def make_split(labels, seed: int, balanced_train: bool = False) -> SplitPlan:
    """Stratified train/test split plus slice partition, deterministic in seed.

    The default keeps the full data set's class proportions in the train set;
    ``balanced_train`` instead takes the same number of rows per class.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n % (TRAIN_FRACTION * 2) != 0 or (n - n // TRAIN_FRACTION) % N_SLICES != 0:
        raise InvalidInputError(
            f"dataset size {n} does not admit a 1/{TRAIN_FRACTION} train split "
            f"with {N_SLICES} equal test slices"
        )
    counts = np.bincount(labels, minlength=N_CLASSES)
    if (counts == 0).any():
        raise InvalidInputError("every class must be present")
    train_total = n // TRAIN_FRACTION
    if balanced_train:
        if train_total % N_CLASSES != 0:
            raise InvalidInputError(f"train size {train_total} not divisible by {N_CLASSES}")
        train_counts = np.full(N_CLASSES, train_total // N_CLASSES, dtype=np.int64)
        if (train_counts >= counts).any():
            raise InvalidInputError("balanced train set would exhaust a class")
    else:
        train_counts = _allocate_stratified(counts, train_total)

    rng = np.random.default_rng([seed])
    train_parts, test_parts = [], []
    for c in range(N_CLASSES):
        ids = np.flatnonzero(labels == c)
        perm = rng.permutation(len(ids))
        train_parts.append(ids[perm[: train_counts[c]]])
        test_parts.append(ids[perm[train_counts[c] :]])

    # slice allocation: per class, spread the remainder one extra per slice,
    # rotating the starting slice so every slice ends up the same size
    slice_members: list[list[np.ndarray]] = [[] for _ in range(N_SLICES)]
    start = 0
    for c in range(N_CLASSES):
        ids = test_parts[c]
        base, extra = divmod(len(ids), N_SLICES)
        sizes = np.full(N_SLICES, base, dtype=np.int64)
        for i in range(extra):
            sizes[(start + i) % N_SLICES] += 1
        start += extra
        offset = 0
        for s in range(N_SLICES):
            slice_members[s].append(ids[offset : offset + sizes[s]])
            offset += sizes[s]
    slices = [np.sort(np.concatenate(parts)) for parts in slice_members]
    sizes = {len(s) for s in slices}
    if len(sizes) != 1:
        raise InvalidInputError(f"slice stratification failed: sizes {sorted(sizes)}")
    return SplitPlan(
        train_ids=np.sort(np.concatenate(train_parts)),
        test_ids=np.sort(np.concatenate(test_parts)),
        slices=slices,
        seed=seed,
    )


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or len(predictions) == 0:
        raise InvalidInputError("predictions and labels must be equal-length and non-empty")
    return float(np.mean(predictions == labels))


def confusion_matrix(predictions, labels, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts indexed (true class, predicted class)."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or len(predictions) == 0:
        raise InvalidInputError("predictions and labels must be equal-length and non-empty")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (labels, predictions), 1)
    return out


@dataclass
class EvalReport:
    classifier: str
    n_columns: int
    train_accuracy: float
    slice_accuracies: list[float]
    slice_mean: float
    slice_sd: float
    confusion: np.ndarray
    oob_accuracy: float | None = None
    k: int | None = None


def _slice_stats(predictions: np.ndarray, labels: np.ndarray, plan: SplitPlan, id_to_row) -> tuple:
    slice_accs = []
    for sl in plan.slices:
        rows = id_to_row(sl)
        slice_accs.append(accuracy(predictions[rows], labels[rows]))
    mean = float(np.mean(slice_accs))
    sd = float(np.std(slice_accs, ddof=1))
    return slice_accs, mean, sd


class PipelineData:
    """Indicator matrix plus split, with id -> row resolution."""

    def __init__(self, matrix: IndicatorMatrix, plan: SplitPlan):
        self.matrix = matrix
        self.plan = plan
        self._row_of = {int(sid): i for i, sid in enumerate(matrix.observation_ids)}
        self.train_rows = self.rows_of(plan.train_ids)
        self.test_rows = self.rows_of(plan.test_ids)

    def rows_of(self, ids) -> np.ndarray:
        return np.array([self._row_of[int(i)] for i in ids], dtype=np.int64)

    @property
    def train_x(self) -> np.ndarray:
        return self.matrix.rows[self.train_rows]

    @property
    def train_y(self) -> np.ndarray:
        return self.matrix.labels[self.train_rows].astype(np.int64)


def run_full_indicators(
    data: PipelineData,
    classifier: str,
    forest_params: ForestParams | None = None,
    threads: int = 1,
) -> EvalReport:
    """Train on the training split with every distinct column; report accuracies."""
    matrix, plan = data.matrix, data.plan
    x, y = matrix.rows, matrix.labels.astype(np.int64)
    train_x, train_y = x[data.train_rows], y[data.train_rows]

    if classifier == "nb":
        model = nb_train(train_x, train_y)
        predict = lambda rows: nb_predict_matrix(model, rows)
        oob = None
    elif classifier == "rf":
        model = rf_train(train_x, train_y, params=forest_params, threads=threads)
        predict = lambda rows: rf_predict_matrix(model, rows)
        oob = model.oob_accuracy
    else:
        raise InvalidInputError(f"unknown classifier {classifier!r}")

    train_acc = accuracy(predict(train_x), train_y)
    test_pred = predict(x[data.test_rows])
    test_y = y[data.test_rows]
    pred_all = np.full(len(y), -1, dtype=np.int64)
    pred_all[data.test_rows] = test_pred
    slice_accs, mean, sd = _slice_stats(pred_all, y, plan, data.rows_of)
    logger.info(
        "%s full indicators: train %.4f oob %s slice mean %.4f (sd %.4f)",
        classifier,
        train_acc,
        f"{oob:.4f}" if oob is not None else "-",
        mean,
        sd,
    )
    return EvalReport(
        classifier=classifier,
        n_columns=matrix.n_columns,
        train_accuracy=train_acc,
        slice_accuracies=slice_accs,
        slice_mean=mean,
        slice_sd=sd,
        confusion=confusion_matrix(test_pred, test_y),
        oob_accuracy=oob,
    )


@dataclass
class ForwardRun:
    """Forward-selection curves plus the final report at the selected K."""

    selection: SelectionResult
    curve: list[CurvePoint]  # eval accuracies: one per slice, then OOB last for rf
    slice_means: list[float]
    slice_sds: list[float]
    oob_curve: list[float] | None
    k_star: int
    report_at_k: EvalReport
    model_at_k: NaiveBayesModel | None = None
    per_class_train_error: np.ndarray | None = None  # (len(curve), n_classes)
    per_class_test_error: np.ndarray | None = None


def run_forward_selection(
    data: PipelineData,
    classifier: str,
    max_k: int = 100,
    k_star_cap: int = 30,
    forest_params: ForestParams | None = None,
    threads: int = 1,
    ks=None,
    selection: SelectionResult | None = None,
) -> ForwardRun:
    """mRMR on the training rows only, then classifiers along the ranking."""
    matrix = data.matrix
    x, y = matrix.rows, matrix.labels.astype(np.int64)
    train_x, train_y = x[data.train_rows], y[data.train_rows]
    max_k = min(max_k, matrix.n_columns)
    if selection is None:
        selection = mrmr_rank(train_x, train_y, max_k)
    order = selection.ordered_columns

    test_x, test_y = x[data.test_rows], y[data.test_rows]
    slice_rows = [data.rows_of(sl) for sl in data.plan.slices]

    if classifier == "nb":
        trainer = nb_trainer()
    elif classifier == "rf":
        trainer = _rf_curve_trainer(forest_params, threads)
    else:
        raise InvalidInputError(f"unknown classifier {classifier!r}")

    curve: list[CurvePoint] = []
    oob_curve: list[float] | None = [] if classifier == "rf" else None
    per_class_train = []
    per_class_test = []
    for k in ks if ks is not None else range(1, max_k + 1):
        cols = order[:k]
        predict = trainer(train_x[:, cols], train_y)
        train_pred = predict(train_x[:, cols])
        test_pred = predict(test_x[:, cols])
        pred_all = np.full(len(y), -1, dtype=np.int64)
        pred_all[data.test_rows] = test_pred
        slice_accs = [accuracy(pred_all[rows], y[rows]) for rows in slice_rows]
        curve.append(
            CurvePoint(
                k=k,
                train_accuracy=accuracy(train_pred, train_y),
                eval_accuracies=slice_accs,
            )
        )
        if oob_curve is not None:
            oob_curve.append(predict.model.oob_accuracy)
        per_class_train.append(_per_class_error(train_pred, train_y))
        per_class_test.append(_per_class_error(test_pred, test_y))

    k_star = select_optimal_k(curve, max_k=k_star_cap)
    report, model = _report_at_k(
        data, classifier, order[:k_star], k_star, forest_params, threads
    )
    slice_means = [float(np.mean(pt.eval_accuracies)) for pt in curve]
    slice_sds = [float(np.std(pt.eval_accuracies, ddof=1)) for pt in curve]
    logger.info(
        "%s forward selection: K*=%d train %.4f slice mean %.4f",
        classifier,
        k_star,
        report.train_accuracy,
        report.slice_mean,
    )
    return ForwardRun(
        selection=selection,
        curve=curve,
        slice_means=slice_means,
        slice_sds=slice_sds,
        oob_curve=oob_curve,
        k_star=k_star,
        report_at_k=report,
        model_at_k=model,
        per_class_train_error=np.vstack(per_class_train),
        per_class_test_error=np.vstack(per_class_test),
    )


def _rf_curve_trainer(forest_params: ForestParams | None, threads: int):
    from .forest import rf_trainer

    return rf_trainer(params=forest_params, threads=threads)


def _per_class_error(predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
    errors = np.zeros(N_CLASSES)
    for c in range(N_CLASSES):
        mask = labels == c
        errors[c] = float(np.mean(predictions[mask] != c)) if mask.any() else np.nan
    return errors


def _report_at_k(
    data: PipelineData,
    classifier: str,
    cols,
    k: int,
    forest_params: ForestParams | None,
    threads: int,
) -> tuple[EvalReport, NaiveBayesModel | None]:
    matrix = data.matrix
    x, y = matrix.rows, matrix.labels.astype(np.int64)
    train_x, train_y = x[data.train_rows][:, cols], y[data.train_rows]
    model = None
    if classifier == "nb":
        model = nb_train(train_x, train_y)
        predict = lambda rows: nb_predict_matrix(model, rows)
        oob = None
    else:
        rf = rf_train(train_x, train_y, params=forest_params, threads=threads)
        predict = lambda rows: rf_predict_matrix(rf, rows)
        oob = rf.oob_accuracy
    train_acc = accuracy(predict(train_x), train_y)
    test_pred = predict(x[data.test_rows][:, cols])
    test_y = y[data.test_rows]
    pred_all = np.full(len(y), -1, dtype=np.int64)
    pred_all[data.test_rows] = test_pred
    slice_accs, mean, sd = _slice_stats(pred_all, y, data.plan, data.rows_of)
    report = EvalReport(
        classifier=classifier,
        n_columns=len(list(cols)),
        train_accuracy=train_acc,
        slice_accuracies=slice_accs,
        slice_mean=mean,
        slice_sd=sd,
        confusion=confusion_matrix(test_pred, test_y),
        oob_accuracy=oob,
        k=k,
    )
    return report, model


def explanation_at_k(run: ForwardRun, catalog: list[IndicatorSpec]):
    """Explanation rows (indicator name, firing probability per class) at K*."""
    if run.model_at_k is None:
        raise InvalidInputError("explanation requires the Naive Bayes model at K*")
    specs = [catalog[j] for j in run.selection.ordered_columns[: run.k_star]]
    return explain_table(run.model_at_k, specs)
