"""Bernoulli Naive Bayes over binary indicators: the interpretable decision layer.

The model is nothing more than class priors plus, per class and indicator,
the probability of seeing a 1.  Those conditional probabilities double as
the explanation shown to operators alongside a decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .indicators import IndicatorSpec
from .signals import N_CLASSES


@dataclass
class NaiveBayesModel:
    """Class priors and Laplace-smoothed Bernoulli parameters per indicator."""

    class_priors: np.ndarray  # (n_classes,)
    cond_prob: np.ndarray  # (n_classes, n_columns)

    def __post_init__(self) -> None:
        self.class_priors = np.asarray(self.class_priors, dtype=np.float64)
        self.cond_prob = np.asarray(self.cond_prob, dtype=np.float64)
        if abs(self.class_priors.sum() - 1.0) > 1e-12:
            raise InvalidInputError("class priors must sum to 1")

    @property
    def n_columns(self) -> int:
        return self.cond_prob.shape[1]


def nb_train(matrix, labels, n_classes: int = N_CLASSES, alpha: float = 1.0) -> NaiveBayesModel:
    """Fit priors and conditional probabilities with Laplace pseudo-count alpha.

    alpha = 1 keeps every probability strictly inside (0, 1); alpha = 0 gives
    the raw count estimates (reporting only: zero cells break prediction).
    """
    x = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise InvalidInputError("matrix rows must match labels")
    counts = np.array([(y == c).sum() for c in range(n_classes)], dtype=np.float64)
    if (counts == 0).any():
        missing = [c for c in range(n_classes) if counts[c] == 0]
        raise InvalidInputError(f"training data lacks classes {missing}")
    ones = np.vstack([x[y == c].sum(axis=0) for c in range(n_classes)])
    theta = (ones + alpha) / (counts[:, None] + 2.0 * alpha)
    return NaiveBayesModel(class_priors=counts / counts.sum(), cond_prob=theta)


def nb_log_scores(model: NaiveBayesModel, rows) -> np.ndarray:
    """Per-class log posterior scores (up to a shared constant), shape (n, n_classes)."""
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if x.shape[1] != model.n_columns:
        raise InvalidInputError(
            f"row has {x.shape[1]} columns, model expects {model.n_columns}"
        )
    log_theta = np.log(model.cond_prob)
    log_one_minus = np.log1p(-model.cond_prob)
    return (
        np.log(model.class_priors)[None, :]
        + x @ (log_theta - log_one_minus).T
        + log_one_minus.sum(axis=1)[None, :]
    )


def nb_predict(model: NaiveBayesModel, row) -> tuple[int, np.ndarray]:
    """Predicted class (ties to the lowest class code) plus per-class log scores."""
    scores = nb_log_scores(model, row)[0]
    return int(np.argmax(scores)), scores


def nb_predict_matrix(model: NaiveBayesModel, rows) -> np.ndarray:
    return np.argmax(nb_log_scores(model, rows), axis=1)


def nb_trainer(alpha: float = 1.0, n_classes: int = N_CLASSES):
    """Trainer callable for forward curves: returns a fitted predictor."""

    def train(x, y):
        model = nb_train(x, y, n_classes=n_classes, alpha=alpha)
        return lambda rows: nb_predict_matrix(model, rows)

    return train


@dataclass
class ExplanationRow:
    name: str
    theta: np.ndarray  # probability of observing 1, per class


def explain_table(model: NaiveBayesModel, catalog: Sequence[IndicatorSpec]) -> list[ExplanationRow]:
    """Per-indicator conditional probabilities of firing, one row per column."""
    if len(catalog) != model.n_columns:
        raise InvalidInputError("catalog size does not match model columns")
    return [
        ExplanationRow(name=spec.name, theta=model.cond_prob[:, j].copy())
        for j, spec in enumerate(catalog)
    ]
