"""Simulated univariate signals with optional variance / mean / slope shifts.

Each signal is a short i.i.d. standard-Gaussian series; anomalous signals
switch to a shifted regime from a random change position onward.  Signal
lengths vary between 100 and 200 points, and the change position is drawn
uniformly from the central 20%..80% band of the signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidInputError

M_MIN = 100
M_MAX = 200

SIGMA_RANGE = (1.01, 5.0)
MU_RANGE_A = (1.01, 5.0)
MU_RANGE_B = (0.505, 2.5)
LAMBDA_RANGE = (0.02, 3.0)


class AnomalyClass(IntEnum):
    """Signal classes; integer codes are stable and used for serialization."""

    NO_ANOMALY = 0
    VARIANCE_SHIFT = 1
    MEAN_SHIFT = 2
    SLOPE_SHIFT = 3


N_CLASSES = len(AnomalyClass)


def change_index_bounds(m: int) -> tuple[int, int]:
    """Inclusive bounds (1-based) for the change position of a length-m signal."""
    return (2 * m) // 10, (8 * m) // 10


@dataclass
class Signal:
    """One observation: values plus generative metadata.

    ``change_index`` is the 1-based position of the first shifted value;
    values at positions >= change_index follow the shifted regime.
    """

    id: int
    values: np.ndarray
    label: AnomalyClass
    change_index: int | None = None
    shift_param: float | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise InvalidInputError("signal values must be one-dimensional")
        m = self.m
        if not M_MIN <= m <= M_MAX:
            raise InvalidInputError(f"signal length {m} outside [{M_MIN}, {M_MAX}]")
        if self.label == AnomalyClass.NO_ANOMALY:
            if self.change_index is not None or self.shift_param is not None:
                raise InvalidInputError("no-anomaly signals carry no change metadata")
        else:
            if self.change_index is None or self.shift_param is None:
                raise InvalidInputError("anomalous signals need change_index and shift_param")
            lo, hi = change_index_bounds(m)
            if not lo <= self.change_index <= hi:
                raise InvalidInputError(
                    f"change index {self.change_index} outside [{lo}, {hi}] for m={m}"
                )

    @property
    def m(self) -> int:
        return int(self.values.shape[0])


@dataclass
class DatasetSpec:
    """Composition and seed of one simulated data set."""

    variant: str = "A"
    count_normal: int = 3000
    count_per_anomaly: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in ("A", "B"):
            raise InvalidInputError(f"variant must be 'A' or 'B', got {self.variant!r}")
        if self.count_normal < 0 or self.count_per_anomaly < 0:
            raise InvalidInputError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.count_normal + 3 * self.count_per_anomaly


def _check_m(m: int) -> None:
    if not M_MIN <= m <= M_MAX:
        raise InvalidInputError(f"signal length {m} outside [{M_MIN}, {M_MAX}]")


def draw_length(rng: np.random.Generator) -> int:
    """Signal length, uniform over {100, ..., 200}."""
    return int(rng.integers(M_MIN, M_MAX + 1))


def _draw_change_index(rng: np.random.Generator, m: int) -> int:
    lo, hi = change_index_bounds(m)
    return int(rng.integers(lo, hi + 1))


def gen_normal(rng: np.random.Generator, m: int, signal_id: int = 0) -> Signal:
    """m i.i.d. N(0,1) draws, no change point."""
    _check_m(m)
    values = rng.standard_normal(m)
    return Signal(id=signal_id, values=values, label=AnomalyClass.NO_ANOMALY)


def gen_variance_shift(
    rng: np.random.Generator,
    m: int,
    signal_id: int = 0,
    sigma: float | None = None,
    change_index: int | None = None,
) -> Signal:
    """N(0,1) before the change position, N(0, sigma^2) from it onward.

    ``sigma`` and ``change_index`` are test hooks; by default sigma ~ U([1.01, 5])
    and the change position follows the standard law.
    """
    _check_m(m)
    if change_index is None:
        change_index = _draw_change_index(rng, m)
    if sigma is None:
        sigma = float(rng.uniform(*SIGMA_RANGE))
    values = rng.standard_normal(m)
    values[change_index - 1 :] *= sigma
    return Signal(
        id=signal_id,
        values=values,
        label=AnomalyClass.VARIANCE_SHIFT,
        change_index=change_index,
        shift_param=sigma,
    )


def gen_mean_shift(
    rng: np.random.Generator,
    m: int,
    variant: str = "A",
    signal_id: int = 0,
    mu: float | None = None,
    change_index: int | None = None,
) -> Signal:
    """N(0,1) before the change position, N(mu, 1) from it onward.

    Variant A draws mu ~ U([1.01, 5]); variant B draws mu ~ U([0.505, 2.5]).
    """
    _check_m(m)
    if variant not in ("A", "B"):
        raise InvalidInputError(f"variant must be 'A' or 'B', got {variant!r}")
    if change_index is None:
        change_index = _draw_change_index(rng, m)
    if mu is None:
        lo, hi = MU_RANGE_A if variant == "A" else MU_RANGE_B
        mu = float(rng.uniform(lo, hi))
    values = rng.standard_normal(m)
    values[change_index - 1 :] += mu
    return Signal(
        id=signal_id,
        values=values,
        label=AnomalyClass.MEAN_SHIFT,
        change_index=change_index,
        shift_param=mu,
    )


def gen_slope_shift(
    rng: np.random.Generator,
    m: int,
    signal_id: int = 0,
    lam: float | None = None,
    change_index: int | None = None,
) -> Signal:
    """N(0,1) before the change position, N(lam * (j - j_s), 1) from it onward.

    Positions are unit-spaced, so the ramp at 1-based position j >= j_s has
    mean lam * (j - j_s); the first shifted value still has mean 0.
    """
    _check_m(m)
    if change_index is None:
        change_index = _draw_change_index(rng, m)
    if lam is None:
        lam = float(rng.uniform(*LAMBDA_RANGE))
    values = rng.standard_normal(m)
    ramp = lam * np.arange(m - change_index + 1, dtype=np.float64)
    values[change_index - 1 :] += ramp
    return Signal(
        id=signal_id,
        values=values,
        label=AnomalyClass.SLOPE_SHIFT,
        change_index=change_index,
        shift_param=lam,
    )


def _signal_rng(seed: int, signal_id: int) -> np.random.Generator:
    # per-signal substream: reproducible independently of generation order
    return np.random.default_rng([seed, signal_id])


def _gen_by_class(
    label: AnomalyClass, rng: np.random.Generator, m: int, variant: str, signal_id: int
) -> Signal:
    if label == AnomalyClass.NO_ANOMALY:
        return gen_normal(rng, m, signal_id)
    if label == AnomalyClass.VARIANCE_SHIFT:
        return gen_variance_shift(rng, m, signal_id)
    if label == AnomalyClass.MEAN_SHIFT:
        return gen_mean_shift(rng, m, variant, signal_id)
    return gen_slope_shift(rng, m, signal_id)


def dataset_labels(spec: DatasetSpec) -> list[AnomalyClass]:
    """Class of each signal id, normals first then one block per anomaly class."""
    labels = [AnomalyClass.NO_ANOMALY] * spec.count_normal
    for cls in (AnomalyClass.VARIANCE_SHIFT, AnomalyClass.MEAN_SHIFT, AnomalyClass.SLOPE_SHIFT):
        labels.extend([cls] * spec.count_per_anomaly)
    return labels


def gen_signal(spec: DatasetSpec, signal_id: int) -> Signal:
    """The signal a dataset drawn from ``spec`` assigns to ``signal_id``."""
    labels = dataset_labels(spec)
    if not 0 <= signal_id < len(labels):
        raise InvalidInputError(f"signal id {signal_id} outside dataset of {len(labels)}")
    rng = _signal_rng(spec.seed, signal_id)
    m = draw_length(rng)
    return _gen_by_class(labels[signal_id], rng, m, spec.variant, signal_id)


def gen_dataset(spec: DatasetSpec) -> list[Signal]:
    """All signals of the data set, in id order.  Pure function of the spec."""
    out = []
    for i, label in enumerate(dataset_labels(spec)):
        rng = _signal_rng(spec.seed, i)
        m = draw_length(rng)
        out.append(_gen_by_class(label, rng, m, spec.variant, i))
    return out
