"""Sliding-window test evaluation: signal -> p-value series -> bit series.

A window of even length tau is split into halves and a two-sample test
compares them; sliding the window with stride 1 over a length-m signal
yields m - tau + 1 p-values.  Batch implementations evaluate every window
of a signal at once with numerics identical to the scalar test functions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .errors import DegenerateInputError, InvalidInputError
from .stat_tests import (
    MWU_EXACT_MAX_POOLED,
    TestKind,
    TestResult,
    f_two_sided_p,
    ks_p_value,
    mwu_exact_p,
    mwu_normal_p,
    run_test,
    tie_correction_term,
)


@dataclass
class PValueSeries:
    """p-values of one test over all stride-1 windows of one signal."""

    test_kind: TestKind
    tau: int
    smoothed: bool
    p_values: np.ndarray

    def __post_init__(self) -> None:
        self.p_values = np.asarray(self.p_values, dtype=np.float64)
        if self.p_values.ndim != 1 or len(self.p_values) < 1:
            raise InvalidInputError("p-value series must be non-empty and one-dimensional")
        if np.any((self.p_values < 0) | (self.p_values > 1)):
            raise InvalidInputError("p-values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.p_values)


@dataclass
class BitSeries:
    """Binarized p-value series: bit = 1 iff the test rejects at ``level``."""

    bits: np.ndarray
    level: float

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.bits)


def _as_signal_values(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise InvalidInputError("signal values must be one-dimensional")
    return values


def _validate_tau(tau: int, m: int) -> None:
    if tau % 2 != 0:
        raise InvalidInputError(f"window length must be even, got {tau}")
    if tau < 4:
        raise InvalidInputError(f"window length must be >= 4, got {tau}")
    if tau > m:
        raise InvalidInputError(f"window length {tau} exceeds signal length {m}")


def extract_windows(values, tau: int) -> np.ndarray:
    """All stride-1 windows of length tau, as a (m - tau + 1, tau) view."""
    values = _as_signal_values(values)
    _validate_tau(tau, len(values))
    return sliding_window_view(values, tau)


def moving_average(values, width: int = 5) -> np.ndarray:
    """Centered moving average, valid positions only (output length m - width + 1)."""
    values = _as_signal_values(values)
    if width % 2 != 1 or width < 1:
        raise InvalidInputError(f"moving-average width must be odd and positive, got {width}")
    if width > len(values):
        raise InvalidInputError(f"moving-average width {width} exceeds signal length {len(values)}")
    if width == 1:
        return values.copy()
    return np.convolve(values, np.full(width, 1.0 / width), mode="valid")


def window_test(window, kind: TestKind) -> TestResult:
    """Apply a two-sample test to the halves of one window.

    Degenerate windows (zero variance in a half, for the F-test) yield p = 1:
    a constant segment carries no evidence of change.
    """
    window = _as_signal_values(window)
    _validate_tau(len(window), len(window))
    h = len(window) // 2
    try:
        return run_test(kind, window[:h], window[h:])
    except DegenerateInputError:
        return TestResult(statistic=1.0, p_value=1.0)


# ---------------------------------------------------------------------------
# batch paths (one call per signal/test/tau)


def _batch_mwu_p(w: np.ndarray, h: int) -> np.ndarray:
    ranks = rankdata(w, axis=1)
    u1 = ranks[:, :h].sum(axis=1) - h * (h + 1) / 2.0
    s = np.sort(w, axis=1)
    tied = (s[:, 1:] == s[:, :-1]).any(axis=1)
    tie_terms = np.zeros(len(w))
    for i in np.flatnonzero(tied):
        tie_terms[i] = tie_correction_term(s[i])
    if 2 * h <= MWU_EXACT_MAX_POOLED:
        p = np.empty(len(w))
        for i in range(len(w)):
            if tied[i]:
                p[i] = mwu_normal_p(u1[i], h, h, tie_terms[i])
            else:
                p[i] = mwu_exact_p(u1[i], h, h)
        return p
    return np.asarray(mwu_normal_p(u1, h, h, tie_terms))


def _batch_ks_p(w: np.ndarray, h: int) -> np.ndarray:
    tau = w.shape[1]
    order = np.argsort(w, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(w, order, axis=1)
    cum1 = np.cumsum((order < h).astype(np.float64), axis=1)
    cum2 = np.arange(1, tau + 1, dtype=np.float64)[None, :] - cum1
    diff = np.abs(cum1 / h - cum2 / h)
    last_of_run = np.concatenate(
        [sorted_vals[:, 1:] != sorted_vals[:, :-1], np.ones((len(w), 1), dtype=bool)], axis=1
    )
    d = np.where(last_of_run, diff, 0.0).max(axis=1)
    return np.asarray(ks_p_value(d, h, h))


def _batch_f_p(w: np.ndarray, h: int) -> np.ndarray:
    v1 = w[:, :h].var(axis=1, ddof=1)
    v2 = w[:, h:].var(axis=1, ddof=1)
    ok = (v1 > 0.0) & (v2 > 0.0)
    p = np.ones(len(w))
    if np.any(ok):
        p[ok] = np.asarray(f_two_sided_p(v1[ok] / v2[ok], h - 1, h - 1))
    return p


_BATCH = {
    TestKind.MWU: _batch_mwu_p,
    TestKind.KS2: _batch_ks_p,
    TestKind.FVAR: _batch_f_p,
}


def p_value_series(values, kind: TestKind, tau: int, smoothed: bool = False) -> PValueSeries:
    """Apply one test to every stride-1 window of a signal."""
    w = extract_windows(values, tau)
    p = _BATCH[kind](w, tau // 2)
    return PValueSeries(test_kind=kind, tau=tau, smoothed=smoothed, p_values=p)


def binarize(series: PValueSeries, level: float) -> BitSeries:
    """bit = 1 iff p < level (strict)."""
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    return BitSeries(bits=series.p_values < level, level=level)


def dump_pvalue_series(series: PValueSeries, path) -> None:
    """Debug CSV of a p-value series: 1-based window position, p-value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "p_value"])
        for i, p in enumerate(series.p_values, start=1):
            writer.writerow([i, repr(float(p))])
