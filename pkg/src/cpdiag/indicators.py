"""Binary indicator bank: expert-style detectors over windowed test outcomes.

Each indicator compresses one bit series (the binarized p-values of one
test / window length / level, on the raw or smoothed signal) into a single
bit.  The simple indicator fires if any window rejected; the derived ones
add a stride ("jump") over the windows and then require either a global
rejection ratio, a long enough run of rejections, or k rejections among l
consecutive windows.  The full grid of parameter choices yields 1512
columns per data set; identical columns are merged afterwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError
from .signals import AnomalyClass, Signal
from .stat_tests import TestKind
from .windows import binarize, moving_average, p_value_series

logger = logging.getLogger(__name__)

_TEST_LETTER = {TestKind.MWU: "u", TestKind.KS2: "ks", TestKind.FVAR: "f"}


# ---------------------------------------------------------------------------
# aggregators


@dataclass(frozen=True)
class Simple:
    """Fires iff at least one window rejected."""


@dataclass(frozen=True)
class GlobalRatio:
    """Fires iff at least a fraction beta of the (strided) windows rejected."""

    beta: float
    delta: int


@dataclass(frozen=True)
class ConsecutiveRatio:
    """Fires iff a run of at least ceil(beta * n) consecutive (strided) windows rejected."""

    beta: float
    delta: int


@dataclass(frozen=True)
class LocalRatio:
    """Fires iff some l consecutive (strided) windows contain >= k rejections."""

    l: int
    k: int
    delta: int


Aggregator = Union[Simple, GlobalRatio, ConsecutiveRatio, LocalRatio]

_AGG_ORDER = {Simple: 0, GlobalRatio: 1, ConsecutiveRatio: 2, LocalRatio: 3}


def _validate_aggregator(agg: Aggregator) -> None:
    if isinstance(agg, (GlobalRatio, ConsecutiveRatio)):
        if not 0.0 < agg.beta < 1.0:
            raise InvalidInputError(f"beta must lie in (0, 1), got {agg.beta}")
        if agg.delta < 1:
            raise InvalidInputError(f"delta must be >= 1, got {agg.delta}")
    elif isinstance(agg, LocalRatio):
        if not 1 <= agg.k <= agg.l:
            raise InvalidInputError(f"need 1 <= k <= l, got (l={agg.l}, k={agg.k})")
        if agg.delta < 1:
            raise InvalidInputError(f"delta must be >= 1, got {agg.delta}")


def subsample(bits: np.ndarray, delta: int) -> np.ndarray:
    """Keep positions 0, delta, 2*delta, ... of the bit sequence."""
    if delta < 1:
        raise InvalidInputError(f"delta must be >= 1, got {delta}")
    return np.asarray(bits)[::delta]


def simple_indicator(bits: np.ndarray) -> int:
    """Logical OR over the bit sequence."""
    bits = np.asarray(bits)
    if len(bits) == 0:
        raise InvalidInputError("empty bit series")
    return int(bits.any())


def run_threshold(beta: float, n: int) -> int:
    """ceil(beta * n) computed in exact arithmetic on the decimal value of beta."""
    return math.ceil(Fraction(str(beta)) * n)


def _max_run(bits: np.ndarray) -> int:
    padded = np.concatenate(([0], np.asarray(bits, dtype=np.int8), [0]))
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return int((ends - starts).max()) if len(starts) else 0


def global_ratio(bits: np.ndarray, beta: float, delta: int) -> int:
    """1 iff the rejection fraction over the strided windows is >= beta."""
    sub = subsample(bits, delta)
    if len(sub) == 0:
        raise InvalidInputError("empty bit series")
    return int(int(np.sum(sub)) / len(sub) >= beta)


def consecutive_ratio(bits: np.ndarray, beta: float, delta: int) -> int:
    """1 iff the strided windows contain a rejection run of length >= ceil(beta * n)."""
    sub = subsample(bits, delta)
    if len(sub) == 0:
        raise InvalidInputError("empty bit series")
    return int(_max_run(sub) >= run_threshold(beta, len(sub)))


def local_ratio(bits: np.ndarray, l: int, k: int, delta: int) -> int:
    """1 iff some block of l consecutive strided windows holds >= k rejections.

    Sequences shorter than l cannot detect anything and yield 0.
    """
    if not 1 <= k <= l:
        raise InvalidInputError(f"need 1 <= k <= l, got (l={l}, k={k})")
    sub = subsample(bits, delta).astype(np.int32)
    if len(sub) < l:
        return 0
    window_sums = np.convolve(sub, np.ones(l, dtype=np.int32), mode="valid")
    return int(window_sums.max() >= k)


def apply_aggregator(bits: np.ndarray, agg: Aggregator) -> int:
    if isinstance(agg, Simple):
        return simple_indicator(bits)
    if isinstance(agg, GlobalRatio):
        return global_ratio(bits, agg.beta, agg.delta)
    if isinstance(agg, ConsecutiveRatio):
        return consecutive_ratio(bits, agg.beta, agg.delta)
    if isinstance(agg, LocalRatio):
        return local_ratio(bits, agg.l, agg.k, agg.delta)
    raise InvalidInputError(f"unknown aggregator {agg!r}")


# ---------------------------------------------------------------------------
# indicator catalog


@dataclass(frozen=True)
class IndicatorSpec:
    """Full recipe of one binary indicator; the unit of interpretability."""

    test_kind: TestKind
    tau: int
    level: float
    smoothed: bool
    aggregator: Aggregator

    @property
    def name(self) -> str:
        return name_indicator(self)

    def sort_key(self):
        agg = self.aggregator
        rank = _AGG_ORDER[type(agg)]
        if isinstance(agg, Simple):
            params: tuple = ()
        elif isinstance(agg, LocalRatio):
            params = (agg.l, agg.k, agg.delta)
        else:
            params = (agg.beta, agg.delta)
        return (self.smoothed, self.test_kind.value, self.tau, self.level, rank, params)


def name_indicator(spec: IndicatorSpec) -> str:
    """Human-readable indicator name, e.g. ``confu(2,3) (tau=30, level=0.005, delta=5, smoothed)``."""
    letter = _TEST_LETTER[spec.test_kind]
    agg = spec.aggregator
    detail = [f"tau={spec.tau}", f"level={spec.level:g}"]
    if isinstance(agg, Simple):
        head = f"{letter} test"
    elif isinstance(agg, GlobalRatio):
        head = f"rate{letter}({agg.beta:g})"
        detail.append(f"delta={agg.delta}")
    elif isinstance(agg, ConsecutiveRatio):
        head = f"lseq{letter}({agg.beta:g})"
        detail.append(f"delta={agg.delta}")
    elif isinstance(agg, LocalRatio):
        head = f"conf{letter}({agg.k},{agg.l})"
        detail.append(f"delta={agg.delta}")
    else:
        raise InvalidInputError(f"unknown aggregator {agg!r}")
    detail.append("smoothed" if spec.smoothed else "raw")
    return f"{head} ({', '.join(detail)})"


@dataclass
class GridConfig:
    """Parameter grid from which the indicator catalog is generated."""

    tests: tuple[TestKind, ...] = (TestKind.MWU, TestKind.KS2, TestKind.FVAR)
    taus: tuple[int, ...] = (30, 50, 100)
    levels: tuple[float, ...] = (0.005, 0.1, 0.5)
    deltas: tuple[int, ...] = (1, 5, 10)
    betas: tuple[float, ...] = (0.1, 0.3, 0.5)
    lk_pairs: tuple[tuple[int, int], ...] = ((3, 2), (5, 3), (5, 4))
    smoothing_widths: tuple[int, ...] = (1, 5)

    def __post_init__(self) -> None:
        for tau in self.taus:
            if tau % 2 != 0 or tau < 4:
                raise InvalidInputError(f"window lengths must be even and >= 4, got {tau}")
        for level in self.levels:
            if not 0.0 < level < 1.0:
                raise InvalidInputError(f"levels must lie in (0, 1), got {level}")
        for delta in self.deltas:
            if delta < 1:
                raise InvalidInputError(f"deltas must be >= 1, got {delta}")
        for beta in self.betas:
            if not 0.0 < beta < 1.0:
                raise InvalidInputError(f"betas must lie in (0, 1), got {beta}")
        for l, k in self.lk_pairs:
            if not 1 <= k <= l:
                raise InvalidInputError(f"need 1 <= k <= l, got (l={l}, k={k})")
        for width in self.smoothing_widths:
            if width % 2 != 1 or width < 1:
                raise InvalidInputError(f"smoothing widths must be odd and >= 1, got {width}")
        if sum(1 for w in self.smoothing_widths if w == 1) > 1 or sum(
            1 for w in self.smoothing_widths if w > 1
        ) > 1:
            raise InvalidInputError("at most one raw and one smoothed width are supported")


def build_catalog(grid: GridConfig | None = None) -> list[IndicatorSpec]:
    """Every indicator of the grid, in deterministic (sort key) order."""
    grid = grid or GridConfig()
    specs = []
    for width in grid.smoothing_widths:
        smoothed = width > 1
        for test in grid.tests:
            for tau in grid.taus:
                for level in grid.levels:
                    specs.append(IndicatorSpec(test, tau, level, smoothed, Simple()))
                    for delta in grid.deltas:
                        for beta in grid.betas:
                            specs.append(
                                IndicatorSpec(test, tau, level, smoothed, GlobalRatio(beta, delta))
                            )
                        for beta in grid.betas:
                            specs.append(
                                IndicatorSpec(
                                    test, tau, level, smoothed, ConsecutiveRatio(beta, delta)
                                )
                            )
                        for l, k in grid.lk_pairs:
                            specs.append(
                                IndicatorSpec(test, tau, level, smoothed, LocalRatio(l, k, delta))
                            )
    specs.sort(key=IndicatorSpec.sort_key)
    return specs


# ---------------------------------------------------------------------------
# matrix construction


@dataclass
class IndicatorMatrix:
    """Observations x indicators, with the catalog describing each column."""

    rows: np.ndarray
    catalog: list[IndicatorSpec]
    observation_ids: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.uint8)
        self.observation_ids = np.asarray(self.observation_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        n, p = self.rows.shape
        if p != len(self.catalog):
            raise InvalidInputError("row width does not match catalog size")
        if n != len(self.observation_ids) or n != len(self.labels):
            raise InvalidInputError("row count does not match ids/labels")

    @property
    def n_columns(self) -> int:
        return self.rows.shape[1]


def _smoothing_width(smoothed: bool, grid: GridConfig) -> int:
    widths = [w for w in grid.smoothing_widths if (w > 1) == smoothed]
    return widths[0]


def _plan_columns(catalog: Sequence[IndicatorSpec]) -> list[tuple]:
    """Group catalog columns by the bit series they read: one entry per
    (smoothed, test, tau, level) with the dependent (column, aggregator) pairs."""
    by_series: dict[tuple, list[tuple[int, Aggregator]]] = {}
    for idx, spec in enumerate(catalog):
        key = (spec.smoothed, spec.test_kind, spec.tau, spec.level)
        by_series.setdefault(key, []).append((idx, spec.aggregator))
    return [key + (cols,) for key, cols in by_series.items()]


def indicator_row(
    signal_values: np.ndarray,
    catalog: Sequence[IndicatorSpec],
    grid: GridConfig,
    plan: list[tuple] | None = None,
) -> np.ndarray:
    """All indicator bits of one signal, in catalog order.

    Window lengths exceeding the (possibly smoothed) signal leave no window
    to test, hence no detection: those cells are 0.
    """
    row = np.zeros(len(catalog), dtype=np.uint8)
    values = np.asarray(signal_values, dtype=np.float64)
    if len(values) < max(grid.taus):
        raise InvalidInputError(
            f"signal length {len(values)} shorter than largest window {max(grid.taus)}"
        )
    if plan is None:
        plan = _plan_columns(catalog)

    smoothed_cache: dict[bool, np.ndarray] = {}
    pseries_cache: dict[tuple, np.ndarray | None] = {}
    for smoothed, test, tau, level, cols in plan:
        if smoothed not in smoothed_cache:
            smoothed_cache[smoothed] = moving_average(values, _smoothing_width(smoothed, grid))
        vals = smoothed_cache[smoothed]
        skey = (smoothed, test, tau)
        if skey not in pseries_cache:
            pseries_cache[skey] = (
                p_value_series(vals, test, tau, smoothed).p_values if tau <= len(vals) else None
            )
        pvals = pseries_cache[skey]
        if pvals is None:
            continue  # no valid window: cells stay 0
        bits = (pvals < level).astype(np.uint8)
        sub_cache: dict[int, np.ndarray] = {}
        for idx, agg in cols:
            if isinstance(agg, Simple):
                row[idx] = bits.any()
                continue
            if agg.delta not in sub_cache:
                sub_cache[agg.delta] = subsample(bits, agg.delta)
            sub = sub_cache[agg.delta]
            if isinstance(agg, GlobalRatio):
                row[idx] = int(np.sum(sub)) / len(sub) >= agg.beta
            elif isinstance(agg, ConsecutiveRatio):
                row[idx] = _max_run(sub) >= run_threshold(agg.beta, len(sub))
            else:
                row[idx] = local_ratio(sub, agg.l, agg.k, 1)
    return row


def build_matrix(
    dataset: Sequence[Signal],
    grid: GridConfig | None = None,
    threads: int = 1,
) -> IndicatorMatrix:
    """Indicator matrix over a data set (pre-dedup), rows in id order."""
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    grid = grid or GridConfig()
    catalog = build_catalog(grid)
    ordered = sorted(dataset, key=lambda s: s.id)
    rows = _compute_rows(ordered, catalog, grid, threads)
    return IndicatorMatrix(
        rows=rows,
        catalog=catalog,
        observation_ids=np.array([s.id for s in ordered], dtype=np.int64),
        labels=np.array([int(s.label) for s in ordered], dtype=np.int8),
    )


_worker_env: dict = {}


def _init_worker(catalog, grid) -> None:
    _worker_env["catalog"] = catalog
    _worker_env["grid"] = grid
    _worker_env["plan"] = _plan_columns(catalog)


def _row_worker(values) -> np.ndarray:
    return indicator_row(values, _worker_env["catalog"], _worker_env["grid"], _worker_env["plan"])


def _compute_rows(
    ordered: Sequence[Signal], catalog: list[IndicatorSpec], grid: GridConfig, threads: int
) -> np.ndarray:
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, len(ordered) // (threads * 8))
        with ProcessPoolExecutor(
            max_workers=threads, initializer=_init_worker, initargs=(catalog, grid)
        ) as pool:
            rows = list(pool.map(_row_worker, [s.values for s in ordered], chunksize=chunk))
    else:
        plan = _plan_columns(catalog)
        rows = [indicator_row(s.values, catalog, grid, plan) for s in ordered]
    return np.vstack(rows)


def dedup_columns(matrix: IndicatorMatrix) -> tuple[IndicatorMatrix, dict[int, list[IndicatorSpec]]]:
    """Merge identical columns, keeping the first of each group in catalog order.

    Returns the reduced matrix and a map from kept column index (in the new
    matrix) to the specs that were merged into it.
    """
    seen: dict[bytes, int] = {}
    keep: list[int] = []
    duplicates: dict[int, list[IndicatorSpec]] = {}
    cols = np.ascontiguousarray(matrix.rows.T)
    for j in range(matrix.n_columns):
        key = cols[j].tobytes()
        if key in seen:
            duplicates[seen[key]].append(matrix.catalog[j])
        else:
            seen[key] = len(keep)
            duplicates[len(keep)] = []
            keep.append(j)
    logger.info("deduplicated %d columns down to %d", matrix.n_columns, len(keep))
    reduced = IndicatorMatrix(
        rows=matrix.rows[:, keep],
        catalog=[matrix.catalog[j] for j in keep],
        observation_ids=matrix.observation_ids,
        labels=matrix.labels,
    )
    return reduced, duplicates
