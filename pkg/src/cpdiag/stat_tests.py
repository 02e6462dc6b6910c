"""Two-sample tests producing p-values: Mann-Whitney U, Kolmogorov-Smirnov, F.

All three are two-sided.  The helpers at the bottom accept scalars or numpy
arrays so that the sliding-window engine can evaluate whole batches of
windows with numerics identical to the scalar API.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import betainc, erfc
from scipy.stats import rankdata

from .errors import DegenerateInputError, InvalidInputError

# exact Mann-Whitney p-values for pooled sizes up to this bound (no ties)
MWU_EXACT_MAX_POOLED = 16

_KS_SERIES_TOL = 1e-10


class TestKind(Enum):
    MWU = "mwu"
    KS2 = "ks2"
    FVAR = "fvar"


class TestResult(NamedTuple):
    statistic: float
    p_value: float


def _validate_pair(s1: np.ndarray, s2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if s1.ndim != 1 or s2.ndim != 1:
        raise InvalidInputError("samples must be one-dimensional")
    if len(s1) < 2 or len(s2) < 2:
        raise InvalidInputError("each sample needs at least 2 observations")
    if not (np.isfinite(s1).all() and np.isfinite(s2).all()):
        raise InvalidInputError("samples must be finite")
    return s1, s2


# ---------------------------------------------------------------------------
# Mann-Whitney U


@lru_cache(maxsize=None)
def _mwu_exact_counts(n1: int, n2: int) -> tuple[int, ...]:
    """Null distribution of U as integer counts over u = 0..n1*n2 (no ties)."""
    if n1 == 0 or n2 == 0:
        return (1,)
    a = _mwu_exact_counts(n1 - 1, n2)
    b = _mwu_exact_counts(n1, n2 - 1)
    counts = []
    for u in range(n1 * n2 + 1):
        s = 0
        if 0 <= u - n2 <= (n1 - 1) * n2:
            s += a[u - n2]
        if u <= n1 * (n2 - 1):
            s += b[u]
        counts.append(s)
    return tuple(counts)


def mwu_exact_p(u: float, n1: int, n2: int) -> float:
    """Exact two-sided p-value: 2 * P(U <= min(u, n1*n2 - u)), capped at 1."""
    counts = _mwu_exact_counts(n1, n2)
    total = sum(counts)
    u_min = int(min(u, n1 * n2 - u))
    tail = sum(counts[: u_min + 1])
    return min(1.0, 2.0 * tail / total)


def mwu_normal_p(u, n1: int, n2: int, tie_term=0.0):
    """Two-sided normal-approximation p-value with continuity correction.

    ``tie_term`` is sum(t^3 - t) over tie group sizes t of the pooled sample;
    it shrinks the null variance.  A zero variance (all values tied) gives
    p = 1: such a window carries no evidence of change.
    """
    u = np.asarray(u, dtype=np.float64)
    n = n1 + n2
    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - np.asarray(tie_term, dtype=np.float64) / (n * (n - 1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.maximum(np.abs(u - mean) - 0.5, 0.0) / np.sqrt(var)
        p = erfc(z / np.sqrt(2.0))
    p = np.where(var <= 0.0, 1.0, p)
    return np.clip(p, 0.0, 1.0)[()]


def tie_correction_term(pooled_sorted: np.ndarray) -> float:
    """sum(t^3 - t) over tie groups of an already sorted 1-d array."""
    if len(pooled_sorted) == 0:
        return 0.0
    boundaries = np.flatnonzero(np.diff(pooled_sorted) != 0)
    edges = np.concatenate(([-1], boundaries, [len(pooled_sorted) - 1]))
    t = np.diff(edges).astype(np.float64)
    return float(np.sum(t**3 - t))


def mann_whitney_u(s1, s2) -> TestResult:
    """Mann-Whitney-Wilcoxon U test (two-sided).

    The statistic is U for the first sample.  Pooled sizes up to 16 without
    ties use exact enumeration; everything else uses the tie-corrected normal
    approximation with continuity correction.
    """
    s1, s2 = _validate_pair(s1, s2)
    n1, n2 = len(s1), len(s2)
    pooled = np.concatenate([s1, s2])
    ranks = rankdata(pooled)
    u1 = float(np.sum(ranks[:n1]) - n1 * (n1 + 1) / 2.0)
    tie_term = tie_correction_term(np.sort(pooled))
    if n1 + n2 <= MWU_EXACT_MAX_POOLED and tie_term == 0.0:
        p = mwu_exact_p(u1, n1, n2)
    else:
        p = float(mwu_normal_p(u1, n1, n2, tie_term))
    return TestResult(statistic=u1, p_value=p)


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov


def kolmogorov_sf(lam):
    """Asymptotic Kolmogorov survival function Q(lam) = 2 sum (-1)^(k-1) exp(-2 k^2 lam^2).

    The series is truncated once terms drop below 1e-10.  For tiny lam the
    series converges slowly toward 1, so the value is pinned there.
    """
    lam = np.asarray(lam, dtype=np.float64)
    out = np.ones_like(lam)
    active = lam > 0.05
    if np.any(active):
        x = lam[active]
        acc = np.zeros_like(x)
        for k in range(1, 400):
            term = np.exp(-2.0 * k * k * x * x)
            acc += term if k % 2 == 1 else -term
            if float(term.max()) < _KS_SERIES_TOL:
                break
        out[active] = 2.0 * acc
    return np.clip(out, 0.0, 1.0)[()]


def ks_statistic(s1: np.ndarray, s2: np.ndarray) -> float:
    """D = sup_x |F1(x) - F2(x)| over the pooled sample, ties handled via step CDFs."""
    n1, n2 = len(s1), len(s2)
    pooled = np.concatenate([s1, s2])
    order = np.argsort(pooled, kind="stable")
    sorted_vals = pooled[order]
    in_first = (order < n1).astype(np.float64)
    cum1 = np.cumsum(in_first)
    cum2 = np.arange(1, n1 + n2 + 1) - cum1
    diff = np.abs(cum1 / n1 - cum2 / n2)
    # the sup of step CDFs is attained after the last copy of each value
    last_of_run = np.concatenate([sorted_vals[1:] != sorted_vals[:-1], [True]])
    return float(diff[last_of_run].max())


def ks_p_value(d, n1: int, n2: int):
    """Asymptotic p-value with effective size n1*n2/(n1+n2) and the standard
    small-sample adjustment of the scale argument."""
    ne = n1 * n2 / (n1 + n2)
    scale = np.sqrt(ne) + 0.12 + 0.11 / np.sqrt(ne)
    return kolmogorov_sf(scale * np.asarray(d, dtype=np.float64))


def ks_two_sample(s1, s2) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test (two-sided, asymptotic p-value)."""
    s1, s2 = _validate_pair(s1, s2)
    d = ks_statistic(s1, s2)
    p = float(ks_p_value(d, len(s1), len(s2)))
    return TestResult(statistic=d, p_value=p)


# ---------------------------------------------------------------------------
# F-test for equality of variances


def f_cdf(f, d1, d2):
    """CDF of the F(d1, d2) distribution via the regularized incomplete beta."""
    f = np.asarray(f, dtype=np.float64)
    x = d1 * f / (d1 * f + d2)
    return betainc(d1 / 2.0, d2 / 2.0, x)


def f_two_sided_p(f, d1, d2):
    """2 * min(CDF, 1 - CDF), the equal-tail two-sided p-value.

    The upper tail is computed through the complement identity of the
    incomplete beta so both tails keep full relative accuracy.
    """
    f = np.asarray(f, dtype=np.float64)
    x = d1 * f / (d1 * f + d2)
    lower = betainc(d1 / 2.0, d2 / 2.0, x)
    upper = betainc(d2 / 2.0, d1 / 2.0, d2 / (d1 * f + d2))
    return np.clip(2.0 * np.minimum(lower, upper), 0.0, 1.0)[()]


def f_variance_test(s1, s2) -> TestResult:
    """F-test for equality of variances (two-sided), F = var(s1)/var(s2).

    Raises DegenerateInputError when either sample variance is zero; callers
    that scan windows map that case to p = 1.
    """
    s1, s2 = _validate_pair(s1, s2)
    v1 = float(np.var(s1, ddof=1))
    v2 = float(np.var(s2, ddof=1))
    if v1 <= 0.0 or v2 <= 0.0:
        raise DegenerateInputError("zero sample variance")
    f = v1 / v2
    p = float(f_two_sided_p(f, len(s1) - 1, len(s2) - 1))
    return TestResult(statistic=f, p_value=p)


def run_test(kind: TestKind, s1, s2) -> TestResult:
    if kind == TestKind.MWU:
        return mann_whitney_u(s1, s2)
    if kind == TestKind.KS2:
        return ks_two_sample(s1, s2)
    if kind == TestKind.FVAR:
        return f_variance_test(s1, s2)
    raise InvalidInputError(f"unknown test kind {kind!r}")
