"""Interval estimates used by the speed and probability estimators."""
import logging
import math
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy import stats

from erwlab.models import DEFAULT_BOOTSTRAP_RESAMPLES, ConfidenceInterval, ProportionEstimate

logger = logging.getLogger(__name__)

LEVELS = (0.95, 0.99)
MAX_BOOTSTRAP_UNITS = 200_000
# Bound on resample rows held in memory at once.
RESAMPLE_CHUNK_CELLS = 4_000_000


def z_value(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2.0))


def _interval(level: float, low: float, high: float, value: float) -> ConfidenceInterval:
    return ConfidenceInterval(level=level, low=min(low, value), high=max(high, value))


def batch_units(*columns: np.ndarray, limit: int = MAX_BOOTSTRAP_UNITS) -> Tuple[np.ndarray, ...]:
    """Sum consecutive rows into at most ``limit`` batches."""
    n = columns[0].size
    if n <= limit:
        return columns
    size = math.ceil(n / limit)
    edges = np.arange(0, n, size)
    logger.debug(f"Batching {n} bootstrap units into {edges.size} batches of {size}")
    return tuple(np.add.reduceat(c, edges) for c in columns)


def _resampled_sums(
    columns: Sequence[np.ndarray], resamples: int, seed: int
) -> np.ndarray:
    """(resamples, len(columns)) column sums over bootstrap index draws."""
    n = columns[0].size
    rng = np.random.default_rng(seed)
    stacked = np.stack(columns, axis=1)
    out = np.empty((resamples, len(columns)))
    rows = max(1, RESAMPLE_CHUNK_CELLS // max(n, 1))
    for start in range(0, resamples, rows):
        stop = min(resamples, start + rows)
        idx = rng.integers(0, n, size=(stop - start, n))
        out[start:stop] = stacked[idx].sum(axis=1)
    return out


def _percentiles(draws: np.ndarray, value: float) -> Dict[float, ConfidenceInterval]:
    intervals = {}
    for level in LEVELS:
        tail = 100.0 * (1.0 - level) / 2.0
        low, high = np.percentile(draws, [tail, 100.0 - tail])
        intervals[level] = _interval(level, float(low), float(high), value)
    return intervals


def bootstrap_ratio_ci(
    numerators: np.ndarray,
    denominators: np.ndarray,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> Tuple[float, Dict[float, ConfidenceInterval]]:
    """Ratio sum(num) / sum(den) with percentile bootstrap intervals over units."""
    num, den = batch_units(
        np.asarray(numerators, dtype=np.float64), np.asarray(denominators, dtype=np.float64)
    )
    value = float(num.sum() / den.sum())
    sums = _resampled_sums([num, den], resamples, seed)
    return value, _percentiles(sums[:, 0] / sums[:, 1], value)


def paired_bootstrap_ratio_ci(
    numerators: np.ndarray,
    denominators_p: np.ndarray,
    denominators_q: np.ndarray,
    resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> Dict[str, Tuple[float, Dict[float, ConfidenceInterval]]]:
    """Ratios for p and q over shared numerators, plus their difference q - p.

    All three statistics are evaluated on the same resampled indices.
    """
    num, den_p, den_q = batch_units(
        np.asarray(numerators, dtype=np.float64),
        np.asarray(denominators_p, dtype=np.float64),
        np.asarray(denominators_q, dtype=np.float64),
    )
    v_p = float(num.sum() / den_p.sum())
    v_q = float(num.sum() / den_q.sum())
    sums = _resampled_sums([num, den_p, den_q], resamples, seed)
    draws_p = sums[:, 0] / sums[:, 1]
    draws_q = sums[:, 0] / sums[:, 2]
    return {
        "p": (v_p, _percentiles(draws_p, v_p)),
        "q": (v_q, _percentiles(draws_q, v_q)),
        "diff": (v_q - v_p, _percentiles(draws_q - draws_p, v_q - v_p)),
    }


def normal_mean_ci(values: np.ndarray) -> Tuple[float, Dict[float, ConfidenceInterval]]:
    values = np.asarray(values, dtype=np.float64)
    value = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.inf
    return value, {
        level: _interval(level, value - z_value(level) * se, value + z_value(level) * se, value)
        for level in LEVELS
    }


def wilson_interval(count: int, trials: int, level: float) -> ConfidenceInterval:
    if trials == 0:
        return ConfidenceInterval(level=level, low=0.0, high=1.0)
    ci = stats.binomtest(count, trials).proportion_ci(confidence_level=level, method="wilson")
    return _interval(level, max(0.0, float(ci.low)), min(1.0, float(ci.high)), count / trials)


def proportion(count: int, trials: int) -> ProportionEstimate:
    return ProportionEstimate(
        value=count / trials if trials else 0.0,
        ci95=wilson_interval(count, trials, 0.95),
        ci99=wilson_interval(count, trials, 0.99),
        count=count,
        trials=trials,
    )


def paired_proportion_difference(
    first: np.ndarray, second: np.ndarray
) -> ProportionEstimate:
    """Estimate of P(second) - P(first) from paired 0/1 indicators."""
    diff = np.asarray(second, dtype=np.float64) - np.asarray(first, dtype=np.float64)
    value, intervals = normal_mean_ci(diff)
    return ProportionEstimate(
        value=value,
        ci95=intervals[0.95],
        ci99=intervals[0.99],
        count=int(np.asarray(second).sum() - np.asarray(first).sum()),
        trials=int(diff.size),
    )
