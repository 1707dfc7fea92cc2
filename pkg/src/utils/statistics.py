"""
Error bars for correlated Monte Carlo series.
"""
import math
from dataclasses import dataclass

import numpy as np

MIN_BATCHES = 16
MAX_LAG1 = 0.1


@dataclass
class BatchEstimate:
    mean: float
    err: float
    batch_size: int
    batches: int
    lag1: float
    flagged: bool  # too few batches for a decorrelated error bar


def lag1_autocorrelation(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        return 0.0
    centred = values - values.mean()
    denominator = float(np.dot(centred, centred))
    if denominator == 0:
        return 0.0
    return float(np.dot(centred[:-1], centred[1:]) / denominator)


def batch_means(series, min_batches: int = MIN_BATCHES, max_lag1: float = MAX_LAG1) -> BatchEstimate:
    """
    Batch-means error of the mean of `series`.

    The batch size doubles until the lag-1 autocorrelation of the batch
    means drops below max_lag1; the estimate is flagged when that leaves
    fewer than min_batches batches.
    """
    series = np.asarray(series, dtype=float)
    total = len(series)
    if total == 0:
        return BatchEstimate(math.nan, math.nan, 0, 0, 0.0, True)
    size = 1
    while True:
        batches = total // size
        means = series[:batches * size].reshape(batches, size).mean(axis=1)
        lag1 = lag1_autocorrelation(means)
        if lag1 < max_lag1 or batches // 2 < 2:
            break
        size *= 2
    err = float(means.std(ddof=1) / math.sqrt(batches)) if batches > 1 else math.nan
    return BatchEstimate(
        mean=float(series.mean()),
        err=err,
        batch_size=size,
        batches=batches,
        lag1=lag1,
        flagged=batches < min_batches or lag1 >= max_lag1,
    )


def merge_estimates(estimates) -> BatchEstimate:
    """Equal-weight merge of independent estimates, in the given order."""
    estimates = list(estimates)
    count = len(estimates)
    mean = math.fsum(e.mean for e in estimates) / count
    err = math.sqrt(math.fsum(e.err ** 2 for e in estimates)) / count
    return BatchEstimate(
        mean=mean,
        err=err,
        batch_size=min(e.batch_size for e in estimates),
        batches=sum(e.batches for e in estimates),
        lag1=max(e.lag1 for e in estimates),
        flagged=any(e.flagged for e in estimates),
    )
