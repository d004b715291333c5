"""Shared statistics helpers for the test suite."""

import numpy as np
from scipy import stats


def chi_square_pvalue(counts, expected) -> float:
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    stat = ((counts - expected) ** 2 / expected).sum()
    return float(stats.chi2.sf(stat, df=counts.size - 1))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    denom = 1 + z**2 / trials
    center = (phat + z**2 / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))
