"""Test statistics shared by all experiments."""
from __future__ import annotations

import numpy as np
from scipy import stats

MIN_SAMPLES = 50
ALPHA = 0.01
Z_MAX = 3.0


class TooFewSamples(ValueError):
    pass


def ks_two_sample(xs, ys) -> tuple[float, float]:
    """Two-sample KS statistic with the asymptotic p-value."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if min(len(xs), len(ys)) < MIN_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_SAMPLES} samples per side")
    res = stats.ks_2samp(xs, ys, method="asymp")
    return float(res.statistic), float(res.pvalue)


def chi_square(observed, expected, ddof: int = 0) -> tuple[float, float]:
    """Pearson goodness of fit; ``expected`` is rescaled to the observed total."""
    obs = np.asarray(observed, float)
    exp = np.asarray(expected, float)
    if obs.sum() < MIN_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_SAMPLES} counts")
    exp = exp * obs.sum() / exp.sum()
    res = stats.chisquare(obs, exp, ddof=ddof)
    return float(res.statistic), float(res.pvalue)


def chi_square_homogeneity(table) -> tuple[float, float]:
    """Chi-square test that the rows of a contingency table share one law."""
    table = np.asarray(table, float)
    table = table[:, table.sum(axis=0) > 0]
    if table.sum() < MIN_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_SAMPLES} counts")
    res = stats.chi2_contingency(table, correction=False)
    return float(res[0]), float(res[1])


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def z_pvalue(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def empirical_pmf(samples, size: int | None = None) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.int64)
    counts = np.bincount(samples, minlength=size or 0)
    return counts / counts.sum()


def correlation_z(x, eps) -> tuple[float, float]:
    """Sample correlation of ``x`` with a centred sequence ``eps`` and a robust z-score.

    ``eps`` must have mean zero given ``x`` under the null, so the z-score uses
    the heteroskedasticity-robust standard error of ``sum (x - mean) eps``.
    """
    x = np.asarray(x, float)
    eps = np.asarray(eps, float)
    xc = x - x.mean()
    num = float(np.sum(xc * eps))
    den = float(np.sqrt(np.sum(xc * xc) * np.sum(eps * eps)))
    rho = num / den if den > 0 else 0.0
    se = float(np.sqrt(np.sum(xc * xc * eps * eps)))
    return rho, (num / se if se > 0 else 0.0)


def z_threshold(k: int, z: float = Z_MAX) -> float:
    """Per-check z bound keeping the family error of ``k`` checks at that of one ``z`` check."""
    level = 2.0 * stats.norm.sf(z)
    return float(stats.norm.isf(level / (2.0 * max(1, k))))
