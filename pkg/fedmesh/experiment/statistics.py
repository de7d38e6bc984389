"""
Comparison statistics of experiment outcomes.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int


@dataclass(frozen=True)
class TrendResult:
    rho: float
    p_value: float


def anova_one_way(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """
    Classical one-way ANOVA. The p-value is the upper tail of the F(k - 1, n - k) distribution, evaluated through the
    regularized incomplete beta function. Groups with distinct means and no within-group spread give F = inf, p = 0.
    @param groups: At least two groups of at least two finite values each.
    @type groups: Sequence[Sequence[float]]
    @return: F statistic, p-value and degrees of freedom.
    @rtype: AnovaResult
    """
    groups = [np.asarray(group, dtype=np.float64).reshape(-1) for group in groups]
    if len(groups) < 2:
        raise ValueError(f'one-way ANOVA needs at least 2 groups, got {len(groups)}')
    for index, group in enumerate(groups):
        if len(group) < 2:
            raise ValueError(f'group {index} has {len(group)} value(s), at least 2 are needed')
    values = np.concatenate(groups)
    if not np.all(np.isfinite(values)):
        raise ValueError('ANOVA input contains non-finite values')
    if np.all(values == values[0]):
        raise ValueError('all values are identical, the F statistic is undefined')

    grand_mean = values.mean()
    ss_between = sum(len(group) * (group.mean() - grand_mean) ** 2 for group in groups)
    ss_within = sum(float(np.sum((group - group.mean()) ** 2)) for group in groups)
    df_between, df_within = len(groups) - 1, len(values) - len(groups)
    if ss_within == 0:
        return AnovaResult(float('inf'), 0.0, df_between, df_within)
    f_statistic = (ss_between / df_between) / (ss_within / df_within)
    p_value = special.betainc(df_within / 2, df_between / 2, df_within / (df_within + df_between * f_statistic))
    return AnovaResult(float(f_statistic), float(p_value), df_between, df_within)


def size_performance_trend(sizes: Sequence[float], scores: Sequence[float]) -> TrendResult:
    """
    Spearman rank correlation between site training-set sizes and the scores their models reach.
    """
    if len(sizes) != len(scores):
        raise ValueError(f'{len(sizes)} sizes but {len(scores)} scores')
    if len(sizes) < 3:
        raise ValueError('a rank correlation needs at least 3 observations')
    rho, p_value = stats.spearmanr(sizes, scores)
    return TrendResult(float(rho), float(p_value))
