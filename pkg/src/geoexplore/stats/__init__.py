"""Significance and trend statistics."""

from .special import f_cdf, f_sf, reg_inc_beta, t_sf_two_sided
from .trend import (
    AnovaResult,
    GroupedScores,
    OlsResult,
    SpearmanResult,
    TrendReport,
    anova_oneway,
    ols_trend,
    rankdata,
    spearman,
    trend_report,
)

__all__ = [
    "f_cdf",
    "f_sf",
    "reg_inc_beta",
    "t_sf_two_sided",
    "AnovaResult",
    "GroupedScores",
    "OlsResult",
    "SpearmanResult",
    "TrendReport",
    "anova_oneway",
    "ols_trend",
    "rankdata",
    "spearman",
    "trend_report",
]
