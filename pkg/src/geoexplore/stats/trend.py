"""One-way ANOVA, Spearman rank correlation and OLS trend across ordered condition levels."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .special import f_sf, t_sf_two_sided

EXACT_MAX_N = 8
ALPHA = 0.05


@dataclass(frozen=True)
class GroupedScores:
    """Per-level score samples. ``levels`` are in increasing condition order.

    ``x_values`` are the numeric positions used for the OLS slope; when not
    given they come from the labels if every label is numeric ("20%",
    "0.5"), and fall back to 0, 1, 2, ...
    """

    levels: tuple[str, ...]
    samples: tuple[tuple[float, ...], ...]
    x_values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        levels = tuple(str(l) for l in self.levels)
        samples = tuple(tuple(float(v) for v in s) for s in self.samples)
        if len(levels) < 2:
            raise ValueError("need at least two levels")
        if len(set(levels)) != len(levels):
            raise ValueError(f"duplicate level labels in {levels}")
        if len(samples) != len(levels):
            raise ValueError("one sample list per level required")
        if any(len(s) == 0 for s in samples):
            raise ValueError("every level needs at least one sample")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "samples", samples)
        xs = self.x_values
        if xs is None:
            xs = numeric_levels(levels)
        if xs is None:
            xs = tuple(float(i) for i in range(len(levels)))
        xs = tuple(float(x) for x in xs)
        if len(xs) != len(levels) or any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError(f"level positions must be strictly increasing, got {xs}")
        object.__setattr__(self, "x_values", xs)

    @property
    def means(self) -> tuple[float, ...]:
        return tuple(math.fsum(s) / len(s) for s in self.samples)


_NUMERIC = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+))\s*%?\s*$")


def numeric_levels(labels: Sequence[str]) -> Optional[tuple[float, ...]]:
    out = []
    for lab in labels:
        m = _NUMERIC.match(lab)
        if not m:
            return None
        out.append(float(m.group(1)))
    return tuple(out)


@dataclass(frozen=True)
class AnovaResult:
    f: float
    p: float
    df_between: int
    df_within: int
    ss_between: float
    ss_within: float


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_exact: Optional[float]
    p_asymptotic: float
    n: int
    defined: bool = True


@dataclass(frozen=True)
class OlsResult:
    slope: float
    intercept: float
    p: float
    stderr: float
    df: int


def anova_oneway(groups) -> AnovaResult:
    """F = MSB / MSW with df (k-1, n-k); p from the F upper tail.

    Zero within-group variance gives F = inf, p = 0 when the group means
    differ, and F = 0, p = 1 when every value is identical.
    """
    if isinstance(groups, GroupedScores):
        groups = groups.samples
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    n = sum(len(g) for g in groups)
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise ValueError("empty group")
    if n <= k:
        raise ValueError(f"need more observations ({n}) than groups ({k})")
    grand = math.fsum(float(g.sum()) for g in groups) / n
    ssb = math.fsum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = math.fsum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    dfb, dfw = k - 1, n - k
    scale = math.fsum(float(((g - grand) ** 2).sum()) for g in groups)
    if ssw <= 1e-13 * scale or ssw == 0.0:
        if ssb <= 1e-13 * scale or ssb == 0.0:
            return AnovaResult(0.0, 1.0, dfb, dfw, ssb, ssw)
        return AnovaResult(math.inf, 0.0, dfb, dfw, ssb, ssw)
    f = (ssb / dfb) / (ssw / dfw)
    return AnovaResult(f, f_sf(f, dfb, dfw), dfb, dfw, ssb, ssw)


def rankdata(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties get the average rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(len(arr), dtype=np.float64)
    sorted_vals = arr[order]
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    return float((xc * yc).sum() / math.sqrt((xc * xc).sum() * (yc * yc).sum()))


def spearman(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    n = len(x)
    if n < 3:
        raise ValueError("Spearman correlation needs n >= 3")
    rx, ry = rankdata(x), rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return SpearmanResult(math.nan, None, math.nan, n, defined=False)
    rho = max(-1.0, min(1.0, _pearson(rx, ry)))
    if abs(rho) >= 1.0 - 1e-12:
        rho = math.copysign(1.0, rho)
        p_asym = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p_asym = t_sf_two_sided(t, n - 2)

    p_exact = None
    if n <= EXACT_MAX_N:
        perms = np.array(list(itertools.permutations(ry)), dtype=np.float64)
        xc = rx - rx.mean()
        pc = perms - perms.mean(axis=1, keepdims=True)
        r = (pc @ xc) / np.sqrt((xc * xc).sum() * (pc * pc).sum(axis=1))
        p_exact = float(np.count_nonzero(np.abs(r) >= abs(rho) - 1e-12)) / len(perms)
    return SpearmanResult(rho, p_exact, p_asym, n)


def ols_trend(x: Sequence[float], y: Sequence[float]) -> OlsResult:
    """Least-squares slope with a two-sided t-test on it (df = n - 2)."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError("x and y differ in length")
    n = len(xa)
    if n < 3:
        raise ValueError("OLS trend needs n >= 3")
    xc = xa - xa.mean()
    sxx = float((xc * xc).sum())
    if sxx == 0:
        raise ValueError("x is constant; slope undefined")
    yc = ya - ya.mean()
    slope = float((xc * yc).sum()) / sxx
    intercept = float(ya.mean() - slope * xa.mean())
    resid = yc - slope * xc
    sse = float((resid * resid).sum())
    syy = float((yc * yc).sum())
    df = n - 2
    if sse <= 1e-24 * max(syy, 1e-300) or sse == 0.0:
        return OlsResult(slope, intercept, 0.0 if slope != 0 else 1.0, 0.0, df)
    se = math.sqrt(sse / df / sxx)
    t = slope / se
    return OlsResult(slope, intercept, t_sf_two_sided(t, df), se, df)


@dataclass
class TrendReport:
    model: str
    levels: tuple[str, ...]
    f_stat: float
    f_p: float
    spearman_rho: float
    spearman_p: float
    spearman_p_exact: Optional[float]
    ols_slope: float
    ols_p: float
    level_means: tuple[float, ...]
    monotone_pass: bool
    remark: bool
    n_samples: tuple[int, ...] = field(default_factory=tuple)

    # Table column order: F, p, rho, p(rho), slope, p(slope), level means, remark
    def row(self) -> dict:
        out = {
            "model": self.model,
            "f_stat": self.f_stat,
            "f_p": self.f_p,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "ols_slope": self.ols_slope,
            "ols_p": self.ols_p,
        }
        for lab, m in zip(self.levels, self.level_means):
            out[f"mean[{lab}]"] = m
        out["remark"] = "pass" if self.remark else "fail"
        out["spearman_p_exact"] = self.spearman_p_exact
        out["monotone"] = self.monotone_pass
        return out


def trend_report(g: GroupedScores, model: str = "", alpha: float = ALPHA, ols_on: str = "samples") -> TrendReport:
    """All trend statistics for one model.

    ``monotone_pass`` holds when the level means are perfectly rank-ordered
    with the levels (Spearman rho = 1). ``remark`` additionally requires the
    ANOVA p-value to be below ``alpha``. Spearman p is the asymptotic value;
    the exact permutation p is kept alongside.
    """
    if ols_on not in ("samples", "means"):
        raise ValueError("ols_on must be 'samples' or 'means'")
    an = anova_oneway(g.samples)
    means = g.means
    idx = list(range(len(means)))
    if len(means) >= 3:
        sp = spearman(idx, means)
    else:
        # two levels: rank correlation is just the sign of the difference
        diff = means[1] - means[0]
        rho = math.copysign(1.0, diff) if diff != 0 else math.nan
        sp = SpearmanResult(rho, None, math.nan, 2, defined=diff != 0)
    if ols_on == "samples":
        xs = [x for x, s in zip(g.x_values, g.samples) for _ in s]
        ys = [v for s in g.samples for v in s]
    else:
        xs, ys = list(g.x_values), list(means)
    if len(xs) >= 3:
        ols = ols_trend(xs, ys)
    else:
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        ols = OlsResult(slope, ys[0] - slope * xs[0], math.nan, math.nan, 0)
    monotone = sp.defined and sp.rho == 1.0
    return TrendReport(
        model=model,
        levels=g.levels,
        f_stat=an.f,
        f_p=an.p,
        spearman_rho=sp.rho,
        spearman_p=sp.p_asymptotic,
        spearman_p_exact=sp.p_exact,
        ols_slope=ols.slope,
        ols_p=ols.p,
        level_means=means,
        monotone_pass=monotone,
        remark=bool(monotone and an.p < alpha),
        n_samples=tuple(len(s) for s in g.samples),
    )
