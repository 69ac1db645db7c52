"""CSV readers and writers for points, scores, diversity and trend tables."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .diversity import DiversityReport, diversity_report, mean_report, normalize_per_continent, pooled_report
from .geo import GeoPoint, minmax_normalize, normalize_continent
from .stats.trend import GroupedScores, TrendReport, numeric_levels, trend_report

log = logging.getLogger(__name__)

POINT_COLUMNS = ("model_tag", "continent", "lat", "lon")
SCORE_COLUMNS = ("model", "level", "score")
DIVERSITY_COLUMNS = ("model_tag", "scope", "n") + DiversityReport.METRICS
NAMED_ORDER = ("hard", "medium", "easy")


class TableError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _read_rows(text: str, required: Sequence[str], what: str) -> list[tuple[int, dict]]:
    if not text.strip():
        raise TableError(f"{what}: file is empty")
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise TableError(f"{what}: line 1: missing columns {missing}")
    rows = []
    for row in reader:
        if all(not (v or "").strip() for v in row.values() if isinstance(v, str)):
            continue
        rows.append((reader.line_num, row))
    if not rows:
        raise TableError(f"{what}: no data rows")
    return rows


def _float(row: dict, key: str, line: int, what: str) -> float:
    try:
        v = float(row[key])
    except (TypeError, ValueError):
        raise TableError(f"{what}: line {line}: bad {key} value {row.get(key)!r}") from None
    if not math.isfinite(v):
        raise TableError(f"{what}: line {line}: non-finite {key}")
    return v


# --- points / diversity -------------------------------------------------------

@dataclass(frozen=True)
class ProposedPoint:
    model_tag: str
    continent: str
    point: GeoPoint


def read_points_csv(text: str) -> list[ProposedPoint]:
    out = []
    for line, row in _read_rows(text, POINT_COLUMNS, "points"):
        model = (row["model_tag"] or "").strip()
        if not model:
            raise TableError(f"points: line {line}: empty model_tag")
        try:
            cont = normalize_continent(row["continent"])
            if cont is None:
                raise ValueError("empty continent")
            pt = GeoPoint(_float(row, "lat", line, "points"), _float(row, "lon", line, "points"))
        except TableError:
            raise
        except ValueError as exc:
            raise TableError(f"points: line {line}: {exc}") from None
        out.append(ProposedPoint(model, cont, pt))
    return out


@dataclass(frozen=True)
class DiversityRow:
    model_tag: str
    scope: str
    report: DiversityReport


def diversity_rows(points: Sequence[ProposedPoint]) -> list[DiversityRow]:
    """Per (model, continent) rows plus per-model 'mean' and 'pooled' aggregates."""
    by_model: dict[str, list[ProposedPoint]] = OrderedDict()
    for p in points:
        by_model.setdefault(p.model_tag, []).append(p)
    rows = []
    for model in sorted(by_model):
        sets = normalize_per_continent(((p.point, p.continent) for p in by_model[model]), model_tag=model)
        reports = [diversity_report(s) for s in sets]
        for s, r in zip(sets, reports):
            rows.append(DiversityRow(model, s.source_continent, r))
        rows.append(DiversityRow(model, "mean", mean_report(reports)))
        rows.append(DiversityRow(model, "pooled", pooled_report(sets)))
    return rows


def write_diversity_csv(rows: Sequence[DiversityRow]) -> str:
    return _write_csv(
        DIVERSITY_COLUMNS,
        ([r.model_tag, r.scope, r.report.n, *r.report.values()] for r in rows),
    )


def read_diversity_csv(text: str) -> list[DiversityRow]:
    out = []
    for line, row in _read_rows(text, DIVERSITY_COLUMNS, "diversity"):
        try:
            n = int(row["n"])
        except ValueError:
            raise TableError(f"diversity: line {line}: bad n") from None
        rep = DiversityReport(n=n, **{m: _float(row, m, line, "diversity") for m in DiversityReport.METRICS})
        out.append(DiversityRow(row["model_tag"], row["scope"], rep))
    return out


def radar_rows(rows: Sequence[DiversityRow], scope: str = "mean") -> list[tuple[str, list[float]]]:
    """Min-max normalise each metric across models for radar plotting."""
    picked = [r for r in rows if r.scope == scope]
    if not picked:
        return []
    cols = [minmax_normalize([getattr(r.report, m) for r in picked]) for m in DiversityReport.METRICS]
    return [(r.model_tag, [c[i] for c in cols]) for i, r in enumerate(picked)]


def write_radar_csv(radar: Sequence[tuple[str, Sequence[float]]]) -> str:
    return _write_csv(("model_tag",) + DiversityReport.METRICS, ([m, *vals] for m, vals in radar))


def read_radar_csv(text: str) -> list[tuple[str, list[float]]]:
    return [
        (row["model_tag"], [_float(row, m, line, "radar") for m in DiversityReport.METRICS])
        for line, row in _read_rows(text, ("model_tag",) + DiversityReport.METRICS, "radar")
    ]


# --- scores / trend ------------------------------------------------------------

def read_scores_csv(text: str) -> list[tuple[str, str, float]]:
    out = []
    for line, row in _read_rows(text, SCORE_COLUMNS, "scores"):
        model = (row["model"] or "").strip()
        level = (row["level"] or "").strip()
        if not model or not level:
            raise TableError(f"scores: line {line}: empty model or level")
        out.append((model, level, _float(row, "score", line, "scores")))
    return out


def write_scores_csv(rows: Iterable[Sequence]) -> str:
    """Rows of (model, level, score[, graph_id])."""
    return _write_csv(SCORE_COLUMNS + ("graph_id",), rows)


def order_levels(labels: Sequence[str], explicit: Optional[Sequence[str]] = None) -> list[str]:
    """Numeric labels sort by value; hard/medium/easy in that order;
    anything else keeps first-appearance order."""
    uniq = list(OrderedDict.fromkeys(labels))
    if explicit:
        missing = [l for l in uniq if l not in explicit]
        if missing:
            raise TableError(f"levels {missing} not in the explicit level order")
        return [l for l in explicit if l in uniq]
    nums = numeric_levels(uniq)
    if nums is not None:
        return [l for _, l in sorted(zip(nums, uniq))]
    lowered = [l.lower() for l in uniq]
    if set(lowered) <= set(NAMED_ORDER):
        return sorted(uniq, key=lambda l: NAMED_ORDER.index(l.lower()))
    return uniq


def trend_reports(
    scores: Sequence[tuple[str, str, float]],
    levels: Optional[Sequence[str]] = None,
    alpha: float = 0.05,
    ols_on: str = "samples",
) -> list[TrendReport]:
    by_model: dict[str, dict[str, list[float]]] = OrderedDict()
    for model, level, score in scores:
        by_model.setdefault(model, OrderedDict()).setdefault(level, []).append(score)
    out = []
    for model in sorted(by_model):
        groups = by_model[model]
        if len(groups) < 2:
            log.warning("skipping model %s: only %d level(s)", model, len(groups))
            continue
        order = order_levels(list(groups), levels)
        nums = numeric_levels(order)
        g = GroupedScores(tuple(order), tuple(tuple(groups[l]) for l in order), nums)
        out.append(trend_report(g, model=model, alpha=alpha, ols_on=ols_on))
    return out


TREND_COLUMNS = (
    "model",
    "f_stat",
    "f_p",
    "spearman_rho",
    "spearman_p",
    "ols_slope",
    "ols_p",
    "level_means",
    "remark",
    "spearman_p_exact",
    "levels",
)


def write_trend_csv(reports: Sequence[TrendReport]) -> str:
    return _write_csv(
        TREND_COLUMNS,
        (
            [
                r.model,
                r.f_stat,
                r.f_p,
                r.spearman_rho,
                r.spearman_p,
                r.ols_slope,
                r.ols_p,
                ";".join(repr(m) for m in r.level_means),
                "pass" if r.remark else "fail",
                r.spearman_p_exact,
                ";".join(r.levels),
            ]
            for r in reports
        ),
    )


def read_trend_csv(text: str) -> list[dict]:
    out = []
    for line, row in _read_rows(text, TREND_COLUMNS, "trend"):
        rec = {"model": row["model"]}
        for k in ("f_stat", "f_p", "spearman_rho", "spearman_p", "ols_slope", "ols_p"):
            try:
                rec[k] = float(row[k])
            except ValueError:
                raise TableError(f"trend: line {line}: bad {k}") from None
        rec["spearman_p_exact"] = float(row["spearman_p_exact"]) if row["spearman_p_exact"] else None
        rec["level_means"] = tuple(float(v) for v in row["level_means"].split(";"))
        rec["levels"] = tuple(row["levels"].split(";"))
        rec["remark"] = row["remark"] == "pass"
        out.append(rec)
    return out


def write_text_atomic(path: str | Path, text: str):
    """Write via a temp file in the same directory, then rename."""
    import os
    import tempfile

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
