"""Spatial diversity of proposed locations.

Points are min-max normalised to the unit square per continent, then
summarised by grid occupancy, grid entropy, convex-hull area, mean
nearest-neighbour distance and the Clark-Evans ratio.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geo import GeoPoint

GRID = 16


@dataclass(frozen=True)
class PointSet2D:
    points: tuple[tuple[float, float], ...]
    source_continent: str = ""
    model_tag: str = ""

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise ValueError("a point set needs at least one point")
        for x, y in pts:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValueError(f"point ({x}, {y}) outside the unit square")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class DiversityReport:
    n: int
    occupancy: float
    entropy: float
    hull_area: float
    clark_evans: float
    mean_nn: float

    METRICS = ("occupancy", "entropy", "hull_area", "clark_evans", "mean_nn")

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, m) for m in self.METRICS)


def _minmax_axis(vals: Sequence[float]) -> list[float]:
    lo, hi = min(vals), max(vals)
    if hi == lo:
        return [0.5] * len(vals)
    return [(v - lo) / (hi - lo) for v in vals]


def normalize_per_continent(
    raw: Iterable[tuple[GeoPoint, str]], model_tag: str = ""
) -> list[PointSet2D]:
    """Group by continent and map (lon, lat) onto [0, 1]^2 per axis.

    Zero-extent axes (including single points) map to 0.5. Output is sorted
    by continent code.
    """
    groups: dict[str, list[GeoPoint]] = defaultdict(list)
    for p, cont in raw:
        groups[cont].append(p)
    out = []
    for cont in sorted(groups):
        pts = groups[cont]
        xs = _minmax_axis([p.lon for p in pts])
        ys = _minmax_axis([p.lat for p in pts])
        out.append(PointSet2D(tuple(zip(xs, ys)), source_continent=cont, model_tag=model_tag))
    return out


def grid_cells(ps: PointSet2D, k: int = GRID) -> Counter:
    """Cell counts keyed by (col, row); the upper edge belongs to the last cell."""
    if k < 1:
        raise ValueError("grid side must be >= 1")
    arr = ps.array()
    idx = np.minimum(np.floor(arr * k).astype(np.int64), k - 1)
    return Counter(map(tuple, idx.tolist()))


def occupancy_grid(ps: PointSet2D, k: int = GRID) -> float:
    return len(grid_cells(ps, k)) / (k * k)


def grid_entropy(ps: PointSet2D, k: int = GRID) -> float:
    """Shannon entropy of cell frequencies divided by ln(k^2)."""
    counts = list(grid_cells(ps, k).values())
    if k == 1 or len(counts) == 1:
        return 0.0
    # count form ln N - sum(c ln c) / N; exact when every occupied cell holds one point
    n = sum(counts)
    h = math.log(n) - math.fsum(c * math.log(c) for c in counts if c > 1) / n
    return h / math.log(k * k)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone chain; counter-clockwise, collinear points dropped."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(poly: Sequence[tuple[float, float]]) -> float:
    """Shoelace area (absolute)."""
    n = len(poly)
    if n < 3:
        return 0.0
    s = math.fsum(poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1] for i in range(n))
    return abs(s) / 2.0


def hull_area(ps: PointSet2D) -> float:
    return polygon_area(convex_hull(ps.points))


def nn_distances(ps: PointSet2D) -> np.ndarray:
    arr = ps.array()
    if len(arr) < 2:
        raise ValueError("nearest-neighbour distance needs at least two points")
    d = np.sqrt(((arr[:, None, :] - arr[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def mean_nn(ps: PointSet2D) -> float:
    return float(nn_distances(ps).mean())


def clark_evans(ps: PointSet2D, area: float = 1.0) -> float:
    """Observed mean NN distance over 1 / (2 sqrt(n / area)); no edge correction."""
    if area <= 0:
        raise ValueError("area must be positive")
    n = len(ps)
    observed = mean_nn(ps)
    expected = 1.0 / (2.0 * math.sqrt(n / area))
    return observed / expected


def diversity_report(ps: PointSet2D, k: int = GRID) -> DiversityReport:
    """All five metrics. Sets with fewer than two points get 0 for the
    nearest-neighbour based ones instead of raising."""
    if len(ps) >= 2:
        nn, ce = mean_nn(ps), clark_evans(ps)
    else:
        nn, ce = 0.0, 0.0
    return DiversityReport(
        n=len(ps),
        occupancy=occupancy_grid(ps, k),
        entropy=grid_entropy(ps, k),
        hull_area=hull_area(ps),
        clark_evans=ce,
        mean_nn=nn,
    )


def mean_report(reports: Sequence[DiversityReport]) -> DiversityReport:
    if not reports:
        raise ValueError("no reports to average")
    m = len(reports)
    return DiversityReport(
        n=sum(r.n for r in reports),
        **{name: math.fsum(getattr(r, name) for r in reports) / m for name in DiversityReport.METRICS},
    )


def pooled_report(sets: Sequence[PointSet2D], k: int = GRID) -> DiversityReport:
    """Metrics over the union of already-normalised per-continent sets."""
    pts = tuple(p for s in sets for p in s.points)
    return diversity_report(PointSet2D(pts), k)
