import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoexplore.diversity import (
    PointSet2D,
    clark_evans,
    convex_hull,
    diversity_report,
    grid_cells,
    grid_entropy,
    hull_area,
    mean_nn,
    mean_report,
    normalize_per_continent,
    occupancy_grid,
    polygon_area,
    pooled_report,
)
from geoexplore.geo import GeoPoint


def brute_force_hull_area(pts):
    """O(n^3): a directed pair (i, j) is a ccw hull edge when no point lies to its right."""
    p = np.asarray(pts, dtype=np.float64)
    d = p[None, :, :] - p[:, None, :]  # d[i, j] = p_j - p_i
    # cross[i, j, k] = (p_j - p_i) x (p_k - p_i)
    cross = d[:, :, None, 0] * d[:, None, :, 1] - d[:, :, None, 1] * d[:, None, :, 0]
    n = len(p)
    ok = (cross >= 0).all(axis=2) & ~np.eye(n, dtype=bool)
    i, j = np.nonzero(ok)
    return abs(math.fsum(p[i, 0] * p[j, 1] - p[j, 0] * p[i, 1])) / 2.0


def test_hull_area_matches_brute_force():
    rng = np.random.default_rng(123)
    for _ in range(500):
        pts = [tuple(x) for x in rng.random((50, 2))]
        assert hull_area(PointSet2D(pts)) == pytest.approx(brute_force_hull_area(pts), abs=1e-12)


def test_hull_simple_cases():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (0.5, 0)]
    hull = convex_hull(sq)
    assert sorted(hull) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert polygon_area(hull) == 1.0
    assert convex_hull([(0.2, 0.2)]) == [(0.2, 0.2)]
    assert hull_area(PointSet2D([(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)])) == 0.0
    # counter-clockwise orientation
    h = convex_hull([(0, 0), (1, 0), (0, 1)])
    s = sum(h[i][0] * h[(i + 1) % 3][1] - h[(i + 1) % 3][0] * h[i][1] for i in range(3))
    assert s > 0


unit_pts = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40)


@settings(max_examples=150)
@given(unit_pts)
def test_hull_contains_all_points(pts):
    hull = convex_hull(pts)
    area = polygon_area(hull)
    assert 0.0 <= area <= 1.0 + 1e-12
    if len(hull) >= 3:
        for q in pts:
            for a, b in zip(hull, hull[1:] + hull[:1]):
                cr = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
                assert cr >= -1e-12
    assert polygon_area(convex_hull(list(reversed(pts)))) == pytest.approx(area, abs=1e-15)


def regular_grid(m):
    return PointSet2D([((i + 0.5) / m, (j + 0.5) / m) for i in range(m) for j in range(m)])


def test_clark_evans_regular_grid():
    assert clark_evans(regular_grid(10)) == pytest.approx(2.0, abs=0.05)
    assert mean_nn(regular_grid(10)) == pytest.approx(0.1)


def test_clark_evans_uniform_random():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        r = clark_evans(PointSet2D([tuple(x) for x in rng.random((500, 2))]))
        assert 0.9 <= r <= 1.15


def test_clark_evans_clustered_is_small():
    rng = np.random.default_rng(1)
    pts = np.clip(0.5 + 0.01 * rng.standard_normal((200, 2)), 0, 1)
    ps = PointSet2D([tuple(x) for x in pts])
    assert clark_evans(ps) < 0.2
    with pytest.raises(ValueError):
        clark_evans(ps, area=0)
    with pytest.raises(ValueError):
        mean_nn(PointSet2D([(0.5, 0.5)]))


def test_entropy_and_occupancy():
    full = regular_grid(16)
    assert grid_entropy(full) == 1.0
    assert occupancy_grid(full) == 1.0
    one = PointSet2D([(0.3, 0.3)] * 10)
    assert grid_entropy(one) == 0.0
    assert occupancy_grid(one) == 1 / 256
    # two equally filled cells: ln 2 / ln 256 = 1/8
    two = PointSet2D([(0.01, 0.01), (0.99, 0.99)] * 3)
    assert grid_entropy(two) == pytest.approx(0.125, abs=1e-15)


def test_upper_edge_belongs_to_last_cell():
    cells = grid_cells(PointSet2D([(1.0, 1.0), (0.0, 0.0)]))
    assert set(cells) == {(15, 15), (0, 0)}


@given(unit_pts)
def test_metric_ranges(pts):
    r = diversity_report(PointSet2D(pts))
    assert 0 < r.occupancy <= 1
    assert 0 <= r.entropy <= 1 + 1e-12
    assert 0 <= r.hull_area <= 1 + 1e-12
    assert r.clark_evans >= 0 and r.mean_nn >= 0


def test_normalization_per_continent():
    raw = [
        (GeoPoint(10, 20), "eu"),
        (GeoPoint(30, 40), "eu"),
        (GeoPoint(-5, 100), "as"),
    ]
    sets = normalize_per_continent(raw, model_tag="m")
    assert [s.source_continent for s in sets] == ["as", "eu"]
    assert sets[0].points == ((0.5, 0.5),)
    assert sets[1].points == ((0.0, 0.0), (1.0, 1.0))
    rep = diversity_report(sets[0])
    assert (rep.n, rep.clark_evans, rep.mean_nn, rep.hull_area) == (1, 0.0, 0.0, 0.0)


def test_uniform_dominates_clustered():
    rng = np.random.default_rng(3)
    uni = normalize_per_continent([(GeoPoint(*p), "af") for p in zip(rng.uniform(-30, 30, 300), rng.uniform(-15, 50, 300))])
    c_lat = np.concatenate([rng.normal(0, 0.3, 150), rng.normal(20, 0.3, 150)])
    c_lon = np.concatenate([rng.normal(0, 0.3, 150), rng.normal(30, 0.3, 150)])
    clu = normalize_per_continent([(GeoPoint(*p), "af") for p in zip(c_lat, c_lon)])
    u, c = diversity_report(uni[0]), diversity_report(clu[0])
    for m in ("occupancy", "entropy", "hull_area", "clark_evans"):
        assert getattr(u, m) > getattr(c, m), m


def test_mean_and_pooled():
    a, b = regular_grid(4), PointSet2D([(0.5, 0.5), (0.6, 0.6)])
    ra, rb = diversity_report(a), diversity_report(b)
    m = mean_report([ra, rb])
    assert m.n == 18 and m.occupancy == pytest.approx((ra.occupancy + rb.occupancy) / 2)
    p = pooled_report([a, b])
    assert p.n == 18
    with pytest.raises(ValueError):
        mean_report([])
    with pytest.raises(ValueError):
        PointSet2D([(1.5, 0)])
