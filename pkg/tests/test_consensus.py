import math
import random
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoexplore.consensus import (
    ConsensusError,
    aggregate_consensus,
    aggregate_normalized,
    medoid_node,
    normalize_graph,
    normalize_nav_graph,
    polar_bin,
    project_local,
)
from geoexplore.geo import haversine_km
from geoexplore.graph import graph_from_dict

from helpers import path_graph, random_connected_doc


def fixture_plane(g):
    proj = project_local(g)
    ids = list(g.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    pos = np.array([proj[n] for n in ids])
    edges = [(index[e.u], index[e.v]) for e in g.edges]
    return pos, edges, index[g.start_node]


def similarity(pos, angle, scale, shift, mirror=False):
    c, s = math.cos(angle), math.sin(angle)
    out = pos @ np.array([[c, -s], [s, c]]).T * scale + np.asarray(shift)
    if mirror:
        out[:, 1] = -out[:, 1]
    return out


def test_projection_is_locally_metric(fixture_graphs):
    for g in fixture_graphs:
        proj = project_local(g)
        for e in g.edges:
            (x1, y1), (x2, y2) = proj[e.u], proj[e.v]
            km = haversine_km(g.node(e.u).location, g.node(e.v).location)
            assert math.hypot(x2 - x1, y2 - y1) / 1000 == pytest.approx(km, rel=1e-3)


def check_invariance(g, mirror, rng):
    pos, edges, c = fixture_plane(g)
    base = normalize_graph(pos, edges, center=c)
    h0 = polar_bin(base)
    for _ in range(10):
        moved = similarity(pos, rng.uniform(0, 2 * np.pi), rng.uniform(0.01, 100), rng.uniform(-1e4, 1e4, 2), mirror)
        ng = normalize_graph(moved, edges, center=c)
        h = polar_bin(ng)
        assert np.array_equal(h.node_counts, h0.node_counts)
        assert np.array_equal(h.edge_counts, h0.edge_counts)
        assert h.r_max == pytest.approx(h0.r_max, abs=1e-9)


def test_similarity_invariance_fixtures(fixture_graphs):
    rng = np.random.default_rng(11)
    for g in fixture_graphs:
        check_invariance(g, False, rng)


def test_mirror_invariance_of_chiral_free_graphs(fixture_graphs):
    # fx-plus is a four-fold pinwheel: no moment can tell it from its mirror image
    rng = np.random.default_rng(12)
    for g in fixture_graphs[1:]:
        check_invariance(g, True, rng)
    for seed in range(20):
        g = graph_from_dict(random_connected_doc(random.Random(seed), 15, 5))
        check_invariance(g, True, rng)


def test_positions_invariant_for_asymmetric_graphs():
    rng = np.random.default_rng(13)
    for seed in range(20):
        g = graph_from_dict(random_connected_doc(random.Random(seed), 15, 5))
        pos, edges, c = fixture_plane(g)
        base = normalize_graph(pos, edges, center=c)
        for _ in range(10):
            moved = similarity(pos, rng.uniform(0, 2 * np.pi), rng.uniform(0.01, 100), rng.uniform(-1e4, 1e4, 2), True)
            ng = normalize_graph(moved, edges, center=c)
            assert np.allclose(ng.positions, base.positions, atol=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_normalization_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 30))
    pos = rng.normal(size=(n, 2)) * rng.uniform(0.5, 3, 2)
    edges = [(i, i + 1) for i in range(n - 1)]
    ng = normalize_graph(pos, edges, center=0)
    assert np.all(ng.positions[0] == 0)
    lengths = [np.hypot(*(ng.positions[a] - ng.positions[b])) for a, b in edges]
    assert np.median(lengths) == pytest.approx(1.0)
    cov = np.cov(ng.positions.T, bias=True)
    assert abs(cov[0, 1]) < 1e-9 * max(1.0, cov[0, 0])
    assert cov[0, 0] >= cov[1, 1] - 1e-9


def test_normalization_errors():
    with pytest.raises(ConsensusError):
        normalize_graph([[0, 0]], [(0, 0)])
    with pytest.raises(ConsensusError):
        normalize_graph([[0, 0], [1, 1]], [])
    with pytest.raises(ConsensusError):
        normalize_graph([[0, 0], [0, 0]], [(0, 1)])
    with pytest.raises(ValueError):
        normalize_nav_graph(path_graph(21, 10), center="middle")


def test_far_flung_graph_rejected():
    from helpers import path_doc

    doc = path_doc(3, start=1)
    doc["nodes"][2]["lat"] = doc["nodes"][0]["lat"] + 2.0
    with pytest.raises(ConsensusError):
        project_local(graph_from_dict(doc))


def test_medoid_of_path_is_middle():
    g = path_graph(21, 3)
    assert medoid_node(g) == "p10"
    ng = normalize_nav_graph(g, center="medoid")
    assert np.all(ng.positions[10] == 0)


def test_polar_bin_counts_and_edges():
    pos = np.array([[0.0, 0.0], [1.0, 0.1], [0.0, 2.0], [-3.0, -0.1]])
    from geoexplore.consensus import NormalizedGraph

    ng = NormalizedGraph(pos, ((0, 1), (0, 2), (0, 3)), 1.0, 0.0)
    h = polar_bin(ng, radial_bins=3, angular_bins=4, r_max=3.0)
    assert h.node_counts.sum() == 4
    # origin in ring 0 sector 0; (1, .1) ring 1 sector 0; (0, 2) ring 2 sector 1; r=3 clamps to ring 2
    assert h.node_counts[0, 0] == 1 and h.node_counts[1, 0] == 1
    assert h.node_counts[2, 1] == 1 and h.node_counts[2, 2] == 1
    assert np.array_equal(h.edge_counts, h.edge_counts.T)
    assert np.triu(h.edge_counts).sum() == 3


def test_self_aggregation_doubles(fixture_graphs):
    for g in fixture_graphs:
        single = aggregate_consensus([g])
        double = aggregate_consensus([g, g])
        assert np.array_equal(double.node_counts, 2 * single.node_counts)
        assert np.array_equal(double.edge_counts, 2 * single.edge_counts)
        assert double.r_max == pytest.approx(single.r_max, rel=1e-9)


def test_single_graph_aggregate_equals_polar_bin(fixture_graphs):
    for g in fixture_graphs:
        ng = normalize_nav_graph(g)
        a, b = aggregate_normalized([ng]), polar_bin(ng)
        assert np.array_equal(a.node_counts, b.node_counts)
        assert np.array_equal(a.edge_counts, b.edge_counts)


def test_aggregate_conserves_totals(fixture_graphs):
    h = aggregate_consensus(fixture_graphs)
    assert h.node_counts.sum() == sum(len(g.nodes) for g in fixture_graphs)
    assert np.triu(h.edge_counts).sum() == sum(len(g.edges) for g in fixture_graphs)
    with pytest.raises(ValueError):
        aggregate_consensus([])


def test_svg_and_csv_stable(fixture_graphs):
    a = aggregate_consensus(fixture_graphs)
    b = aggregate_consensus(list(fixture_graphs))
    svg = a.to_svg()
    assert svg == b.to_svg()
    assert svg.encode() == aggregate_consensus(fixture_graphs).to_svg().encode()
    assert len(re.findall(r"<circle ", svg)) == int((a.node_counts > 0).sum())
    assert a.nodes_csv() == b.nodes_csv() and a.edges_csv() == b.edges_csv()
    rows = a.nodes_csv().splitlines()
    assert rows[0] == "radial_bin,a0,a1,a2,a3,a4,a5,a6,a7" and len(rows) == 7
    total = sum(int(r.split(",")[2]) for r in a.edges_csv().splitlines()[1:])
    assert total == sum(len(g.edges) for g in fixture_graphs)
