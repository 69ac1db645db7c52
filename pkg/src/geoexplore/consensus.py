"""Average ("consensus") navigation-graph structure across many locations.

Each graph is projected to a local plane, translated so its central node
sits at the origin, scaled by its median edge length and rotated onto its
principal axis. Node positions are then binned on a polar grid and node and
edge counts are summed across graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geo import EARTH_RADIUS_KM, haversine_km
from .graph import NavGraph

MAX_EXTENT_KM = 100.0
_EIG_RTOL = 1e-9
_MOMENT_RTOL = 1e-9
BIN_SNAP = 1e-7


class ConsensusError(ValueError):
    pass


def project_local(g: NavGraph, center: Optional[str] = None) -> dict[str, tuple[float, float]]:
    """Equirectangular projection about ``center`` (default: start node), metres."""
    center = g.start_node if center is None else center
    c = g.node(center).location
    pts = [n.location for n in g.nodes.values()]
    extent = max((haversine_km(a, b) for i, a in enumerate(pts) for b in pts[i + 1 :]), default=0.0)
    if extent >= MAX_EXTENT_KM:
        raise ConsensusError(f"graph {g.graph_id!r} spans {extent:.1f} km; local projection needs < {MAX_EXTENT_KM} km")
    r_m = EARTH_RADIUS_KM * 1000.0
    cos0 = math.cos(math.radians(c.lat))
    out = {}
    for nid, n in g.nodes.items():
        dlon = n.location.lon - c.lon
        dlon = (dlon + 180.0) % 360.0 - 180.0
        out[nid] = (
            r_m * math.radians(dlon) * cos0,
            r_m * math.radians(n.location.lat - c.lat),
        )
    return out


def medoid_node(g: NavGraph) -> str:
    """Node with the smallest total hop distance to all others (ties by id)."""
    return min(g.nodes, key=lambda nid: (sum(g.hop_distances(nid).values()), nid))


@dataclass(frozen=True)
class NormalizedGraph:
    positions: np.ndarray
    edges: tuple[tuple[int, int], ...]
    scale_used: float
    rotation_used: float
    flip_x: bool = False
    flip_y: bool = False


def normalize_graph(positions, edges: Sequence[tuple[int, int]], center: int = 0) -> NormalizedGraph:
    """Translate ``center`` to the origin, divide by the median edge length,
    rotate the first principal axis onto +x.

    Each axis is then flipped if needed so the third central moment along
    it is non-negative (or, for a symmetric axis, the mean offset from the
    centre); this makes mirror-image graphs land on the same picture.
    Near-equal principal variances leave the orientation unchanged.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 2:
        raise ConsensusError("need at least two 2-D positions")
    edges = tuple((int(a), int(b)) for a, b in edges)
    if not edges:
        raise ConsensusError("need at least one edge")
    p = p - p[center]
    lengths = np.array([np.hypot(*(p[a] - p[b])) for a, b in edges])
    scale = float(np.median(lengths))
    if scale <= 0:
        raise ConsensusError("median edge length is zero")
    p = p / scale

    cov = np.cov(p.T, bias=True)
    evals, evecs = np.linalg.eigh(cov)
    lo, hi = evals
    angle = 0.0
    flip_x = flip_y = False
    if hi - lo > _EIG_RTOL * max(abs(hi), 1e-300):
        v = evecs[:, 1]
        angle = math.atan2(v[1], v[0])
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, s], [-s, c]])
        p = p @ rot.T
        flip_x, flip_y = _axis_signs(p)
        if flip_x:
            p[:, 0] = -p[:, 0]
        if flip_y:
            p[:, 1] = -p[:, 1]
    p[center] = 0.0
    return NormalizedGraph(p, edges, scale, angle, flip_x, flip_y)


def _axis_signs(p: np.ndarray) -> tuple[bool, bool]:
    """Per axis: flip when the third central moment is negative. A symmetric
    axis falls back to the mean offset from the centre node (the origin)."""
    mean = p.mean(axis=0)
    dev = p - mean
    sd = np.sqrt(np.maximum((dev**2).mean(axis=0), 1e-300))
    m3 = (dev**3).mean(axis=0)
    flips = []
    for k in range(2):
        if abs(m3[k]) > _MOMENT_RTOL * sd[k] ** 3:
            flips.append(bool(m3[k] < 0))
        else:
            flips.append(bool(mean[k] < -_MOMENT_RTOL * sd[k]))
    return flips[0], flips[1]


def normalize_nav_graph(g: NavGraph, center: str = "start") -> NormalizedGraph:
    if center not in ("start", "medoid"):
        raise ValueError("center must be 'start' or 'medoid'")
    cid = g.start_node if center == "start" else medoid_node(g)
    proj = project_local(g, cid)
    ids = list(g.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    pos = np.array([proj[nid] for nid in ids])
    edges = [(index[e.u], index[e.v]) for e in g.edges]
    return normalize_graph(pos, edges, center=index[cid])


@dataclass
class PolarHistogram:
    radial_bins: int
    angular_bins: int
    node_counts: np.ndarray
    edge_counts: np.ndarray
    r_max: float

    @property
    def n_bins(self) -> int:
        return self.radial_bins * self.angular_bins

    def __add__(self, other: "PolarHistogram") -> "PolarHistogram":
        if (self.radial_bins, self.angular_bins) != (other.radial_bins, other.angular_bins):
            raise ValueError("bin layouts differ")
        return PolarHistogram(
            self.radial_bins,
            self.angular_bins,
            self.node_counts + other.node_counts,
            self.edge_counts + other.edge_counts,
            max(self.r_max, other.r_max),
        )

    def nodes_csv(self) -> str:
        head = "radial_bin," + ",".join(f"a{j}" for j in range(self.angular_bins))
        rows = [head] + [
            f"{i}," + ",".join(str(int(v)) for v in self.node_counts[i]) for i in range(self.radial_bins)
        ]
        return "\n".join(rows) + "\n"

    def edges_csv(self) -> str:
        rows = ["bin_a,bin_b,count"]
        n = self.n_bins
        for a in range(n):
            for b in range(a, n):
                c = int(self.edge_counts[a, b])
                if c:
                    rows.append(f"{a},{b},{c}")
        return "\n".join(rows) + "\n"

    def bin_center(self, b: int, radius: float) -> tuple[float, float]:
        r, a = divmod(b, self.angular_bins)
        rr = (r + 0.5) / self.radial_bins * radius
        th = (a + 0.5) / self.angular_bins * 2 * math.pi
        return rr * math.cos(th), rr * math.sin(th)

    def to_svg(self, size: int = 400) -> str:
        """Circle area-free encoding: radius grows with node count, stroke
        width with edge count. One circle per occupied bin."""
        half = size / 2.0
        outer = half * 0.9
        max_node = max(int(self.node_counts.max()), 1)
        max_edge = max(int(np.triu(self.edge_counts, 1).max()) if self.n_bins > 1 else 0, 1)
        node_r_max = outer / self.radial_bins / 2.0
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
            f'<rect width="{size}" height="{size}" fill="white"/>',
        ]
        n = self.n_bins
        for a in range(n):
            for b in range(a + 1, n):
                c = int(self.edge_counts[a, b])
                if not c:
                    continue
                x1, y1 = self.bin_center(a, outer)
                x2, y2 = self.bin_center(b, outer)
                w = 0.5 + 5.5 * c / max_edge
                out.append(
                    f'<line x1="{half + x1:.3f}" y1="{half - y1:.3f}" x2="{half + x2:.3f}" y2="{half - y2:.3f}" '
                    f'stroke="#4a6fa5" stroke-opacity="0.6" stroke-width="{w:.3f}"/>'
                )
        for b in range(n):
            r, a = divmod(b, self.angular_bins)
            c = int(self.node_counts[r, a])
            if not c:
                continue
            x, y = self.bin_center(b, outer)
            rad = 1.0 + (node_r_max - 1.0) * c / max_node
            out.append(f'<circle cx="{half + x:.3f}" cy="{half - y:.3f}" r="{rad:.3f}" fill="#d1495b"><title>{c}</title></circle>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _snap_floor(t: np.ndarray) -> np.ndarray:
    """floor(), treating values within BIN_SNAP of an integer as that integer."""
    r = np.round(t)
    t = np.where(np.abs(t - r) < BIN_SNAP, r, t)
    return np.floor(t).astype(np.int64)


def _radii(ng: NormalizedGraph) -> np.ndarray:
    return np.hypot(ng.positions[:, 0], ng.positions[:, 1])


def polar_bin(
    ng: NormalizedGraph,
    radial_bins: int = 6,
    angular_bins: int = 8,
    percentile: float = 0.99,
    r_max: Optional[float] = None,
) -> PolarHistogram:
    """Bin node positions on a polar grid; edges count (bin(u), bin(v)) pairs.

    ``r_max`` defaults to the given percentile of node radii; nodes beyond
    it fall in the outermost ring. The origin has angle 0.
    """
    R, A = radial_bins, angular_bins
    radii = _radii(ng)
    if r_max is None:
        r_max = float(np.percentile(radii, percentile * 100.0))
    theta = np.mod(np.arctan2(ng.positions[:, 1], ng.positions[:, 0]), 2 * np.pi)
    theta[radii == 0] = 0.0
    if r_max > 0:
        rb = np.minimum(_snap_floor(R * radii / r_max), R - 1)
    else:
        rb = np.zeros(len(radii), dtype=np.int64)
    # nodes on a sector edge (a straight street through the centre) go to the upper sector
    ab = np.mod(_snap_floor(A * theta / (2 * np.pi)), A)
    flat = rb * A + ab

    nodes = np.zeros((R, A), dtype=np.int64)
    np.add.at(nodes, (rb, ab), 1)
    edges = np.zeros((R * A, R * A), dtype=np.int64)
    for u, v in ng.edges:
        bu, bv = flat[u], flat[v]
        edges[bu, bv] += 1
        if bu != bv:
            edges[bv, bu] += 1
    return PolarHistogram(R, A, nodes, edges, float(r_max))


def aggregate_consensus(
    graphs: Sequence[NavGraph],
    radial_bins: int = 6,
    angular_bins: int = 8,
    percentile: float = 0.99,
    center: str = "start",
) -> PolarHistogram:
    """Sum per-graph histograms using one r_max: the percentile of all radii pooled."""
    if not graphs:
        raise ValueError("need at least one graph")
    normalized = [normalize_nav_graph(g, center) for g in graphs]
    return aggregate_normalized(normalized, radial_bins, angular_bins, percentile)


def aggregate_normalized(
    normalized: Sequence[NormalizedGraph],
    radial_bins: int = 6,
    angular_bins: int = 8,
    percentile: float = 0.99,
) -> PolarHistogram:
    pooled = np.concatenate([_radii(ng) for ng in normalized])
    r_max = float(np.percentile(pooled, percentile * 100.0))
    total = None
    for ng in normalized:
        h = polar_bin(ng, radial_bins, angular_bins, percentile, r_max=r_max)
        total = h if total is None else total + h
    return total
