"""Navigation graphs: panoramas as nodes, undirected street links as edges.

Graph files are UTF-8 JSON documents (see docs/graph_schema.md). A dataset
is a directory holding such files plus a ``manifest.json``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .geo import GeoPoint, PlaceLabels, haversine_km, normalize_continent

log = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")
DEFAULT_MIN_DEPTH = 10


class GraphError(ValueError):
    """Base class for graph-file and graph-structure errors."""


class MalformedDocument(GraphError):
    pass


class DuplicateNodeId(GraphError):
    pass


class DanglingEndpoint(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class MissingStartNode(GraphError):
    pass


class DisconnectedGraph(GraphError):
    pass


class UnknownNode(GraphError, KeyError):
    pass


class Unreachable(GraphError):
    pass


class ManifestMissing(GraphError):
    pass


@dataclass(frozen=True)
class PanoNode:
    id: str
    location: GeoPoint
    labels: PlaceLabels
    heading_ref: float = 0.0
    image_ref: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "heading_ref", float(self.heading_ref) % 360.0)


@dataclass(frozen=True)
class NavEdge:
    """Undirected edge; endpoints are stored in sorted order."""

    u: str
    v: str
    length_m: float

    def __post_init__(self):
        if self.u == self.v:
            raise SelfLoop(f"self-loop on node {self.u!r}")
        if self.u > self.v:
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)
        if not (self.length_m > 0 and math.isfinite(self.length_m)):
            raise GraphError(f"edge ({self.u}, {self.v}) has non-positive length {self.length_m}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.u, self.v)


@dataclass(frozen=True)
class DepthCheck:
    passed: bool
    min_depth: int
    distance: Optional[int] = None
    witness: Optional[str] = None


class NavGraph:
    """Immutable, connected, undirected navigation graph."""

    def __init__(
        self,
        graph_id: str,
        nodes: Iterable[PanoNode],
        edges: Iterable[NavEdge],
        start_node: str,
        difficulty: str = "medium",
        continent: Optional[str] = None,
    ):
        self.graph_id = str(graph_id)
        node_map: dict[str, PanoNode] = {}
        for n in nodes:
            if n.id in node_map:
                raise DuplicateNodeId(f"duplicate node id {n.id!r} in graph {graph_id!r}")
            node_map[n.id] = n
        edge_map: dict[tuple[str, str], NavEdge] = {}
        for e in edges:
            for end in (e.u, e.v):
                if end not in node_map:
                    raise DanglingEndpoint(
                        f"edge ({e.u}, {e.v}) references absent node {end!r}"
                    )
            # keep the first occurrence of a duplicated undirected edge
            edge_map.setdefault(e.key, e)
        if start_node not in node_map:
            raise MissingStartNode(f"start node {start_node!r} not in graph {graph_id!r}")
        difficulty = str(difficulty).strip().lower()
        if difficulty not in DIFFICULTIES:
            raise GraphError(f"difficulty {difficulty!r} not in {DIFFICULTIES}")

        self.nodes: dict[str, PanoNode] = dict(sorted(node_map.items()))
        self.edges: tuple[NavEdge, ...] = tuple(edge_map[k] for k in sorted(edge_map))
        self.start_node = start_node
        self.difficulty = difficulty
        self.continent = normalize_continent(continent) if continent else self.nodes[start_node].labels.continent

        adj: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for e in self.edges:
            adj[e.u].append(e.v)
            adj[e.v].append(e.u)
        self._adj = {k: tuple(sorted(v)) for k, v in adj.items()}
        self._lengths = {e.key: e.length_m for e in self.edges}

        reached = self.hop_distances(start_node)
        if len(reached) != len(self.nodes):
            missing = sorted(set(self.nodes) - set(reached))
            raise DisconnectedGraph(
                f"graph {graph_id!r} is disconnected; unreachable from start: {missing[:5]}"
            )

    def __repr__(self):
        return f"NavGraph({self.graph_id!r}, nodes={len(self.nodes)}, edges={len(self.edges)})"

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> PanoNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node {node_id!r} in graph {self.graph_id!r}") from None

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._adj[node_id]

    def degree(self, node_id: str) -> int:
        return len(self.neighbors(node_id))

    def edge_length(self, u: str, v: str) -> float:
        return self._lengths[(u, v) if u < v else (v, u)]

    def has_edge(self, u: str, v: str) -> bool:
        return ((u, v) if u < v else (v, u)) in self._lengths

    def hop_distances(self, source: str) -> dict[str, int]:
        """Breadth-first hop counts from ``source`` to every reachable node."""
        self.node(source)
        dist = {source: 0}
        queue = deque([source])
        while queue:
            cur = queue.popleft()
            for nxt in self._adj[cur]:
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        return dist

    @property
    def start(self) -> PanoNode:
        return self.nodes[self.start_node]


def shortest_path_hops(g: NavGraph, u: str, v: str) -> int:
    g.node(v)
    dist = g.hop_distances(u)
    if v not in dist:
        raise Unreachable(f"{v!r} unreachable from {u!r} in graph {g.graph_id!r}")
    return dist[v]


def boundary_nodes(g: NavGraph) -> set[str]:
    """Degree-1 nodes."""
    return {nid for nid in g.nodes if g.degree(nid) == 1}


def validate_depth(g: NavGraph, min_depth: int = DEFAULT_MIN_DEPTH) -> DepthCheck:
    """Check that every boundary node is at least ``min_depth`` hops from the start node.

    The constraint is measured from the designated start node: taken over
    all nodes it would be vacuous, since a boundary node is zero hops from
    itself. Passes trivially when there are no boundary nodes.
    """
    boundary = boundary_nodes(g)
    if not boundary:
        return DepthCheck(passed=True, min_depth=min_depth)
    dist = g.hop_distances(g.start_node)
    witness = min(boundary, key=lambda b: (dist[b], b))
    d = dist[witness]
    return DepthCheck(passed=d >= min_depth, min_depth=min_depth, distance=d, witness=witness)


@dataclass(frozen=True)
class GraphStats:
    """Dataset-level means. ``avg_degree`` is 2E/V on the mean counts."""

    n_nodes: float
    n_edges: float
    boundary_count: float
    n_graphs: int = 1

    @property
    def avg_degree(self) -> float:
        return 2.0 * self.n_edges / self.n_nodes

    @property
    def edge_node_ratio(self) -> float:
        return self.n_edges / self.n_nodes

    def to_dict(self) -> dict:
        return {
            "n_graphs": self.n_graphs,
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
            "n_directed_links": 2.0 * self.n_edges,
            "avg_degree": self.avg_degree,
            "edge_node_ratio": self.edge_node_ratio,
            "boundary_count": self.boundary_count,
        }


def graph_stats(graphs: Sequence[NavGraph]) -> GraphStats:
    if not graphs:
        raise ValueError("graph_stats needs at least one graph")
    n = len(graphs)
    return GraphStats(
        n_nodes=math.fsum(len(g.nodes) for g in graphs) / n,
        n_edges=math.fsum(len(g.edges) for g in graphs) / n,
        boundary_count=math.fsum(len(boundary_nodes(g)) for g in graphs) / n,
        n_graphs=n,
    )


# --- file format -------------------------------------------------------------

_TOP_KEYS = {"graph_id", "continent", "difficulty", "start_node", "nodes", "edges"}
_NODE_KEYS = {"id", "lat", "lon", "heading_ref", "image", "labels"}
_EDGE_KEYS = {"from", "to", "length_m"}


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedDocument(f"{where}: missing required field {key!r}")
    return obj[key]


def _warn_unknown(obj: dict, known: set, where: str):
    extra = sorted(set(obj) - known)
    if extra:
        log.warning("%s: ignoring unknown fields %s", where, extra)


def graph_from_dict(doc: dict) -> NavGraph:
    if not isinstance(doc, dict):
        raise MalformedDocument("graph document must be a JSON object")
    _warn_unknown(doc, _TOP_KEYS, "graph")
    graph_id = _require(doc, "graph_id", "graph")
    where = f"graph {graph_id!r}"
    raw_nodes = _require(doc, "nodes", where)
    raw_edges = doc.get("edges", [])
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise MalformedDocument(f"{where}: nodes and edges must be arrays")
    if "start_node" not in doc:
        raise MissingStartNode(f"{where}: no start_node given")

    nodes = []
    for i, rn in enumerate(raw_nodes):
        nw = f"{where} node[{i}]"
        if not isinstance(rn, dict):
            raise MalformedDocument(f"{nw}: expected an object")
        _warn_unknown(rn, _NODE_KEYS, nw)
        try:
            labels = PlaceLabels.from_dict(_require(rn, "labels", nw))
            loc = GeoPoint(float(_require(rn, "lat", nw)), float(_require(rn, "lon", nw)))
            heading = float(rn.get("heading_ref", 0.0))
        except MalformedDocument:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise MalformedDocument(f"{nw}: {exc}") from exc
        nodes.append(
            PanoNode(
                id=str(_require(rn, "id", nw)),
                location=loc,
                labels=labels,
                heading_ref=heading,
                image_ref=rn.get("image"),
            )
        )

    by_id = {}
    for n in nodes:
        if n.id in by_id:
            raise DuplicateNodeId(f"{where}: duplicate node id {n.id!r}")
        by_id[n.id] = n

    edges = []
    for i, re_ in enumerate(raw_edges):
        ew = f"{where} edge[{i}]"
        if not isinstance(re_, dict):
            raise MalformedDocument(f"{ew}: expected an object")
        _warn_unknown(re_, _EDGE_KEYS, ew)
        u, v = str(_require(re_, "from", ew)), str(_require(re_, "to", ew))
        if u == v:
            raise SelfLoop(f"{ew}: self-loop on {u!r}")
        for end in (u, v):
            if end not in by_id:
                raise DanglingEndpoint(f"{ew}: endpoint {end!r} is not a node")
        length = re_.get("length_m")
        if length is None:
            length = haversine_km(by_id[u].location, by_id[v].location) * 1000.0
        try:
            edges.append(NavEdge(u, v, float(length)))
        except GraphError as exc:
            raise MalformedDocument(f"{ew}: {exc}") from exc

    try:
        return NavGraph(
            graph_id=graph_id,
            nodes=nodes,
            edges=edges,
            start_node=str(doc["start_node"]),
            difficulty=doc.get("difficulty", "medium"),
            continent=doc.get("continent"),
        )
    except GraphError:
        raise
    except ValueError as exc:
        raise MalformedDocument(f"{where}: {exc}") from exc


def parse_graph_file(data: bytes | str) -> NavGraph:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    return graph_from_dict(doc)


def graph_to_dict(g: NavGraph) -> dict:
    """Canonical document form: nodes sorted by id, edges sorted, lengths explicit."""
    return {
        "graph_id": g.graph_id,
        "continent": g.continent,
        "difficulty": g.difficulty,
        "start_node": g.start_node,
        "nodes": [
            {
                "id": n.id,
                "lat": n.location.lat,
                "lon": n.location.lon,
                "heading_ref": n.heading_ref,
                "image": n.image_ref,
                "labels": n.labels.to_dict(),
            }
            for n in g.nodes.values()
        ],
        "edges": [{"from": e.u, "to": e.v, "length_m": e.length_m} for e in g.edges],
    }


def serialize_graph(g: NavGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# --- datasets ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    file: str
    proposed_by: Optional[str] = None


@dataclass
class Dataset:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def load(self) -> list[NavGraph]:
        return [load_graph(self.root / e.file) for e in self.entries]


def load_graph(path: str | Path) -> NavGraph:
    return parse_graph_file(Path(path).read_bytes())


def read_manifest(dataset_dir: str | Path) -> Dataset:
    root = Path(dataset_dir)
    path = root / "manifest.json"
    if not path.is_file():
        raise ManifestMissing(f"no manifest.json in {root}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: invalid JSON: {exc}") from exc
    raw = doc.get("graphs") if isinstance(doc, dict) else None
    if not isinstance(raw, list):
        raise MalformedDocument(f"{path}: expected a 'graphs' array")
    entries = []
    for i, item in enumerate(raw):
        if isinstance(item, str):
            entries.append(ManifestEntry(item))
        elif isinstance(item, dict) and "file" in item:
            entries.append(ManifestEntry(str(item["file"]), item.get("proposed_by")))
        else:
            raise MalformedDocument(f"{path}: graphs[{i}] must be a filename or an object with 'file'")
    return Dataset(root=root, entries=entries)


def load_dataset(dataset_dir: str | Path) -> list[NavGraph]:
    return read_manifest(dataset_dir).load()


def fixture_dataset_dir() -> Path:
    """The small bundled dataset used by tests and demos."""
    return Path(__file__).parent / "data" / "fixtures"
