"""Graph builders shared by the tests."""

import math
import random

from geoexplore.geo import GeoPoint
from geoexplore.graph import graph_from_dict

R_M = 6371000.0


def offset(lat, lon, east_m, north_m):
    return (
        lat + math.degrees(north_m / R_M),
        lon + math.degrees(east_m / (R_M * math.cos(math.radians(lat)))),
    )


def node_doc(nid, lat, lon, street="Main St", city="Springfield", country="Freedonia", heading_ref=0.0):
    return {
        "id": nid,
        "lat": lat,
        "lon": lon,
        "heading_ref": heading_ref,
        "labels": {"street": street, "city": city, "country": country},
    }


def path_doc(n, start=None, graph_id="path", origin=(10.0, 20.0), step_m=20.0):
    """Straight east-west street of n nodes."""
    nodes = []
    for i in range(n):
        lat, lon = offset(*origin, i * step_m, 0.0)
        nodes.append(node_doc(f"p{i:02d}", lat, lon))
    edges = [{"from": f"p{i:02d}", "to": f"p{i + 1:02d}"} for i in range(n - 1)]
    return {
        "graph_id": graph_id,
        "continent": "af",
        "difficulty": "easy",
        "start_node": f"p{(n // 2 if start is None else start):02d}",
        "nodes": nodes,
        "edges": edges,
    }


def path_graph(n, start=None, **kw):
    return graph_from_dict(path_doc(n, start, **kw))


def random_connected_doc(rng: random.Random, n: int, extra: int, graph_id="rand"):
    """Random spanning tree plus ``extra`` random chords, nodes scattered in a 300 m box."""
    origin = (rng.uniform(-60, 60), rng.uniform(-170, 170))
    nodes = []
    for i in range(n):
        lat, lon = offset(*origin, rng.uniform(0, 300), rng.uniform(0, 300))
        nodes.append(node_doc(f"r{i:02d}", lat, lon, heading_ref=rng.uniform(0, 360)))
    pairs = set()
    for i in range(1, n):
        j = rng.randrange(i)
        pairs.add((j, i))
    for _ in range(extra):
        a, b = rng.sample(range(n), 2) if n > 1 else (0, 0)
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    edges = [{"from": f"r{a:02d}", "to": f"r{b:02d}"} for a, b in sorted(pairs)]
    return {"graph_id": graph_id, "continent": "eu", "start_node": "r00", "nodes": nodes, "edges": edges}


PARIS = GeoPoint(48.8566, 2.3522)
LONDON = GeoPoint(51.5074, -0.1278)
