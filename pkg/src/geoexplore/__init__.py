"""Geolocation-by-exploration toolkit.

Navigation graphs over street-level panoramas, a deterministic environment
that renders views and moves along graph edges, an agent loop that turns
model output into actions, and the scoring, diversity, trend and consensus
analyses that sit on top.
"""

from .geo import GeoPoint, PlaceLabels, aggregate_scores, geo_score, haversine_km, level_metrics
from .graph import NavGraph, graph_stats, load_dataset, load_graph, validate_depth

__all__ = [
    "GeoPoint",
    "PlaceLabels",
    "aggregate_scores",
    "geo_score",
    "haversine_km",
    "level_metrics",
    "NavGraph",
    "graph_stats",
    "load_dataset",
    "load_graph",
    "validate_depth",
]

__version__ = "0.1.0"
