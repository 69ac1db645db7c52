"""Geodesic helpers, the geo score and hierarchical label metrics."""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

EARTH_RADIUS_KM = 6371.0
SCORE_SCALE_KM = 18050.0 / 10.0

CONTINENTS = ("af", "as", "eu", "na", "oc", "sa")
LEVELS = ("street", "city", "country")

_WS = re.compile(r"\s+")


def canonical_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    out = math.fmod(lon + 180.0, 360.0)
    if out < 0:
        out += 360.0
    out -= 180.0
    # fmod can land exactly on 180 after float rounding
    return -180.0 if out >= 180.0 else out


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", canonical_lon(lon))

    def as_tuple(self) -> tuple[float, float]:
        return (self.lat, self.lon)


def normalize_label(text: Optional[str]) -> Optional[str]:
    """Lowercase, fold diacritics, trim and collapse whitespace.

    Returns None for missing or blank input.
    """
    if text is None:
        return None
    decomposed = unicodedata.normalize("NFKD", str(text))
    folded = "".join(c for c in decomposed if not unicodedata.combining(c))
    out = _WS.sub(" ", folded.casefold()).strip()
    return out or None


def normalize_continent(code: Optional[str]) -> Optional[str]:
    code = normalize_label(code)
    if code is None:
        return None
    if code not in CONTINENTS:
        raise ValueError(f"unknown continent code {code!r}; expected one of {CONTINENTS}")
    return code


@dataclass(frozen=True)
class PlaceLabels:
    """Hierarchical place labels.

    Ground-truth records carry a continent; model predictions usually don't,
    so ``continent`` may be None.
    """

    country: str
    city: Optional[str] = None
    street: Optional[str] = None
    continent: Optional[str] = None

    def __post_init__(self):
        country = normalize_label(self.country)
        if country is None:
            raise ValueError("country label must be non-empty")
        object.__setattr__(self, "country", country)
        object.__setattr__(self, "city", normalize_label(self.city))
        object.__setattr__(self, "street", normalize_label(self.street))
        object.__setattr__(self, "continent", normalize_continent(self.continent))

    def at(self, level: str) -> Optional[str]:
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}")
        return getattr(self, level)

    def to_dict(self) -> dict:
        return {
            "street": self.street,
            "city": self.city,
            "country": self.country,
            "continent": self.continent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlaceLabels":
        return cls(
            country=d.get("country"),
            city=d.get("city"),
            street=d.get("street"),
            continent=d.get("continent"),
        )


@dataclass(frozen=True)
class LevelMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def haversine_km(a: GeoPoint, b: GeoPoint, radius_km: float = EARTH_RADIUS_KM) -> float:
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    h = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    h = min(1.0, max(0.0, h))
    return 2.0 * radius_km * math.asin(math.sqrt(h))


def geo_score(distance_km: float) -> float:
    """100 * exp(-10 x / 18050) for a great-circle error x in kilometres."""
    if distance_km < 0 or math.isnan(distance_km):
        raise ValueError(f"distance must be non-negative, got {distance_km}")
    return 100.0 * math.exp(-distance_km / SCORE_SCALE_KM)


def aggregate_scores(distances_km: Sequence[float]) -> tuple[float, float]:
    """Return (mean distance, mean per-sample score).

    The score is averaged per sample, which is not the same as scoring the
    mean distance.
    """
    if len(distances_km) == 0:
        raise ValueError("cannot aggregate an empty list of distances")
    n = len(distances_km)
    mean_distance = math.fsum(distances_km) / n
    mean_score = math.fsum(geo_score(d) for d in distances_km) / n
    return mean_distance, mean_score


def level_metrics(
    pred: Sequence[Optional[PlaceLabels]],
    truth: Sequence[PlaceLabels],
    level: str,
) -> LevelMetrics:
    """Exact-match classification metrics at one level of the place hierarchy.

    Accuracy is micro (fraction of exact matches). Precision, recall and F1
    are macro averages over the distinct ground-truth classes at ``level``;
    F1 is the mean of per-class F1 values. A missing prediction (None, or no
    label at that level) always counts as a mismatch.
    """
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(truth)} truths")
    if not truth:
        raise ValueError("no samples")
    y_true = []
    for t in truth:
        label = t.at(level)
        if label is None:
            raise ValueError(f"ground truth is missing a {level} label")
        y_true.append(label)
    y_pred = [p.at(level) if p is not None else None for p in pred]

    hits = sum(1 for p, t in zip(y_pred, y_true) if p == t)
    accuracy = hits / len(y_true)

    precisions, recalls, f1s = [], [], []
    for cls in sorted(set(y_true)):
        tp = sum(1 for p, t in zip(y_pred, y_true) if t == cls and p == cls)
        n_true = sum(1 for t in y_true if t == cls)
        n_pred = sum(1 for p in y_pred if p == cls)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    k = len(recalls)
    return LevelMetrics(
        accuracy=accuracy,
        precision=math.fsum(precisions) / k,
        recall=math.fsum(recalls) / k,
        f1=math.fsum(f1s) / k,
    )


def minmax_normalize(values: Iterable[float]) -> list[float]:
    """Map values affinely onto [0, 1]; a constant list maps to zeros."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot normalize an empty list")
    lo, hi = min(vals), max(vals)
    span = hi - lo
    if span == 0:
        return [0.0] * len(vals)
    return [(v - lo) / span for v in vals]
