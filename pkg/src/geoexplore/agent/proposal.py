"""Two-stage location proposal.

Stage 1 asks the model for a place (free-text description or coordinates)
in a given continent at a given difficulty. Stage 2 shows it a zoom-16 map
tile around that place with numbered, coloured candidate panorama markers;
the model either selects markers or rejects the view, in which case stage 1
runs again. Every message in both directions is kept in the transcript.

Stage 1 replies::

    LOCATION <lat>, <lon>        or        DESCRIBE <free text>

Stage 2 replies::

    SELECT <k> [<k2> ...]        or        REJECT [reason]
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from ..geo import GeoPoint, haversine_km
from .backends import ModelBackend

ZOOM = 16
MARKER_COLORS = ("red", "blue", "green", "orange", "purple", "cyan", "magenta", "yellow")

# rough bounding boxes (lat_min, lat_max, lon_min, lon_max) used by the stub geocoder
CONTINENT_BOXES = {
    "af": (-34.0, 35.0, -17.0, 50.0),
    "as": (5.0, 55.0, 60.0, 140.0),
    "eu": (36.0, 60.0, -9.0, 30.0),
    "na": (15.0, 55.0, -125.0, -70.0),
    "oc": (-40.0, -12.0, 115.0, 175.0),
    "sa": (-45.0, 10.0, -75.0, -40.0),
}

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)"
_LOCATION = re.compile(rf"\blocation\s*:?\s*({_NUM})\s*,\s*({_NUM})", re.I)
_DESCRIBE = re.compile(r"\bdescribe\s*:?\s*(.+)", re.I | re.S)
_SELECT = re.compile(r"\bselect\s*:?\s*((?:\d+[\s,]*)+)", re.I)
_REJECT = re.compile(r"\breject\b", re.I)


class ProviderError(RuntimeError):
    pass


class ProposalFailed(RuntimeError):
    def __init__(self, message: str, transcript: list[dict]):
        super().__init__(message)
        self.transcript = transcript


@dataclass(frozen=True)
class Marker:
    index: int
    color: str
    point: GeoPoint


@dataclass(frozen=True)
class MapTile:
    """Descriptor for a satellite tile; a real provider would also carry pixels."""

    center: GeoPoint
    zoom: int
    markers: tuple[Marker, ...]

    def describe(self) -> str:
        lines = [f"Satellite view centred at ({self.center.lat:.5f}, {self.center.lon:.5f}), zoom {self.zoom}."]
        lines += [
            f"  marker {m.index} ({m.color}): panorama at ({m.point.lat:.5f}, {m.point.lon:.5f})"
            for m in self.markers
        ]
        return "\n".join(lines)


class MapProvider(Protocol):
    def geocode(self, description: str, continent: str) -> GeoPoint: ...

    def tile(self, center: GeoPoint, zoom: int = ZOOM) -> MapTile: ...


class StubMapProvider:
    """Deterministic offline provider.

    Geocoding hashes the description into the continent's bounding box.
    Markers are the ``k`` known panorama sites nearest the tile centre
    (ties by input order); with no known sites, ``k`` points are laid out on a
    small ring around the centre.
    """

    def __init__(self, panoramas: Sequence[GeoPoint] = (), k: int = 4, ring_m: float = 150.0):
        self.panoramas = list(panoramas)
        self.k = k
        self.ring_m = ring_m

    def geocode(self, description: str, continent: str) -> GeoPoint:
        box = CONTINENT_BOXES.get(continent)
        if box is None:
            raise ProviderError(f"unknown continent {continent!r}")
        digest = hashlib.sha256(description.strip().lower().encode()).digest()
        fa = int.from_bytes(digest[:8], "big") / 2**64
        fb = int.from_bytes(digest[8:16], "big") / 2**64
        return GeoPoint(box[0] + fa * (box[1] - box[0]), box[2] + fb * (box[3] - box[2]))

    def tile(self, center: GeoPoint, zoom: int = ZOOM) -> MapTile:
        if self.panoramas:
            ranked = sorted(
                range(len(self.panoramas)),
                key=lambda i: (haversine_km(center, self.panoramas[i]), i),
            )[: self.k]
            points = [self.panoramas[i] for i in ranked]
        else:
            dlat = self.ring_m / 111_195.0
            dlon = dlat / max(math.cos(math.radians(center.lat)), 1e-6)
            points = [
                GeoPoint(
                    center.lat + dlat * math.sin(2 * math.pi * j / self.k),
                    center.lon + dlon * math.cos(2 * math.pi * j / self.k),
                )
                for j in range(self.k)
            ]
        markers = tuple(
            Marker(j + 1, MARKER_COLORS[j % len(MARKER_COLORS)], p) for j, p in enumerate(points)
        )
        return MapTile(center, zoom, markers)


@dataclass
class Proposal:
    point: GeoPoint
    rationale: str
    rounds: int
    selected: list[int] = field(default_factory=list)
    extra_points: list[GeoPoint] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lat": self.point.lat,
            "lon": self.point.lon,
            "rationale": self.rationale,
            "rounds": self.rounds,
            "selected": self.selected,
            "extra_points": [[p.lat, p.lon] for p in self.extra_points],
            "transcript": self.transcript,
        }


def stage1_prompt(continent: str, difficulty: str) -> str:
    return (
        f"Propose a real place in continent '{continent}' for a street-level geolocation "
        f"challenge of {difficulty} difficulty. Pick somewhere with distinctive geographic "
        "and cultural character.\n"
        "Answer with either\n  LOCATION <lat>, <lon>\nor\n  DESCRIBE <a precise description of the place>\n"
    )


def stage2_prompt(tile: MapTile, difficulty: str) -> str:
    return (
        tile.describe()
        + f"\nIf one or more markers show a street-level view that fits a {difficulty} challenge, "
        "answer SELECT <marker numbers>, best first. If this map view is unsuitable, answer REJECT.\n"
    )


def propose_location(
    backend: ModelBackend,
    provider: MapProvider,
    continent: str,
    difficulty: str,
    max_rounds: int = 5,
) -> Proposal:
    transcript: list[dict] = []

    def ask(stage: int, round_no: int, prompt: str) -> str:
        transcript.append({"round": round_no, "stage": stage, "role": "user", "text": prompt})
        reply = backend.generate(prompt, None)
        transcript.append({"round": round_no, "stage": stage, "role": "model", "text": reply})
        return reply

    for rnd in range(1, max_rounds + 1):
        reply = ask(1, rnd, stage1_prompt(continent, difficulty))
        m = _LOCATION.search(reply)
        try:
            if m:
                center = GeoPoint(float(m.group(1)), float(m.group(2)))
                rationale = reply.strip()
            else:
                d = _DESCRIBE.search(reply)
                if not d:
                    transcript.append({"round": rnd, "stage": 1, "role": "system", "text": "unparseable, regenerating"})
                    continue
                rationale = d.group(1).strip()
                center = provider.geocode(rationale, continent)
        except ValueError as exc:
            transcript.append({"round": rnd, "stage": 1, "role": "system", "text": f"invalid location: {exc}"})
            continue

        try:
            tile = provider.tile(center, ZOOM)
        except Exception as exc:
            raise ProviderError(f"map provider failed: {exc}") from exc
        transcript.append({"round": rnd, "stage": 2, "role": "system", "text": tile.describe()})
        reply = ask(2, rnd, stage2_prompt(tile, difficulty))

        sel = _SELECT.search(reply)
        if sel and not _REJECT.search(reply[: sel.start()]):
            by_index = {mk.index: mk for mk in tile.markers}
            chosen = [int(x) for x in re.findall(r"\d+", sel.group(1))]
            chosen = [c for c in dict.fromkeys(chosen) if c in by_index]
            if chosen:
                return Proposal(
                    point=by_index[chosen[0]].point,
                    rationale=rationale,
                    rounds=rnd,
                    selected=chosen,
                    extra_points=[by_index[c].point for c in chosen[1:]],
                    transcript=transcript,
                )
        transcript.append({"round": rnd, "stage": 2, "role": "system", "text": "view rejected, regenerating"})

    raise ProposalFailed(f"no accepted location after {max_rounds} rounds", transcript)
