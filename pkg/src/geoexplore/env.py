"""The embodied environment: state, actions, deterministic transitions.

An agent stands on a panorama node facing a compass heading. It can rotate
in place, move one hop along the street link closest to its heading, or end
the episode with a guess (or a bare stop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .geo import GeoPoint, PlaceLabels
from .graph import NavGraph, UnknownNode
from .render import PanoStore, render_heading, view_hash

DEFAULT_TOLERANCE = 45.0


class EnvError(RuntimeError):
    pass


class EpisodeOver(EnvError):
    pass


class NoNavigablePath(EnvError):
    """A Move found no link within tolerance. ``state`` is the post-step state
    (same node and heading, turn counter advanced)."""

    def __init__(self, message: str, state: "EnvState", observation: "Observation"):
        super().__init__(message)
        self.state = state
        self.observation = observation


@dataclass(frozen=True)
class Rotate:
    delta: float

    def __post_init__(self):
        d = float(self.delta)
        if not -360.0 < d < 360.0:
            raise ValueError(f"rotation {d} outside (-360, 360)")
        object.__setattr__(self, "delta", d)


@dataclass(frozen=True)
class Move:
    pass


@dataclass(frozen=True)
class Guess:
    point: GeoPoint
    labels: Optional[PlaceLabels] = None
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Stop:
    pass


Action = Union[Rotate, Move, Guess, Stop]


@dataclass(frozen=True)
class EnvState:
    graph_id: str
    node: str
    heading: float
    turn: int = 0
    done: bool = False

    def __post_init__(self):
        object.__setattr__(self, "heading", canonical_heading(self.heading))


@dataclass(frozen=True)
class Link:
    """A visible street link: compass bearing and length, nothing else."""

    bearing: float
    length_m: float


@dataclass(frozen=True)
class Observation:
    """What the agent sees. Carries no coordinates, labels or node ids."""

    heading: float
    turn: int
    node_degree: int
    fov: float
    width: int
    height: int
    view_hash: str
    links: tuple[Link, ...] = ()
    mode: str = "crop"
    feedback: Optional[str] = None
    view: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "heading": self.heading,
            "turn": self.turn,
            "node_degree": self.node_degree,
            "fov": self.fov,
            "width": self.width,
            "height": self.height,
            "view_hash": self.view_hash,
            "links": [{"bearing": round(l.bearing, 6), "length_m": round(l.length_m, 3)} for l in self.links],
            "mode": self.mode,
            "feedback": self.feedback,
        }


@dataclass(frozen=True)
class Transition:
    state: EnvState
    observation: Observation
    terminal: bool = False


def canonical_heading(deg: float) -> float:
    out = float(deg) % 360.0
    return 0.0 if out >= 360.0 else out


def angular_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two bearings, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from ``a`` to ``b`` in [0, 360)."""
    if a == b:
        raise ValueError("bearing undefined between coincident points")
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return canonical_heading(math.degrees(math.atan2(y, x)))


def resolve_move(
    g: NavGraph, node: str, heading: float, tolerance: float = DEFAULT_TOLERANCE
) -> Optional[str]:
    """Neighbor whose bearing is closest to ``heading`` within ``tolerance``.

    Ties go to the smaller node id. Returns None if nothing qualifies.
    """
    here = g.node(node).location
    best = None
    for nb in g.neighbors(node):
        there = g.node(nb).location
        if there == here:
            continue
        diff = angular_difference(bearing_deg(here, there), heading)
        if diff <= tolerance and (best is None or (diff, nb) < best):
            best = (diff, nb)
    return best[1] if best else None


@dataclass(frozen=True)
class EnvConfig:
    fov: float = 90.0
    width: int = 512
    height: int = 512
    pitch: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    mode: str = "crop"  # "crop" renders a perspective view, "panorama" returns the full pano
    render: bool = True

    def __post_init__(self):
        if self.mode not in ("crop", "panorama"):
            raise ValueError(f"unknown observation mode {self.mode!r}")


class Env:
    """Transition function over one immutable graph.

    The env holds no per-episode state; callers thread :class:`EnvState`
    through ``step``, so one Env can serve many concurrent episodes.
    """

    def __init__(self, graph: NavGraph, store: Optional[PanoStore] = None, config: EnvConfig = EnvConfig()):
        self.graph = graph
        self.store = store or PanoStore()
        self.config = config

    def reset(self, start: Optional[str] = None, heading: float = 0.0) -> tuple[EnvState, Observation]:
        node = self.graph.start_node if start is None else start
        if node not in self.graph:
            raise UnknownNode(f"unknown start node {node!r}")
        state = EnvState(self.graph.graph_id, node, heading, 0)
        return state, self.observe(state)

    def step(self, state: EnvState, action: Action) -> Transition:
        if state.done:
            raise EpisodeOver("episode already ended")
        if state.graph_id != self.graph.graph_id:
            raise EnvError(f"state belongs to graph {state.graph_id!r}, env is {self.graph.graph_id!r}")
        nxt_turn = state.turn + 1
        if isinstance(action, Rotate):
            new = replace(state, heading=state.heading + action.delta, turn=nxt_turn)
            return Transition(new, self.observe(new))
        if isinstance(action, Move):
            target = resolve_move(self.graph, state.node, state.heading, self.config.tolerance)
            if target is None:
                new = replace(state, turn=nxt_turn)
                obs = self.observe(new, feedback="no navigable path in this direction")
                raise NoNavigablePath(
                    f"no link within {self.config.tolerance} deg of heading {state.heading:.1f}",
                    new,
                    obs,
                )
            new = replace(state, node=target, turn=nxt_turn)
            return Transition(new, self.observe(new))
        if isinstance(action, (Guess, Stop)):
            new = replace(state, turn=nxt_turn, done=True)
            return Transition(new, self.observe(new), terminal=True)
        raise TypeError(f"not an action: {action!r}")

    def links(self, node: str) -> tuple[Link, ...]:
        here = self.graph.node(node).location
        out = []
        for nb in self.graph.neighbors(node):
            there = self.graph.node(nb).location
            if there == here:
                continue
            out.append(Link(bearing_deg(here, there), self.graph.edge_length(node, nb)))
        return tuple(sorted(out, key=lambda l: (l.bearing, l.length_m)))

    def observe(self, state: EnvState, feedback: Optional[str] = None) -> Observation:
        cfg = self.config
        pano_node = self.graph.node(state.node)
        view = None
        if cfg.render:
            pano = self.store.get(pano_node.image_ref, pano_node.heading_ref)
            if cfg.mode == "crop":
                view = render_heading(
                    pano, pano_node.heading_ref, state.heading, cfg.pitch, cfg.fov, cfg.width, cfg.height
                )
            else:
                # roll so the current heading sits at the centre column
                w = pano.shape[1]
                shift = int(round((state.heading - pano_node.heading_ref) / 360.0 * w))
                view = np.roll(pano, -shift, axis=1).astype(np.float32)
        if view is not None:
            h, w = view.shape[:2]
            digest = view_hash(view)
        else:
            h, w = cfg.height, cfg.width
            digest = view_hash(np.array([state.heading, cfg.fov, cfg.width, cfg.height]))
        return Observation(
            heading=state.heading,
            turn=state.turn,
            node_degree=self.graph.degree(state.node),
            fov=cfg.fov,
            width=w,
            height=h,
            view_hash=digest,
            links=self.links(state.node),
            mode=cfg.mode,
            feedback=feedback,
            view=view,
        )
