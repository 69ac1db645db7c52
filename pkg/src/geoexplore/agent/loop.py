"""The act-while-reasoning episode loop.

Each turn the backend sees the current observation plus the full history,
its reply is parsed into an action, and the environment executes it. The
episode ends on a guess or stop, when the turn budget runs out, or when the
model's confidence crosses a threshold.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from ..env import Env, EnvConfig, Guess, NoNavigablePath, Stop
from ..geo import GeoPoint, PlaceLabels, geo_score, haversine_km
from ..graph import NavGraph
from ..render import PanoStore
from .actions import ParseError, format_command, format_guess, parse_action
from .backends import ModelBackend, RetryableBackendError
from .prompts import DEFAULT_TEMPLATES, HistoryEntry, PromptTemplates, build_prompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeConfig:
    max_turns: int = 10
    fov: float = 90.0
    width: int = 512
    height: int = 512
    tolerance: float = 45.0
    mode: str = "crop"
    stop_on_confidence: Optional[float] = None
    reprompt_on_parse_error: bool = True
    max_retries: int = 3
    retry_backoff: float = 0.0
    templates: PromptTemplates = DEFAULT_TEMPLATES

    def __post_init__(self):
        if self.max_turns < 0:
            raise ValueError("max_turns must be >= 0")

    def env_config(self) -> EnvConfig:
        return EnvConfig(fov=self.fov, width=self.width, height=self.height, tolerance=self.tolerance, mode=self.mode)


@dataclass
class AgentTurn:
    turn: int
    node: str
    heading: float
    view_hash: str
    prompt: str
    reasoning_text: str
    action: object
    guess: Optional[Guess] = None
    reprompted: bool = False
    parse_failed: bool = False
    feedback: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "node": self.node,
            "heading": self.heading,
            "view_hash": self.view_hash,
            "prompt": self.prompt,
            "reasoning_text": self.reasoning_text,
            "action": format_command(self.action),
            "guess": _guess_dict(self.guess),
            "reprompted": self.reprompted,
            "parse_failed": self.parse_failed,
            "feedback": self.feedback,
        }


@dataclass
class EpisodeTrace:
    graph_id: str
    start_node: str
    start_heading: float
    truth_point: GeoPoint
    truth_labels: PlaceLabels
    turns: list[AgentTurn] = field(default_factory=list)
    final_guess: Optional[Guess] = None
    distance_km: Optional[float] = None
    score: Optional[float] = None
    retries: int = 0
    backend: str = ""
    level: Optional[str] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def null_guess(self) -> bool:
        return self.error is None and self.final_guess is None

    @property
    def prompts(self) -> list[str]:
        return [t.prompt for t in self.turns]

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "level": self.level,
            "backend": self.backend,
            "start_node": self.start_node,
            "start_heading": self.start_heading,
            "ground_truth": {
                "lat": self.truth_point.lat,
                "lon": self.truth_point.lon,
                "labels": self.truth_labels.to_dict(),
            },
            "turns": [t.to_dict() for t in self.turns],
            "final_guess": _guess_dict(self.final_guess),
            "distance_km": self.distance_km,
            "score": self.score,
            "retries": self.retries,
            "error": self.error,
        }


def _guess_dict(g: Optional[Guess]) -> Optional[dict]:
    if g is None:
        return None
    return {
        "lat": g.point.lat,
        "lon": g.point.lon,
        "labels": None if g.labels is None else g.labels.to_dict(),
        "confidence": g.confidence,
        "text": format_guess(g),
    }


class _Caller:
    def __init__(self, backend: ModelBackend, cfg: EpisodeConfig):
        self.backend = backend
        self.cfg = cfg
        self.retries = 0

    def __call__(self, prompt, obs) -> str:
        for attempt in range(self.cfg.max_retries + 1):
            try:
                return self.backend.generate(prompt, obs)
            except RetryableBackendError as exc:
                if attempt == self.cfg.max_retries:
                    raise
                self.retries += 1
                log.info("backend %s: retry %d after %s", self.backend.name, attempt + 1, exc)
                if self.cfg.retry_backoff:
                    time.sleep(self.cfg.retry_backoff * 2**attempt)
        raise AssertionError("unreachable")


def run_episode(
    g: NavGraph,
    backend: ModelBackend,
    cfg: EpisodeConfig = EpisodeConfig(),
    *,
    start: Optional[str] = None,
    heading: float = 0.0,
    store: Optional[PanoStore] = None,
    level: Optional[str] = None,
) -> EpisodeTrace:
    env = Env(g, store, cfg.env_config())
    state, obs = env.reset(start, heading)
    truth = g.node(state.node)
    trace = EpisodeTrace(
        graph_id=g.graph_id,
        start_node=state.node,
        start_heading=state.heading,
        truth_point=truth.location,
        truth_labels=truth.labels,
        backend=getattr(backend, "name", type(backend).__name__),
        level=level,
    )
    call = _Caller(backend, cfg)
    history: list[HistoryEntry] = []
    latest: Optional[Guess] = None

    try:
        for t in range(cfg.max_turns + 1):
            prompt = build_prompt(obs, history, cfg.templates)
            text = call(prompt, obs)
            reprompted = parse_failed = False
            try:
                parsed = parse_action(text)
            except ParseError:
                parsed = None
                if cfg.reprompt_on_parse_error:
                    reprompted = True
                    prompt = build_prompt(obs, history, cfg.templates, reminder=True)
                    text = call(prompt, obs)
                    try:
                        parsed = parse_action(text)
                    except ParseError:
                        parsed = None
            if parsed is None:
                parse_failed = True
                action, guess = Stop(), None
            else:
                action, guess = parsed.action, parsed.guess
            if guess is not None:
                latest = guess

            confident = (
                cfg.stop_on_confidence is not None
                and latest is not None
                and latest.confidence is not None
                and latest.confidence >= cfg.stop_on_confidence
            )
            terminal = isinstance(action, (Guess, Stop)) or t == cfg.max_turns or confident
            trace.turns.append(
                AgentTurn(
                    turn=t,
                    node=state.node,
                    heading=state.heading,
                    view_hash=obs.view_hash,
                    prompt=prompt,
                    reasoning_text=text,
                    action=action,
                    guess=guess if guess is not None or not terminal else latest,
                    reprompted=reprompted,
                    parse_failed=parse_failed,
                    feedback=obs.feedback,
                )
            )
            if terminal:
                break

            try:
                tr = env.step(state, action)
                state, obs = tr.state, tr.observation
                result = None
            except NoNavigablePath as exc:
                state, obs = exc.state, exc.observation
                result = "blocked: no street in that direction"
            history.append(HistoryEntry(t, text, format_command(action), result))
    except Exception as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.retries = call.retries
        raise EpisodeFailed(trace) from exc

    trace.retries = call.retries
    trace.final_guess = latest
    if latest is not None:
        trace.distance_km = haversine_km(latest.point, trace.truth_point)
        trace.score = geo_score(trace.distance_km)
    return trace


class EpisodeFailed(RuntimeError):
    """Raised when an episode aborts; ``trace`` holds the turns played so far."""

    def __init__(self, trace: EpisodeTrace):
        super().__init__(trace.error)
        self.trace = trace
