"""Agent loop, action grammar, prompts, model backends and location proposal."""

from .actions import ParseError, ParsedOutput, parse_action, serialize_action
from .backends import (
    BackendError,
    ChatBackend,
    FatalBackendError,
    MalformedResponse,
    ModelBackend,
    OracleBackend,
    ReplayBackend,
    RetryableBackendError,
    ScriptedBackend,
)
from .loop import AgentTurn, EpisodeConfig, EpisodeFailed, EpisodeTrace, run_episode
from .prompts import DEFAULT_TEMPLATES, HistoryEntry, PromptTemplates, build_prompt
from .proposal import MapTile, Marker, Proposal, ProposalFailed, StubMapProvider, propose_location

__all__ = [
    "ParseError",
    "ParsedOutput",
    "parse_action",
    "serialize_action",
    "BackendError",
    "ChatBackend",
    "FatalBackendError",
    "MalformedResponse",
    "ModelBackend",
    "OracleBackend",
    "ReplayBackend",
    "RetryableBackendError",
    "ScriptedBackend",
    "AgentTurn",
    "EpisodeConfig",
    "EpisodeFailed",
    "EpisodeTrace",
    "run_episode",
    "DEFAULT_TEMPLATES",
    "HistoryEntry",
    "PromptTemplates",
    "build_prompt",
    "MapTile",
    "Marker",
    "Proposal",
    "ProposalFailed",
    "StubMapProvider",
    "propose_location",
]
