"""Per-turn prompt construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from ..env import Observation
from .actions import GRAMMAR_HELP

PREAMBLE = (
    "You are a geolocation agent standing inside a street-level panorama. "
    "Work out where on Earth you are. You may look around and walk along "
    "streets before committing to an answer."
)

STAGES = (
    "(i) Describe the geographic and cultural cues you can see: script and language on signs, "
    "road markings, driving side, vegetation, terrain, architecture, vehicles.",
    "(ii) Say which evidence is missing, unreadable or ambiguous.",
    "(iii) Choose one action that would best resolve that uncertainty.",
    "(iv) Give your current best location hypothesis, revised using what the latest view showed.",
)

REMINDER = "Your previous reply could not be parsed. Follow the action format exactly."


@dataclass(frozen=True)
class PromptTemplates:
    preamble: str = PREAMBLE
    stages: tuple[str, ...] = STAGES
    grammar: str = GRAMMAR_HELP
    reminder: str = REMINDER


DEFAULT_TEMPLATES = PromptTemplates()


@dataclass(frozen=True)
class HistoryEntry:
    turn: int
    reasoning: str
    command: str
    result: Optional[str] = None


def describe_observation(obs: Observation) -> str:
    links = ", ".join(f"{round(l.bearing) % 360}° ({l.length_m:.0f} m)" for l in obs.links) or "none"
    kind = "perspective view" if obs.mode == "crop" else "full panorama"
    lines = [
        f"Turn {obs.turn}. You face {round(obs.heading, 1) % 360:.1f}° (compass).",
        f"Attached image: {kind}, {obs.width}x{obs.height}, field of view {obs.fov:.0f}°, id {obs.view_hash[:12]}.",
        f"Street links from here: {obs.node_degree} at bearings {links}.",
    ]
    if obs.feedback:
        lines.append(f"Note: {obs.feedback}.")
    return "\n".join(lines)


def build_prompt(
    obs: Observation,
    history: Sequence[HistoryEntry] = (),
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    reminder: bool = False,
) -> str:
    parts = [templates.preamble, "", "Each turn:"]
    parts.extend(templates.stages)
    parts.append("")
    if history:
        parts.append(f"History ({len(history)} previous turns):")
        for h in history:
            parts.append(f"- turn {h.turn}: {h.command}" + (f" -> {h.result}" if h.result else ""))
            parts.append("  " + h.reasoning.strip().replace("\n", "\n  "))
    else:
        parts.append("History: none, this is the first turn.")
    parts.append("")
    parts.append(templates.grammar)
    parts.append("")
    parts.append(describe_observation(obs))
    if reminder:
        parts.append("")
        parts.append(templates.reminder)
    return "\n".join(parts) + "\n"
