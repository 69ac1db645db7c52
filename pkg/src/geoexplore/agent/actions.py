"""Action grammar for model output.

Models answer with a fenced block, for example::

    ```action
    GUESS 48.8566, 2.3522 "france/paris/rue de rivoli" 0.6
    ROTATE +30
    ```

Commands (keywords are case-insensitive):

    ROTATE <deg> [LEFT|RIGHT]   positive = clockwise (right)
    MOVE [...]                  one hop along the link nearest the heading
    GUESS <lat>, <lon> ["country/city/street"] [confidence]
    STOP

If the text has fenced blocks, the last block containing a command is used;
otherwise the whole text is searched, so "...therefore ROTATE +30" parses.
The last ROTATE/MOVE/STOP in the region is the action; the last GUESS is the
current hypothesis. A GUESS with no other command ends the episode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..env import Action, Guess, Move, Rotate, Stop
from ..geo import GeoPoint, PlaceLabels

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_FENCE = re.compile(r"```[^\n`]*\n?(.*?)```", re.S)
_ROTATE = re.compile(rf"\brotate\s*:?\s*({_NUM})\s*(?:°|deg(?:rees?)?\b)?\s*(left|right)?", re.I)
_MOVE = re.compile(r"\bmove\b", re.I)
_STOP = re.compile(r"\bstop\b", re.I)
_GUESS = re.compile(
    rf"\bguess\s*:?\s*({_NUM})\s*,\s*({_NUM})"
    rf"(?:\s*\"([^\"\n]*)\")?"
    rf"(?:[ \t]+({_NUM}))?",
    re.I,
)

GRAMMAR_HELP = """Reply with exactly one fenced block:
```action
GUESS <lat>, <lon> "<country>/<city>/<street>" <confidence 0-1>
<one of: ROTATE <degrees, + is right> | MOVE | STOP>
```
A GUESS line on its own submits your final answer."""


class ParseError(ValueError):
    def __init__(self, message: str, text: str):
        super().__init__(message)
        self.text = text


@dataclass(frozen=True)
class ParsedOutput:
    action: Action
    guess: Optional[Guess] = None


def _region(text: str) -> str:
    blocks = [b for b in _FENCE.findall(text) if _has_command(b)]
    return blocks[-1] if blocks else text


def _has_command(s: str) -> bool:
    return any(p.search(s) for p in (_ROTATE, _MOVE, _STOP, _GUESS))


def _labels(raw: Optional[str]) -> Optional[PlaceLabels]:
    if raw is None:
        return None
    parts = [p.strip() for p in raw.split("/")]
    parts += [""] * (3 - len(parts))
    country, city, street = parts[0], parts[1], "/".join(parts[2:]) if len(parts) > 3 else parts[2]
    if not country:
        return None
    return PlaceLabels(country=country, city=city or None, street=street or None)


def parse_action(text: str) -> ParsedOutput:
    region = _region(text or "")

    guess = None
    gm = None
    for gm in _GUESS.finditer(region):
        pass
    if gm is not None:
        try:
            conf = float(gm.group(4)) if gm.group(4) is not None else None
            guess = Guess(
                point=GeoPoint(float(gm.group(1)), float(gm.group(2))),
                labels=_labels(gm.group(3)),
                confidence=conf,
            )
        except ValueError as exc:
            raise ParseError(f"invalid GUESS: {exc}", text) from exc

    # GUESS spans can contain words like "stop" inside the quoted labels
    masked = region
    if gm is not None:
        masked = _GUESS.sub(lambda m: " " * len(m.group(0)), region)

    found = []
    for m in _ROTATE.finditer(masked):
        found.append((m.start(), "rotate", m))
    for m in _MOVE.finditer(masked):
        found.append((m.start(), "move", m))
    for m in _STOP.finditer(masked):
        found.append((m.start(), "stop", m))

    if found:
        _, kind, m = max(found, key=lambda f: f[0])
        if kind == "rotate":
            delta = float(m.group(1))
            if m.group(2):
                delta = abs(delta) if m.group(2).lower() == "right" else -abs(delta)
            try:
                action = Rotate(delta)
            except ValueError as exc:
                raise ParseError(str(exc), text) from exc
        elif kind == "move":
            action = Move()
        else:
            action = Stop()
        return ParsedOutput(action, guess)
    if guess is not None:
        return ParsedOutput(guess, guess)
    raise ParseError("no action found in model output", text)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_guess(g: Guess) -> str:
    out = f"GUESS {_fmt(g.point.lat)}, {_fmt(g.point.lon)}"
    if g.labels is not None:
        parts = [g.labels.country, g.labels.city or "", g.labels.street or ""]
        while parts and not parts[-1]:
            parts.pop()
        out += ' "' + "/".join(parts) + '"'
    if g.confidence is not None:
        out += " " + _fmt(g.confidence)
    return out


def format_command(action: Action) -> str:
    if isinstance(action, Rotate):
        delta = action.delta + 0.0  # -0.0 would print as "+-0.0"
        return f"ROTATE {'+' if delta >= 0 else ''}{_fmt(delta)}"
    if isinstance(action, Move):
        return "MOVE"
    if isinstance(action, Stop):
        return "STOP"
    if isinstance(action, Guess):
        return format_guess(action)
    raise TypeError(f"not an action: {action!r}")


def serialize_action(action: Action, guess: Optional[Guess] = None) -> str:
    """Render an action (and optional hypothesis) as a fenced block that
    :func:`parse_action` reads back unchanged."""
    lines = []
    if isinstance(action, Guess):
        lines.append(format_guess(action))
    else:
        if guess is not None:
            lines.append(format_guess(guess))
        lines.append(format_command(action))
    return "```action\n" + "\n".join(lines) + "\n```"
