"""Model backends: scripted, replay, oracle (tests only) and an HTTP chat client."""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union, runtime_checkable

import httpx

from ..env import Guess, Observation
from ..geo import GeoPoint, PlaceLabels
from ..render import to_png_bytes
from .actions import serialize_action

log = logging.getLogger(__name__)

API_KEY_ENV = "GEOEXPLORE_API_KEY"
API_BASE_ENV = "GEOEXPLORE_API_BASE"

SYSTEM_MESSAGE = "You are a careful visual geolocation assistant."


class BackendError(RuntimeError):
    pass


class RetryableBackendError(BackendError):
    pass


class FatalBackendError(BackendError):
    pass


class MalformedResponse(FatalBackendError):
    pass


@runtime_checkable
class ModelBackend(Protocol):
    name: str
    deterministic: bool

    def generate(self, prompt: str, observation: Optional[Observation] = None) -> str: ...


Script = Union[Sequence[str], Callable[[str, Optional[Observation], int], str]]


class ScriptedBackend:
    """Plays back fixed responses in order, or calls ``script(prompt, obs, i)``.

    Running out of responses is a fatal backend error.
    """

    deterministic = True

    def __init__(self, script: Script, name: str = "scripted"):
        self.script = script
        self.name = name
        self.calls = 0
        self.prompts: list[str] = []

    def generate(self, prompt: str, observation: Optional[Observation] = None) -> str:
        i = self.calls
        self.calls += 1
        self.prompts.append(prompt)
        if callable(self.script):
            return self.script(prompt, observation, i)
        if i >= len(self.script):
            raise FatalBackendError(f"{self.name}: script exhausted after {len(self.script)} responses")
        return self.script[i]


class ReplayBackend(ScriptedBackend):
    """Scripted backend loaded from a file.

    Accepted layouts: a JSON list of response strings; a JSON object with an
    ``episodes`` map (keyed by ``graph_id@level`` or ``graph_id``) and an
    optional ``default`` list; or a chat log in JSON-lines form with a
    ``response`` field per line, as written by :meth:`ChatBackend.dump_log`.
    """

    def __init__(self, responses: Sequence[str], name: str = "replay"):
        super().__init__(list(responses), name=name)

    @staticmethod
    def load_table(path: str | Path) -> dict:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".jsonl":
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
            return {"default": [r["response"] for r in rows]}
        doc = json.loads(text)
        if isinstance(doc, list):
            return {"default": [str(x) for x in doc]}
        if isinstance(doc, dict):
            table = {k: list(v) for k, v in doc.get("episodes", {}).items()}
            if "default" in doc:
                table["default"] = list(doc["default"])
            return table
        raise ValueError(f"{path}: unsupported replay layout")

    @classmethod
    def for_episode(cls, table: dict, graph_id: str, level: Optional[str] = None, name: str = "replay"):
        for key in (f"{graph_id}@{level}" if level is not None else None, graph_id, "default"):
            if key is not None and key in table:
                return cls(table[key], name=name)
        raise KeyError(f"replay table has no entry for {graph_id!r} and no default")

    @classmethod
    def from_file(cls, path: str | Path, graph_id: Optional[str] = None, level: Optional[str] = None):
        table = cls.load_table(path)
        return cls.for_episode(table, graph_id or "", level, name=f"replay:{Path(path).name}")


class OracleBackend:
    """Answers the ground truth immediately. For tests and harness sanity checks only."""

    deterministic = True

    def __init__(self, point: GeoPoint, labels: Optional[PlaceLabels] = None, name: str = "oracle"):
        self._guess = Guess(point, None if labels is None else PlaceLabels(labels.country, labels.city, labels.street), 1.0)
        self.name = name

    def generate(self, prompt: str, observation: Optional[Observation] = None) -> str:
        return "I know this place.\n" + serialize_action(self._guess)


class ChatBackend:
    """Client for an OpenAI-style chat-completions endpoint.

    Requests are sent at temperature 0. Every request/response pair is kept
    in ``log`` so a run can be replayed offline. Retrying is the caller's
    job: transient failures raise :class:`RetryableBackendError`.
    """

    def __init__(
        self,
        api_base: Optional[str] = None,
        model: str = "gpt-4o",
        api_key: Optional[str] = None,
        *,
        image_mode: str = "base64",
        image_url_template: Optional[str] = None,
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
        max_tokens: Optional[int] = None,
    ):
        api_base = api_base or os.environ.get(API_BASE_ENV)
        if not api_base:
            raise FatalBackendError(f"no endpoint given and {API_BASE_ENV} is unset")
        if image_mode not in ("base64", "url", "none"):
            raise ValueError(f"unknown image_mode {image_mode!r}")
        if image_mode == "url" and not image_url_template:
            raise ValueError("image_mode 'url' needs image_url_template")
        self.url = api_base.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.image_mode = image_mode
        self.image_url_template = image_url_template
        self.max_tokens = max_tokens
        self.name = f"chat:{model}"
        self.deterministic = True
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()
        self.log: list[dict] = []

    def build_request(self, prompt: str, observation: Optional[Observation] = None) -> dict:
        content: list[dict] = [{"type": "text", "text": prompt}]
        if observation is not None and self.image_mode != "none":
            if self.image_mode == "base64" and observation.view is not None:
                data = base64.b64encode(to_png_bytes(observation.view)).decode("ascii")
                content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{data}"}})
            elif self.image_mode == "url":
                url = self.image_url_template.format(view_hash=observation.view_hash)
                content.append({"type": "image_url", "image_url": {"url": url}})
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": content},
            ],
            "temperature": 0,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body

    def generate(self, prompt: str, observation: Optional[Observation] = None) -> str:
        body = self.build_request(prompt, observation)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.url, json=body, headers=headers)
        except httpx.TransportError as exc:
            raise RetryableBackendError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableBackendError(f"HTTP {resp.status_code} from {self.url}")
        if resp.status_code >= 400:
            raise FatalBackendError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {resp.text[:200]}") from exc
        if isinstance(text, list):
            # some servers return content parts
            text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
        if not isinstance(text, str):
            raise MalformedResponse(f"message content is not text: {text!r}")
        with self._lock:
            self.log.append({"request": _strip_images(body), "response": text})
        return text

    def dump_log(self, path: str | Path):
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    def close(self):
        self._client.close()


def _strip_images(body: dict) -> dict:
    out = json.loads(json.dumps(body))
    for msg in out["messages"]:
        if isinstance(msg["content"], list):
            for part in msg["content"]:
                if part.get("type") == "image_url" and part["image_url"]["url"].startswith("data:"):
                    part["image_url"]["url"] = "data:image/png;base64,<omitted>"
    return out
