"""Uniform interface to a generative model backend.

Three modes: ``live`` (HTTP chat-completions), ``replay`` (deterministic
lookup in a line-delimited store keyed by a content hash of the request),
and ``record`` (live call, response appended to the store). Also owns
prompt-template loading/rendering and parsing of reason/act/observe traces.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional

from .errors import ProcalcError

PLACEHOLDER_NAMES = frozenset(
    {"query", "tools", "docs", "error", "history", "observations"}
)
TEMPLATE_IDS = ("program_instruction", "attribution_instruction", "planning", "integration")

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")
_MARKER_RE = re.compile(r"^\s*(Thought|Action|Observation|Answer):\s?(.*)$")
_ACTION_RE = re.compile(r"^([A-Za-z_][\w.\-]*)\[(.*)\]\s*$")

_KIND_BY_MARKER = {
    "Thought": "thought",
    "Action": "action",
    "Observation": "observation",
    "Answer": "answer",
}
_MARKER_BY_KIND = {v: k for k, v in _KIND_BY_MARKER.items()}


class GatewayError(ProcalcError):
    pass


class BackendUnreachableError(GatewayError):
    def __init__(self, key: str, detail: str):
        super().__init__(f"model backend unreachable (request key {key}): {detail}")
        self.key = key


class ReplayMissError(GatewayError):
    def __init__(self, key: str):
        super().__init__(f"replay miss: no stored response for request key {key}")
        self.key = key


class MissingBindingError(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"missing binding for placeholder {name!r}")
        self.name = name


class MalformedActionError(GatewayError):
    pass


@dataclass(frozen=True)
class ModelRequest:
    prompt_text: str
    max_tokens: int = 1024
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    backend_id: str
    cached: bool


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    def __post_init__(self):
        if self.template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template_id {self.template_id!r}")
        unknown = self.placeholders() - PLACEHOLDER_NAMES
        if unknown:
            raise ValueError(f"undeclared placeholders in template: {sorted(unknown)}")

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))


@dataclass(frozen=True)
class ReactStep:
    kind: str
    text: str
    action_tool: Optional[str] = None
    action_args: Optional[str] = None

    def __post_init__(self):
        if self.kind == "action" and self.action_tool is None:
            raise ValueError("action step requires action_tool")
        if self.kind != "action" and self.action_tool is not None:
            raise ValueError("only action steps may carry action_tool")


def canonical_key(request: ModelRequest) -> str:
    """Content hash of the canonicalized request; the replay-store key."""
    payload = json.dumps(
        {
            "prompt_text": request.prompt_text,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop_sequences": list(request.stop_sequences),
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayStore:
    """Append-only line-delimited store of {"key", "response"} records.

    Concurrent reads are lock-free after load; writes are serialized.
    Later records win on duplicate keys.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = rec["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: str, response: str) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "response": response}) + "\n")
            self._entries[key] = response

    def record(self, request: ModelRequest, response: str) -> str:
        """Store a response under the request's canonical key; returns the key."""
        key = canonical_key(request)
        self.put(key, response)
        return key


Transport = Callable[[ModelRequest], str]


class ModelGateway:
    """complete() dispatcher over live/replay/record backends."""

    def __init__(
        self,
        mode: str = "replay",
        base_url: Optional[str] = None,
        key_env: str = "PROCALC_MODEL_KEY",
        replay_path: Optional[str | Path] = None,
        model_name: str = "default",
        timeout_s: float = 60.0,
        transport: Optional[Transport] = None,
    ):
        if mode not in ("live", "replay", "record"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode in ("replay", "record") and replay_path is None:
            raise ValueError(f"mode={mode} requires a replay_path")
        self.mode = mode
        self.base_url = base_url
        self.key_env = key_env
        self.model_name = model_name
        self.timeout_s = timeout_s
        self.store = ReplayStore(replay_path) if replay_path is not None else None
        self._transport = transport or self._http_transport
        self.backend_id = f"{mode}:{model_name}"
        self.served_keys: list[str] = []

    @property
    def call_count(self) -> int:
        return len(self.served_keys)

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = canonical_key(request)
        if self.mode == "replay":
            text = self.store.get(key)
            if text is None:
                raise ReplayMissError(key)
            self.served_keys.append(key)
            return ModelResponse(text=text, backend_id=self.backend_id, cached=True)
        text = self._transport(request)
        if self.mode == "record":
            self.store.put(key, text)
        self.served_keys.append(key)
        return ModelResponse(text=text, backend_id=self.backend_id, cached=False)

    def _http_transport(self, request: ModelRequest) -> str:
        import requests

        if not self.base_url:
            raise BackendUnreachableError(canonical_key(request), "no base_url configured")
        url = self.base_url.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise BackendUnreachableError(canonical_key(request), str(exc)) from exc


def _templates_root() -> Path:
    return Path(__file__).parent / "templates"


def template_version(templates_dir: Optional[str | Path] = None) -> str:
    root = Path(templates_dir) if templates_dir else _templates_root()
    return (root / "VERSION").read_text(encoding="utf-8").strip()


def load_template(template_id: str, templates_dir: Optional[str | Path] = None) -> PromptTemplate:
    """Load one of the versioned template files shipped with the package."""
    if template_id not in TEMPLATE_IDS:
        raise ValueError(f"unknown template_id {template_id!r}")
    root = Path(templates_dir) if templates_dir else _templates_root()
    body = (root / f"{template_id}.txt").read_text(encoding="utf-8")
    return PromptTemplate(template_id=template_id, body=body)


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder exactly once; stable across runs."""
    needed = template.placeholders()
    for name in sorted(needed):
        if name not in bindings:
            raise MissingBindingError(name)

    def _sub(match: re.Match) -> str:
        return bindings[match.group(1)]

    return _PLACEHOLDER_RE.sub(_sub, template.body)


def parse_react(text: str) -> list[ReactStep]:
    """Split a trace on line-initial Thought:/Action:/Observation:/Answer: markers.

    Text before the first marker is discarded; non-marker lines continue the
    previous step. Action lines must look like ``Action: tool_id[args]``.
    """
    steps: list[ReactStep] = []
    current: Optional[dict] = None
    for line in text.splitlines():
        m = _MARKER_RE.match(line)
        if m:
            if current is not None:
                steps.append(_finish_step(current))
            current = {"kind": _KIND_BY_MARKER[m.group(1)], "text": m.group(2)}
        elif current is not None:
            current["text"] += "\n" + line
    if current is not None:
        steps.append(_finish_step(current))
    return steps


def _finish_step(raw: dict) -> ReactStep:
    if raw["kind"] != "action":
        return ReactStep(kind=raw["kind"], text=raw["text"])
    m = _ACTION_RE.match(raw["text"])
    if not m:
        raise MalformedActionError(f"action line without bracketed args: {raw['text']!r}")
    return ReactStep(kind="action", text=raw["text"], action_tool=m.group(1), action_args=m.group(2))


def serialize_react(steps: Iterable[ReactStep]) -> str:
    """Inverse of parse_react for parsed step lists."""
    lines = []
    for step in steps:
        lines.append(f"{_MARKER_BY_KIND[step.kind]}: {step.text}")
    return "\n".join(lines)
