"""Registry of documented tool protocols and ranked tool selection.

Protocols are human-editable YAML documents (one file per tool) describing
argument schemas, an overview, a response schema, long-form docs, and the
import markers whose appearance in code or tracebacks identifies the tool.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .errors import ProcalcError

SEMANTIC_TYPES = ("real", "integer", "string", "array", "function", "boolean")

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


class ToolhubError(ProcalcError):
    pass


class DuplicateToolError(ToolhubError):
    pass


class UnknownToolError(ToolhubError):
    pass


class EmptyRegistryError(ToolhubError):
    pass


@dataclass(frozen=True)
class ArgSpec:
    name: str
    semantic_type: str
    description: str
    unit: Optional[str] = None
    required: bool = True

    def __post_init__(self):
        if self.semantic_type not in SEMANTIC_TYPES:
            raise ValueError(f"unknown semantic_type {self.semantic_type!r}")


@dataclass(frozen=True)
class ToolProtocol:
    tool_id: str
    name: str
    overview: str
    args: tuple[ArgSpec, ...]
    response_schema: str
    docs: str
    import_markers: tuple[str, ...]
    zero_arg: bool = False

    def __post_init__(self):
        if not self.args and not self.zero_arg:
            raise ValueError(f"{self.tool_id}: needs at least one ArgSpec or zero_arg=True")
        if not self.response_schema:
            raise ValueError(f"{self.tool_id}: response_schema must be non-empty")
        if not self.import_markers:
            raise ValueError(f"{self.tool_id}: import_markers must be non-empty")
        names = [a.name for a in self.args]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.tool_id}: duplicate argument names")

    def search_text(self) -> str:
        return " ".join([self.name, self.overview, self.docs])


@dataclass(frozen=True)
class ToolRef:
    tool_id: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def lexical_score(description: str, protocol_text: str) -> float:
    """Token-set ratio (Jaccard over lowercase word tokens), in [0, 1]."""
    a, b = _tokens(description), _tokens(protocol_text)
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


class ToolRegistry:
    """Single-writer registry; registration happens at startup, reads after."""

    def __init__(self):
        self._protocols: dict[str, ToolProtocol] = {}

    def __len__(self) -> int:
        return len(self._protocols)

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self._protocols

    def tool_ids(self) -> list[str]:
        return sorted(self._protocols)

    def register(self, protocol: ToolProtocol) -> None:
        if protocol.tool_id in self._protocols:
            raise DuplicateToolError(f"tool {protocol.tool_id!r} already registered")
        self._protocols[protocol.tool_id] = protocol

    def get(self, tool_id: str) -> ToolProtocol:
        try:
            return self._protocols[tool_id]
        except KeyError:
            raise UnknownToolError(f"tool {tool_id!r} not registered") from None

    def overviews(self) -> list[str]:
        return [f"{p.tool_id}: {p.overview}" for p in (self._protocols[t] for t in self.tool_ids())]

    def ranking(self, subtask_description: str, embed_backend=None) -> list[ToolRef]:
        """Full registry ranking by descending score, ties by ascending tool_id."""
        if not self._protocols:
            raise EmptyRegistryError("no tools registered")
        refs = []
        if embed_backend is not None:
            texts = [self._protocols[t].search_text() for t in self.tool_ids()]
            import numpy as np

            vecs = embed_backend.embed([subtask_description] + texts)
            q = vecs[0]
            qn = float(np.linalg.norm(q))
            for tool_id, v in zip(self.tool_ids(), vecs[1:]):
                vn = float(np.linalg.norm(v))
                cos = float(np.dot(q, v) / (qn * vn)) if qn and vn else 0.0
                refs.append(ToolRef(tool_id=tool_id, score=min(1.0, max(0.0, cos))))
        else:
            for tool_id in self.tool_ids():
                score = lexical_score(subtask_description, self._protocols[tool_id].search_text())
                refs.append(ToolRef(tool_id=tool_id, score=score))
        refs.sort(key=lambda r: (-r.score, r.tool_id))
        return refs

    def select(self, subtask_description: str, k: int, embed_backend=None) -> list[ToolRef]:
        """Top-k tools for a sub-task description, never more than registry size."""
        if k < 1:
            raise ValueError("k must be >= 1")
        return self.ranking(subtask_description, embed_backend=embed_backend)[:k]

    def protocol_digest(self, tool_ids: Sequence[str]) -> str:
        """Deterministic prompt-ready digest of the named tools, in input order."""
        blocks = []
        for tool_id in tool_ids:
            p = self.get(tool_id)
            lines = [f"## {p.name} ({p.tool_id})", p.overview, "Arguments:"]
            if p.args:
                for a in p.args:
                    unit = f", unit {a.unit}" if a.unit else ""
                    req = "required" if a.required else "optional"
                    lines.append(f"- {a.name} ({a.semantic_type}{unit}, {req}): {a.description}")
            else:
                lines.append("- (none)")
            lines.append(f"Response: {p.response_schema}")
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks)


def protocol_from_dict(doc: dict) -> ToolProtocol:
    args = tuple(
        ArgSpec(
            name=a["name"],
            semantic_type=a["semantic_type"],
            description=a.get("description", ""),
            unit=a.get("unit"),
            required=bool(a.get("required", True)),
        )
        for a in doc.get("args", []) or []
    )
    return ToolProtocol(
        tool_id=doc["tool_id"],
        name=doc["name"],
        overview=doc["overview"],
        args=args,
        response_schema=doc["response_schema"],
        docs=doc.get("docs", ""),
        import_markers=tuple(doc["import_markers"]),
        zero_arg=bool(doc.get("zero_arg", False)),
    )


def bundled_tools_dir() -> Path:
    return Path(__file__).parent / "data" / "tools"


def load_protocols(tools_dir: str | Path | None = None) -> ToolRegistry:
    """Load every *.yaml protocol document from a directory into a registry."""
    root = Path(tools_dir) if tools_dir else bundled_tools_dir()
    registry = ToolRegistry()
    for path in sorted(root.glob("*.yaml")):
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        registry.register(protocol_from_dict(doc))
    return registry
