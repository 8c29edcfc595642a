"""Program generation from query + tool digests + retrieved knowledge, and
integration of execution output into the final response.

The model's reply must carry exactly one usable fenced code block; only the
first block is executed. Tool calls are annotated by scanning source lines
for each tool's import markers.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ProcalcError
from .extractor import ParamSet
from .gateway import (
    ModelGateway,
    ModelRequest,
    PromptTemplate,
    ReactStep,
    parse_react,
    render,
)
from .planner import Query, TaskGraph, needs_tools
from .toolhub import ToolRef, ToolRegistry

ACCEPTED_LANGUAGES = ("python", "py")
MAX_KNOWLEDGE_CHUNKS = 6

REACT_GUIDANCE = (
    "Before the code block, reason in ReAct style: lines starting with\n"
    "Thought:, Action: <tool_id>[<args>], and Observation:. Close the trace\n"
    "with an Answer: line, then give the program.\n"
)

_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)


class ComposerError(ProcalcError):
    pass


class NoCodeBlockError(ComposerError):
    pass


class UnknownLanguageError(ComposerError):
    pass


@dataclass(frozen=True)
class ToolCall:
    tool_id: str
    line_span: tuple[int, int]  # 1-based inclusive
    bound_params: Optional[ParamSet] = None

    def __post_init__(self):
        start, end = self.line_span
        if not 1 <= start <= end:
            raise ValueError(f"bad line span {self.line_span}")


@dataclass(frozen=True)
class Program:
    program_id: str
    language_tag: str
    source: str
    tool_calls: tuple[ToolCall, ...] = ()
    revision_index: int = 0
    origin: str = "generated"  # generated | revised | cache

    def __post_init__(self):
        if not self.source:
            raise ValueError("program source must be non-empty")
        if self.origin not in ("generated", "revised", "cache"):
            raise ValueError(f"unknown origin {self.origin!r}")
        if (self.revision_index == 0) != (self.origin != "revised"):
            raise ValueError("revision_index must be 0 iff origin is not 'revised'")
        line_count = len(self.source.splitlines())
        for call in self.tool_calls:
            if call.line_span[1] > line_count:
                raise ValueError(f"tool call span {call.line_span} outside source")


@dataclass(frozen=True)
class FinalResponse:
    answer_text: str
    programs_used: tuple[str, ...]
    execution_summary: str
    artifacts: tuple[str, ...]

    def __post_init__(self):
        if not self.answer_text:
            raise ValueError("answer_text must be non-empty")


def program_id_for(source: str, origin: str, revision_index: int) -> str:
    digest = hashlib.sha256(f"{origin}:{revision_index}:{source}".encode()).hexdigest()
    return f"p{digest[:12]}"


def extract_code_block(text: str) -> tuple[str, str]:
    """First fenced block only; returns (language_tag, source)."""
    m = _FENCE_RE.search(text)
    if not m:
        raise NoCodeBlockError("model output contained no fenced code block")
    lang = m.group(1).strip()
    if lang.lower() not in ACCEPTED_LANGUAGES:
        raise UnknownLanguageError(f"unknown language fence {lang!r}")
    source = m.group(2)
    if source.endswith("\n"):
        source = source[:-1]
    return lang.lower(), source


def annotate_tool_calls(
    source: str,
    registry: ToolRegistry,
    params_by_tool: Optional[dict[str, ParamSet]] = None,
) -> tuple[ToolCall, ...]:
    """One ToolCall per marker-matched tool, spanning first..last hit line."""
    params_by_tool = params_by_tool or {}
    lines = source.splitlines()
    calls = []
    for tool_id in registry.tool_ids():
        protocol = registry.get(tool_id)
        hits = [
            i + 1
            for i, line in enumerate(lines)
            if any(marker in line for marker in protocol.import_markers)
        ]
        if hits:
            calls.append(
                ToolCall(
                    tool_id=tool_id,
                    line_span=(hits[0], hits[-1]),
                    bound_params=params_by_tool.get(tool_id),
                )
            )
    return tuple(calls)


def unrequested_tool_ids(program: Program, requested: Sequence[str]) -> list[str]:
    """Marker-detected tools the caller never selected; reported, not rejected."""
    wanted = set(requested)
    return sorted({c.tool_id for c in program.tool_calls} - wanted)


def knowledge_block(chunks: Sequence[object]) -> str:
    """Verbatim chunk texts, each prefixed by a source/section metadata line."""
    parts = []
    for chunk in list(chunks)[:MAX_KNOWLEDGE_CHUNKS]:
        parts.append(
            f"[source: {chunk.doc_id} | section: {chunk.section_title} "
            f"| chunk: {chunk.position}]\n{chunk.text}"
        )
    return "\n\n".join(parts)


def generate_program(
    query: Query,
    graph: TaskGraph,
    tools: Sequence[ToolRef],
    params: Sequence[ParamSet],
    knowledge: Sequence[object],
    gateway: ModelGateway,
    registry: ToolRegistry,
    template: PromptTemplate,
    react: bool = True,
) -> tuple[Program, list[ReactStep]]:
    """Compose the program prompt, complete, and lift out the fenced source.

    Returns the annotated program plus any ReAct trace steps preceding the
    code block (empty when ``react`` is off).
    """
    if needs_tools(graph) and not tools:
        raise ValueError("graph needs tools but none were selected")
    digest = registry.protocol_digest([t.tool_id for t in tools])
    prompt = render(
        template,
        {
            "query": query.text,
            "tools": digest,
            "docs": knowledge_block(knowledge),
            "observations": REACT_GUIDANCE if react else "",
            "error": "",
            "history": "",
        },
    )
    response = gateway.complete(ModelRequest(prompt_text=prompt))
    lang, source = extract_code_block(response.text)
    params_by_tool = {p.tool_id: p for p in params}
    program = Program(
        program_id=program_id_for(source, "generated", 0),
        language_tag=lang,
        source=source,
        tool_calls=annotate_tool_calls(source, registry, params_by_tool),
        revision_index=0,
        origin="generated",
    )
    steps: list[ReactStep] = []
    if react:
        preamble = response.text[: response.text.find("```")]
        steps = parse_react(preamble)
    return program, steps


def integrate(
    query: Query,
    result,
    programs_used: Sequence[str],
    gateway: ModelGateway,
    template: PromptTemplate,
) -> FinalResponse:
    """Model-written answer from the successful execution's output."""
    if result.status != "success":
        raise ValueError("integrate requires a successful execution result")
    observations = "stdout:\n" + (result.stdout or "(empty)")
    if result.artifacts:
        observations += "\nartifacts:\n" + "\n".join(result.artifacts)
    prompt = render(template, {"query": query.text, "observations": observations})
    response = gateway.complete(ModelRequest(prompt_text=prompt))
    summary = (
        f"status={result.status} duration_ms={result.duration_ms} "
        f"artifacts={len(result.artifacts)}"
    )
    return FinalResponse(
        answer_text=response.text,
        programs_used=tuple(programs_used),
        execution_summary=summary,
        artifacts=tuple(result.artifacts),
    )
