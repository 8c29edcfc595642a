"""Attributable reflection: localize a runtime failure to a tool call,
revise the program with that tool's documentation plus history, and loop
until success or the iteration budget is spent.

Timeouts and setup errors are non-reflectable by default: without fresh
error evidence, revising loops unproductively.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .composer import (
    Program,
    annotate_tool_calls,
    extract_code_block,
    program_id_for,
)
from .executor import ExecutionResult
from .gateway import ModelGateway, ModelRequest, PromptTemplate, render
from .planner import Query
from .toolhub import ToolRegistry

AGENT_CODE = "AGENT_CODE"
DEFAULT_MAX_ITERATIONS = 3

SELF_REPAIR_NOTE = (
    "The failure lies in the surrounding program logic, not in any documented "
    "tool usage. Re-derive the failing step from the task statement."
)


@dataclass
class ReflectionState:
    iteration: int = 0
    history: list[tuple[Program, ExecutionResult]] = field(default_factory=list)
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    attributed: Optional[str] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.iteration > self.max_iterations:
            raise ValueError("iteration exceeds max_iterations")
        if len(self.history) != self.iteration:
            raise ValueError("history length must equal iteration")


@dataclass(frozen=True)
class ReflectionOutcome:
    status: str  # succeeded | exhausted
    final: tuple[Program, ExecutionResult]
    state: ReflectionState

    def __post_init__(self):
        if self.status not in ("succeeded", "exhausted"):
            raise ValueError(f"unknown outcome status {self.status!r}")
        if self.status == "succeeded" and self.final[1].status != "success":
            raise ValueError("succeeded outcome requires a success result")


def attribute(
    result: ExecutionResult,
    registry: ToolRegistry,
    gateway: Optional[ModelGateway] = None,
    mode: str = "deterministic",
    attribution_template: Optional[PromptTemplate] = None,
) -> str:
    """Name the tool whose usage triggered the failure, or AGENT_CODE.

    Deterministic mode walks frames deepest-first and matches registered
    import markers against frame paths and code context. Model mode asks the
    backend and falls back to deterministic on unparseable answers.
    """
    if result.status != "runtime_error":
        raise ValueError("attribute requires a runtime_error result")
    if mode == "model":
        if gateway is None or attribution_template is None:
            raise ValueError("model mode needs a gateway and the attribution template")
        error_text = _error_digest(result)
        prompt = render(
            attribution_template,
            {"tools": "\n".join(registry.overviews()), "error": error_text},
        )
        answer = gateway.complete(ModelRequest(prompt_text=prompt)).text.strip()
        token = answer.split()[0] if answer.split() else ""
        if token == AGENT_CODE:
            return AGENT_CODE
        if token in registry:
            return token
        # unparseable or unregistered: fall through to deterministic
    frames = result.exception.frames if result.exception else ()
    for frame in frames:
        haystacks = [frame.file, frame.code_context or ""]
        for tool_id in registry.tool_ids():
            markers = registry.get(tool_id).import_markers
            if any(marker in hay for marker in markers for hay in haystacks):
                return tool_id
    return AGENT_CODE


def _error_digest(result: ExecutionResult) -> str:
    exc = result.exception
    lines = [f"{exc.type_name}: {exc.message}"]
    for frame in exc.frames:
        ctx = f" | {frame.code_context}" if frame.code_context else ""
        lines.append(f"  at {frame.file}:{frame.line} in {frame.symbol}{ctx}")
    return "\n".join(lines)


def _faulty_snippet(program: Program, attributed: str, result: ExecutionResult) -> str:
    """Lines of the attributed call's span (or failing frame) +/- 2."""
    lines = program.source.splitlines()
    span = None
    for call in program.tool_calls:
        if call.tool_id == attributed:
            span = call.line_span
            break
    if span is None and result.exception:
        for frame in result.exception.frames:
            if frame.line <= len(lines):
                span = (frame.line, frame.line)
                break
    if span is None:
        span = (1, min(len(lines), 5))
    lo = max(1, span[0] - 2)
    hi = min(len(lines), span[1] + 2)
    return "\n".join(f"{i}: {lines[i - 1]}" for i in range(lo, hi + 1))


def history_digest(state: ReflectionState) -> str:
    """Compact per-iteration summary: exception type + attributed tool."""
    rows = []
    for idx, (prog, res) in enumerate(state.history):
        exc = res.exception.type_name if res.exception else res.status
        rows.append(f"iteration {idx}: {exc} (revision {prog.revision_index})")
    return "\n".join(rows)


def revise(
    query: Query,
    program: Program,
    result: ExecutionResult,
    attributed: str,
    attributed_doc: str,
    state: ReflectionState,
    gateway: ModelGateway,
    registry: ToolRegistry,
    template: PromptTemplate,
) -> Program:
    """Ask the model for a corrected program; bumps revision_index."""
    if state.iteration >= state.max_iterations:
        raise ValueError("iteration budget already spent")
    doc = attributed_doc if attributed != AGENT_CODE else SELF_REPAIR_NOTE
    exc = result.exception
    error_block = "\n".join(
        [
            f"{exc.type_name}: {exc.message}" if exc else result.status,
            "Faulty snippet:",
            _faulty_snippet(program, attributed, result),
            f"Attributed tool: {attributed}",
            "Tool documentation:",
            doc,
        ]
    )
    prompt = render(
        template,
        {
            "query": query.text,
            "tools": registry.protocol_digest([t for t in (attributed,) if t in registry]),
            "docs": "",
            "observations": "",
            "error": error_block,
            "history": history_digest(state),
        },
    )
    response = gateway.complete(ModelRequest(prompt_text=prompt))
    lang, source = extract_code_block(response.text)
    revision = state.iteration + 1
    return Program(
        program_id=program_id_for(source, "revised", revision),
        language_tag=lang,
        source=source,
        tool_calls=annotate_tool_calls(source, registry),
        revision_index=revision,
        origin="revised",
    )


def run_loop(
    query: Query,
    initial: Program,
    exec_fn: Callable[[Program], ExecutionResult],
    registry: ToolRegistry,
    gateway: ModelGateway,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    attribution_mode: str = "deterministic",
    reflect_on_timeout: bool = False,
    attribution_template: Optional[PromptTemplate] = None,
    program_template: Optional[PromptTemplate] = None,
) -> ReflectionOutcome:
    """Execute, and on runtime errors attribute/revise/re-execute until
    success or the budget is exhausted. At most max_iterations + 1 executions.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    state = ReflectionState(max_iterations=max_iterations)
    program = initial
    result = exec_fn(program)
    while True:
        if result.status == "success":
            return ReflectionOutcome(status="succeeded", final=(program, result), state=state)
        reflectable = result.status == "runtime_error" or (
            result.status == "timeout" and reflect_on_timeout
        )
        if not reflectable or state.iteration >= state.max_iterations:
            return ReflectionOutcome(status="exhausted", final=(program, result), state=state)
        if result.status == "runtime_error":
            attributed = attribute(
                result,
                registry,
                gateway=gateway,
                mode=attribution_mode,
                attribution_template=attribution_template,
            )
        else:
            attributed = AGENT_CODE  # timeout carries no frames to match
        state.attributed = attributed
        doc = registry.get(attributed).docs if attributed in registry else ""
        revised = revise(
            query,
            program,
            result,
            attributed,
            doc,
            state,
            gateway,
            registry,
            program_template,
        )
        state.history.append((program, result))
        state.iteration += 1
        program = revised
        result = exec_fn(program)
