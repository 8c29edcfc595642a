"""End-to-end query pipeline: cache lookup, planning, tool selection,
parameter extraction, knowledge retrieval, program generation, sandboxed
execution with attributable reflection, and result integration.

A cache hit short-circuits every pre-generation model call, so a repeated
query costs only the integration completion.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import composer, planner, reflector
from .config import AgentConfig
from .executor import ExecutionResult, FixtureExecutor, SandboxExecutor, SandboxLimits
from .extractor import ParamSet, extract
from .gateway import ModelGateway, ReactStep, load_template
from .planner import Query, TaskGraph
from .progcache import ProgramCache
from .rag import HttpReranker, VectorIndex
from .toolhub import ToolRef, ToolRegistry

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TASK_FAILED = 2
EXIT_SETUP = 3

KNOWLEDGE_K = 6


def query_from_text(text: str) -> Query:
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]
    return Query(id=f"q{digest}", text=text)


@dataclass
class PipelineRun:
    query: Query
    exit_code: int = EXIT_OK
    cache_hit: bool = False
    graph: Optional[TaskGraph] = None
    selection: list[tuple[str, ToolRef]] = field(default_factory=list)
    params: list[ParamSet] = field(default_factory=list)
    knowledge_ids: list[str] = field(default_factory=list)
    react_steps: list[ReactStep] = field(default_factory=list)
    unrequested_tools: list[str] = field(default_factory=list)
    outcome: Optional[reflector.ReflectionOutcome] = None
    final: Optional[composer.FinalResponse] = None
    failure: str = ""

    @property
    def selected_tool_ids(self) -> list[str]:
        seen = []
        for _, ref in self.selection:
            if ref.tool_id not in seen:
                seen.append(ref.tool_id)
        return seen


def build_executor(config: AgentConfig) -> Callable[[composer.Program], ExecutionResult]:
    """Executor from config; a ``fixture:<file>`` runner path selects the
    scripted executor for offline runs."""
    runner = config.sandbox.runner_path
    limits = SandboxLimits(
        wall_timeout_ms=config.sandbox.timeout_ms,
        artifact_dir=str(Path.cwd() / "artifacts"),
    )
    if runner.startswith("fixture:"):
        fixture = FixtureExecutor.from_file(runner[len("fixture:"):])
        return lambda program: fixture.execute(program, limits)
    if not runner:
        def _no_runner(program):
            return ExecutionResult(status="setup_error", stderr="no sandbox.runner_path configured")
        return _no_runner
    sandbox = SandboxExecutor(runner)
    return lambda program: sandbox.execute(program, limits)


def build_gateway(config: AgentConfig) -> ModelGateway:
    return ModelGateway(
        mode=config.model.mode,
        base_url=config.model.base_url,
        key_env=config.model.key_env,
        replay_path=config.model.replay_path,
        model_name=config.model.name,
    )


def run_query(
    query_text: str,
    config: AgentConfig,
    registry: ToolRegistry,
    gateway: ModelGateway,
    exec_fn: Callable[[composer.Program], ExecutionResult],
    cache: Optional[ProgramCache] = None,
    index: Optional[VectorIndex] = None,
) -> PipelineRun:
    """Drive one query through every stage; never raises for task-level
    failures (they land in exit_code/failure)."""
    run = PipelineRun(query=query_from_text(query_text))
    flags = config.ablation
    program_template = load_template("program_instruction")
    integration_template = load_template("integration")

    program: Optional[composer.Program] = None
    if cache is not None and not flags.no_cache:
        entry = cache.get(run.query, threshold=config.cache.threshold)
        if entry is not None:
            run.cache_hit = True
            program = entry.program

    if program is None:
        run.graph = planner.plan(
            run.query, registry.overviews(), gateway, load_template("planning")
        )
        if planner.needs_tools(run.graph):
            for subtask in planner.topo_order(run.graph):
                if not subtask.needs_tools:
                    continue
                for ref in registry.select(subtask.description, k=1):
                    run.selection.append((subtask.id, ref))
        for tool_id in run.selected_tool_ids:
            run.params.append(extract(run.query, registry.get(tool_id), gateway))

        knowledge = []
        if index is not None and not flags.no_external_knowledge and len(index) > 0:
            reranker = HttpReranker(config.rag.rerank_url) if config.rag.rerank_url else None
            hits = index.retrieve(run.query.text, k=KNOWLEDGE_K, reranker=reranker)
            knowledge = [hit.chunk for hit in hits]
            run.knowledge_ids = [hit.chunk.chunk_id for hit in hits]

        tools = [ref for _, ref in run.selection]
        unique_tools = []
        for ref in tools:
            if ref.tool_id not in [t.tool_id for t in unique_tools]:
                unique_tools.append(ref)
        program, run.react_steps = composer.generate_program(
            run.query,
            run.graph,
            unique_tools,
            run.params,
            knowledge,
            gateway,
            registry,
            program_template,
            react=not flags.no_react,
        )
        run.unrequested_tools = composer.unrequested_tool_ids(
            program, [t.tool_id for t in unique_tools]
        )
        if run.unrequested_tools:
            logger.warning(
                "program uses tools beyond the selection: %s",
                ", ".join(run.unrequested_tools),
            )

    if flags.no_reflection:
        result = exec_fn(program)
        status = "succeeded" if result.status == "success" else "exhausted"
        run.outcome = reflector.ReflectionOutcome(
            status=status,
            final=(program, result),
            state=reflector.ReflectionState(max_iterations=config.reflection.max_iterations),
        )
    else:
        run.outcome = reflector.run_loop(
            run.query,
            program,
            exec_fn,
            registry,
            gateway,
            max_iterations=config.reflection.max_iterations,
            reflect_on_timeout=config.reflection.reflect_on_timeout,
            attribution_template=load_template("attribution_instruction"),
            program_template=program_template,
        )

    final_program, final_result = run.outcome.final
    if run.outcome.status != "succeeded":
        run.failure = (
            f"reflection exhausted: last status {final_result.status}"
            if final_result.status != "setup_error"
            else f"setup error: {final_result.stderr}"
        )
        run.exit_code = EXIT_SETUP if final_result.status == "setup_error" else EXIT_TASK_FAILED
        return run

    run.final = composer.integrate(
        run.query,
        final_result,
        [final_program.program_id],
        gateway,
        integration_template,
    )
    if cache is not None and not flags.no_cache:
        cache.put(run.query, final_program)
    run.exit_code = EXIT_OK
    return run


def write_trace(run: PipelineRun, trace_dir: str | Path) -> None:
    """Dump every stage artifact as deterministic, timestamp-free files."""
    root = Path(trace_dir)
    root.mkdir(parents=True, exist_ok=True)

    def dump(name: str, payload) -> None:
        (root / name).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    dump("query.json", {"id": run.query.id, "text": run.query.text})
    if run.graph:
        dump(
            "plan.json",
            {
                "nodes": [
                    {
                        "id": n.id,
                        "description": n.description,
                        "needs_tools": n.needs_tools,
                        "depends_on": list(n.depends_on),
                    }
                    for n in run.graph.nodes
                ]
            },
        )
    dump(
        "selection.json",
        [
            {"subtask": sid, "tool_id": ref.tool_id, "score": round(ref.score, 6)}
            for sid, ref in run.selection
        ],
    )
    dump(
        "params.json",
        [
            {
                "tool_id": p.tool_id,
                "values": {
                    name: {"raw": v.raw_text, "parsed": v.parsed, "unit": v.unit}
                    for name, v in sorted(p.values.items())
                },
                "missing": sorted(p.missing),
            }
            for p in run.params
        ],
    )
    dump("knowledge.json", run.knowledge_ids)
    dump("warnings.json", {"unrequested_tools": run.unrequested_tools})
    dump(
        "react_trace.json",
        [
            {"kind": s.kind, "text": s.text, "tool": s.action_tool, "args": s.action_args}
            for s in run.react_steps
        ],
    )
    if run.outcome:
        program, result = run.outcome.final
        (root / "program_final.py").write_text(program.source + "\n", encoding="utf-8")
        dump(
            "program_final.json",
            {
                "program_id": program.program_id,
                "language_tag": program.language_tag,
                "origin": program.origin,
                "revision_index": program.revision_index,
                "tool_calls": [
                    {"tool_id": c.tool_id, "line_span": list(c.line_span)}
                    for c in program.tool_calls
                ],
            },
        )
        dump(
            "execution_final.json",
            {
                "status": result.status,
                "stdout": result.stdout,
                "stderr": result.stderr,
                "artifacts": list(result.artifacts),
            },
        )
        dump(
            "reflection.json",
            {
                "status": run.outcome.status,
                "iterations": run.outcome.state.iteration,
                "attributed": run.outcome.state.attributed,
                "cache_hit": run.cache_hit,
            },
        )
    if run.final:
        dump(
            "final.json",
            {
                "answer_text": run.final.answer_text,
                "programs_used": list(run.final.programs_used),
                "execution_summary": run.final.execution_summary,
                "artifacts": list(run.final.artifacts),
            },
        )
