"""Ablation orchestration: re-run the bundled demo scenario with each
component toggled off and report the observable differences.

Variants: full pipeline, no_react, no_external_knowledge, no_reflection,
no_cache, and raw_backend (an untuned-model replay store whose plan output
is unparseable). The knowledge index is wired only into the full /
no_external_knowledge pair, which keeps the bundled replay store small.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .. import demo
from ..composer import ComposerError
from ..config import AgentConfig
from ..executor import FixtureExecutor, SandboxLimits
from ..pipeline import build_gateway, run_query
from ..planner import PlannerError
from ..progcache import ProgramCache
from ..rag import Chunk, HashedBagOfWordsBackend, VectorIndex
from ..toolhub import ToolRegistry, load_protocols

VARIANTS = ("full", "no_react", "no_external_knowledge", "no_reflection", "no_cache", "raw_backend")


def scenario_chunks() -> list[Chunk]:
    """Fixed knowledge snippets for the demo index (shared with the fixture
    builder so replay keys stay stable)."""
    texts = [
        (
            "First-order mixing: a constant-volume stirred tank with inflow "
            "concentration c_i responds as c(t) = c_i*(1 - exp(-(q/V)*t)) when "
            "starting from clean solvent."
        ),
        (
            "The time constant of a stirred-tank mixing process is V/q; after "
            "five time constants the exit concentration reaches about 99.3 "
            "percent of the inlet value."
        ),
        (
            "Numerical integration of stiff-free first-order balances works "
            "well with explicit Runge-Kutta schemes and a few hundred "
            "evaluation points."
        ),
    ]
    return [
        Chunk(
            chunk_id=f"mixing_notes:{i}",
            doc_id="mixing_notes",
            section_title="Tank mixing dynamics",
            position=i,
            text=text,
            char_offset=0,
        )
        for i, text in enumerate(texts)
    ]


def scenario_index() -> VectorIndex:
    index = VectorIndex(HashedBagOfWordsBackend())
    index.index_add(scenario_chunks())
    return index


@dataclass(frozen=True)
class AblationRow:
    variant: str
    first_exit: int
    second_exit: int
    first_calls: int
    second_calls: int
    cache_hit_second: bool
    react_steps: int
    knowledge_chunks: int


def _variant_config(variant: str, cache_path: Path) -> AgentConfig:
    config = AgentConfig()
    config.model.mode = "replay"
    store = demo.raw_backend_store_path() if variant == "raw_backend" else demo.fixtures_store_path()
    config.model.replay_path = str(store)
    config.cache.path = str(cache_path)
    flags = config.ablation
    if variant == "no_react":
        flags.no_react = True
    elif variant == "no_external_knowledge":
        flags.no_external_knowledge = True
    elif variant == "no_reflection":
        flags.no_reflection = True
    elif variant == "no_cache":
        flags.no_cache = True
    return config.validate()


def run_variant(variant: str, work_dir: str | Path, registry: Optional[ToolRegistry] = None) -> AblationRow:
    """Two consecutive asks of the demo query under one variant.

    The first ask executes against a [fail, success] script (reflection
    repairs it); the second against [success] (a cache hit skips straight to
    execution). Degradations show up as exit codes, call counts, missing
    trace steps, or missing knowledge.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    registry = registry or load_protocols()
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    config = _variant_config(variant, work_dir / f"{variant}_cache.jsonl")
    index = scenario_index() if variant in ("full", "no_external_knowledge") else None
    cache = ProgramCache(config.cache.path)
    limits = SandboxLimits(artifact_dir=str(work_dir))

    def ask(script_path: Path):
        gateway = build_gateway(config)
        fixture = FixtureExecutor.from_file(script_path)
        run = run_query(
            demo.CSTR_QUERY_TEXT,
            config,
            registry,
            gateway,
            lambda program: fixture.execute(program, limits),
            cache=cache,
            index=index,
        )
        return run, gateway.call_count

    try:
        first, first_calls = ask(demo.exec_fail_success_path())
    except (PlannerError, ComposerError):
        # stage failure before execution (raw_backend's unparseable plan)
        return AblationRow(
            variant=variant,
            first_exit=2,
            second_exit=2,
            first_calls=1,
            second_calls=0,
            cache_hit_second=False,
            react_steps=0,
            knowledge_chunks=0,
        )
    second, second_calls = ask(demo.exec_success_path())
    return AblationRow(
        variant=variant,
        first_exit=first.exit_code,
        second_exit=second.exit_code,
        first_calls=first_calls,
        second_calls=second_calls,
        cache_hit_second=second.cache_hit,
        react_steps=len(first.react_steps),
        knowledge_chunks=len(first.knowledge_ids),
    )


def run_ablation(work_dir: str | Path, variants: Sequence[str] = VARIANTS) -> list[AblationRow]:
    registry = load_protocols()
    return [run_variant(v, work_dir, registry) for v in variants]


def check_ablation(rows: Sequence[AblationRow]) -> list[str]:
    """Directional checks: every ablated variant must degrade vs full."""
    by_variant = {r.variant: r for r in rows}
    problems = []
    full = by_variant.get("full")
    if full is None:
        return ["missing full baseline row"]
    if full.first_exit != 0 or full.second_exit != 0:
        problems.append("full variant did not complete both runs")
    if not full.cache_hit_second:
        problems.append("full variant second run missed the cache")
    checks = {
        "no_react": lambda r: r.react_steps < full.react_steps,
        "no_external_knowledge": lambda r: r.knowledge_chunks < full.knowledge_chunks,
        "no_reflection": lambda r: r.first_exit == 2,
        "no_cache": lambda r: r.second_calls > full.second_calls,
        "raw_backend": lambda r: r.first_exit != 0,
    }
    for variant, check in checks.items():
        row = by_variant.get(variant)
        if row is None:
            continue
        if not check(row):
            problems.append(f"{variant}: expected degradation not observed")
    return problems


def render_ablation(rows: Sequence[AblationRow]) -> str:
    header = (
        f"{'variant':24} {'exit1':>5} {'exit2':>5} {'calls1':>6} {'calls2':>6} "
        f"{'cache2':>6} {'react':>5} {'knowl':>5}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.variant:24} {r.first_exit:>5} {r.second_exit:>5} {r.first_calls:>6} "
            f"{r.second_calls:>6} {str(r.cache_hit_second):>6} {r.react_steps:>5} "
            f"{r.knowledge_chunks:>5}"
        )
    return "\n".join(lines)
