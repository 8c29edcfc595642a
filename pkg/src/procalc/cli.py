"""Operator surface.

Verbs: ask, eval {metrics,needle,gold,ablation}, index add,
cache {list,clear,stats}, tools {list,show}.

Exit codes: 0 success; 2 task-stage failure (exhausted reflection, empty
plan, no code block) or usage errors; 3 setup failures (replay miss, backend
unreachable, runner setup, bad config, malformed inputs); eval suites exit 1
when an acceptance threshold is violated.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import demo, pipeline
from .composer import ComposerError
from .config import AgentConfig, ConfigError, load_config, set_key
from .errors import ProcalcError
from .evalsuite import ablation as ablation_mod
from .evalsuite import gold as gold_mod
from .evalsuite import needle as needle_mod
from .evalsuite.report import render_report, run_metrics_suite
from .gateway import GatewayError, ReplayMissError
from .planner import PlannerError
from .progcache import ProgramCache
from .rag import HashedBagOfWordsBackend, VectorIndex, chunk_document
from .toolhub import load_protocols


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--tools-dir", help="directory of tool protocol YAML files")

    parser = argparse.ArgumentParser(prog="procalc", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    ask = sub.add_parser("ask", help="answer one query end to end", parents=[common])
    ask.add_argument("query", nargs="?", help="query text (default: bundled demo query)")
    ask.add_argument("--replay", help="shortcut: model.mode=replay with this store")
    ask.add_argument("--executor", help="shortcut: sandbox.runner_path value")
    ask.add_argument("--cache-path", help="program cache file")
    ask.add_argument("--index-path", help="prefix of a persisted index (<p>.jsonl/<p>.npy)")
    ask.add_argument("--trace", help="dump per-stage artifacts into this directory")
    ask.add_argument("--max-iterations", type=int, help="reflection budget")
    ask.add_argument("--reflect-on-timeout", action="store_true")
    ask.add_argument("--timeout-ms", type=int, help="sandbox wall timeout")
    ask.add_argument("--embed-url", help="live embedding endpoint for retrieval")
    ask.add_argument("--rerank-url", help="live rerank endpoint for retrieval")
    ask.add_argument("--no-react", action="store_true")
    ask.add_argument("--no-external-knowledge", action="store_true")
    ask.add_argument("--no-reflection", action="store_true")
    ask.add_argument("--no-cache", action="store_true")

    ev = sub.add_parser("eval", help="run an evaluation suite", parents=[common])
    ev.add_argument("suite", choices=["metrics", "needle", "gold", "ablation"])
    ev.add_argument("--pred", help="predictions JSONL (metrics suite)")
    ev.add_argument("--gold", help="gold JSONL (metrics suite)")
    ev.add_argument("--k", type=int, default=5)
    ev.add_argument("--out", help="write the machine-readable report here")

    index = sub.add_parser("index", help="manage the knowledge index", parents=[common])
    index_sub = index.add_subparsers(dest="index_verb", required=True)
    index_add = index_sub.add_parser("add", help="chunk and index a document", parents=[common])
    index_add.add_argument("--doc", required=True, help="text file to ingest")
    index_add.add_argument("--title", required=True, help="section title metadata")
    index_add.add_argument("--index-path", required=True)
    index_add.add_argument("--window", type=int, default=800)
    index_add.add_argument("--stride", type=int, default=600)
    index_add.add_argument("--embed-url", help="live embedding endpoint")

    cache = sub.add_parser("cache", help="inspect or clear the program cache", parents=[common])
    cache.add_argument("cache_verb", choices=["list", "clear", "stats"])
    cache.add_argument("--cache-path", required=True)

    tools = sub.add_parser("tools", help="inspect registered tool protocols", parents=[common])
    tools.add_argument("tools_verb", choices=["list", "show"])
    tools.add_argument("tool_id", nargs="?")
    return parser


def _build_config(args) -> AgentConfig:
    config = load_config(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        set_key(config, key.strip(), value.strip())
    if getattr(args, "replay", None):
        config.model.mode = "replay"
        config.model.replay_path = args.replay
    if getattr(args, "executor", None):
        config.sandbox.runner_path = args.executor
    if getattr(args, "cache_path", None):
        config.cache.path = args.cache_path
    if getattr(args, "max_iterations", None):
        config.reflection.max_iterations = args.max_iterations
    if getattr(args, "reflect_on_timeout", False):
        config.reflection.reflect_on_timeout = True
    if getattr(args, "timeout_ms", None):
        config.sandbox.timeout_ms = args.timeout_ms
    if getattr(args, "embed_url", None):
        config.rag.embed_url = args.embed_url
    if getattr(args, "rerank_url", None):
        config.rag.rerank_url = args.rerank_url
    for flag in ("no_react", "no_external_knowledge", "no_reflection", "no_cache"):
        if getattr(args, flag, False):
            setattr(config.ablation, flag, True)
    return config.validate()


def _embedding_backend(embed_url: str | None):
    from procalc.rag import HttpEmbeddingBackend

    return HttpEmbeddingBackend(embed_url) if embed_url else HashedBagOfWordsBackend()


def _load_index(path_prefix: str, embed_url: str | None = None) -> VectorIndex:
    backend = _embedding_backend(embed_url)
    meta = Path(path_prefix + ".jsonl")
    vectors = Path(path_prefix + ".npy")
    if meta.exists() and vectors.exists():
        return VectorIndex.load(backend, meta, vectors)
    return VectorIndex(backend)


def cmd_ask(args) -> int:
    config = _build_config(args)
    registry = load_protocols(args.tools_dir)
    gateway = pipeline.build_gateway(config)
    exec_fn = pipeline.build_executor(config)
    cache = ProgramCache(config.cache.path) if not config.ablation.no_cache else None
    index = _load_index(args.index_path, config.rag.embed_url) if args.index_path else None
    query_text = args.query or demo.CSTR_QUERY_TEXT

    run = pipeline.run_query(
        query_text, config, registry, gateway, exec_fn, cache=cache, index=index
    )
    if args.trace:
        pipeline.write_trace(run, args.trace)
    if run.final:
        print(run.final.answer_text)
        print(f"[{run.final.execution_summary}]")
        for artifact in run.final.artifacts:
            print(f"artifact: {artifact}")
    else:
        print(f"failed: {run.failure}", file=sys.stderr)
    return run.exit_code


def _write_report(args, payload: dict) -> None:
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def cmd_eval(args) -> int:
    if args.suite == "metrics":
        if not args.pred or not args.gold:
            print("eval metrics requires --pred and --gold", file=sys.stderr)
            return 2
        report = run_metrics_suite(args.pred, args.gold, k=args.k)
        print(render_report(report))
        _write_report(args, report)
        return 0

    if args.suite == "needle":
        chunks, qa_pairs = needle_mod.build_needle_corpus()
        index = VectorIndex(HashedBagOfWordsBackend())
        index.index_add(chunks)

        def retrieve_ids(query_text: str, k: int) -> list[str]:
            return [hit.chunk.chunk_id for hit in index.retrieve(query_text, k)]

        report = needle_mod.needle_run(qa_pairs, retrieve_ids, k=args.k)
        payload = {
            "k": args.k,
            "mean_precision": report.mean_precision,
            "mean_recall": report.mean_recall,
            "mean_f1": report.mean_f1,
            "queries": len(report.per_query),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        _write_report(args, payload)
        # acceptance thresholds for the bundled corpus at k=5
        if args.k == 5 and (report.mean_recall < 1.0 or abs(report.mean_precision - 0.2) > 1e-9):
            print("needle thresholds violated", file=sys.stderr)
            return 1
        return 0

    if args.suite == "gold":
        rows = gold_mod.run_gold_suite()
        payload = {
            "rows": [
                {
                    "problem_id": r.problem_id,
                    "verdict": r.verdict,
                    "expected": r.expected_verdict,
                    "ok": r.ok,
                    "matched": r.matched,
                    "note": r.note,
                }
                for r in rows
            ]
        }
        for r in rows:
            mark = "ok " if r.ok else "BAD"
            note = f"  [{r.note}]" if r.note else ""
            print(f"{mark} {r.problem_id:28} verdict={r.verdict} expected={r.expected_verdict}{note}")
        _write_report(args, payload)
        return 0 if all(r.ok for r in rows) else 1

    # ablation
    with tempfile.TemporaryDirectory(prefix="procalc_ablation_") as work:
        rows = ablation_mod.run_ablation(work)
    print(ablation_mod.render_ablation(rows))
    problems = ablation_mod.check_ablation(rows)
    for problem in problems:
        print(f"violation: {problem}", file=sys.stderr)
    payload = {
        "rows": [row.__dict__ for row in rows],
        "violations": problems,
    }
    _write_report(args, payload)
    return 1 if problems else 0


def cmd_index(args) -> int:
    text = Path(args.doc).read_text(encoding="utf-8")
    doc_id = Path(args.doc).stem
    chunks = chunk_document(doc_id, args.title, text, args.window, args.stride)
    index = _load_index(args.index_path, args.embed_url)
    added = index.index_add(chunks)
    index.save(args.index_path + ".jsonl", args.index_path + ".npy")
    print(f"indexed {added} chunks from {args.doc}")
    return 0


def cmd_cache(args) -> int:
    cache = ProgramCache(args.cache_path)
    if args.cache_verb == "list":
        for entry in cache.entries():
            preview = entry.query_text[:60].replace("\n", " ")
            print(f"{entry.signature[:12]}  hits={entry.hit_count}  {preview}")
    elif args.cache_verb == "clear":
        print(f"cleared {cache.clear()} entries")
    else:
        print(json.dumps(cache.stats(), indent=2, sort_keys=True))
    return 0


def cmd_tools(args) -> int:
    registry = load_protocols(args.tools_dir)
    if args.tools_verb == "list":
        for tool_id in registry.tool_ids():
            print(f"{tool_id}: {registry.get(tool_id).overview}")
        return 0
    if not args.tool_id:
        print("tools show requires a tool_id", file=sys.stderr)
        return 2
    print(registry.protocol_digest([args.tool_id]))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "ask":
            return cmd_ask(args)
        if args.verb == "eval":
            return cmd_eval(args)
        if args.verb == "index":
            return cmd_index(args)
        if args.verb == "cache":
            return cmd_cache(args)
        return cmd_tools(args)
    except ReplayMissError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return 3
    except (PlannerError, ComposerError) as exc:
        print(f"task failed: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GatewayError, OSError) as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return 3
    except ProcalcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
