"""Sandbox-side counterpart of the executor wire protocol.

Prints a ready line, reads one program from stdin until stream close,
executes it in a fresh namespace with stdout/stderr captured, collects
exception frames (deepest first, line numbers referring to the delivered
source) and files created under the artifact directory, then emits exactly
one sentinel-prefixed JSON reply line and exits 0.

Plot output is forced to a non-interactive backend; ``show()`` saves every
open figure into the artifact directory instead of opening a window.
"""
from __future__ import annotations

import argparse
import io
import json
import linecache
import os
import sys
import time
import traceback
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

READY_LINE = "PROCALC_RUNNER_READY"
RESULT_SENTINEL = "##PROCALC_RESULT##"
PROGRAM_FILENAME = "<program>"


def _snapshot(root: Path) -> dict[str, tuple[int, int]]:
    state = {}
    for path in root.rglob("*"):
        if path.is_file():
            stat = path.stat()
            state[str(path)] = (stat.st_size, stat.st_mtime_ns)
    return state


def _new_artifacts(root: Path, before: dict[str, tuple[int, int]]) -> list[str]:
    artifacts = []
    for path, sig in sorted(_snapshot(root).items()):
        if before.get(path) != sig:
            artifacts.append(path)
    return artifacts


def _block_network() -> None:
    import socket

    def _denied(*args, **kwargs):
        raise PermissionError("network access is disabled in this sandbox")

    socket.socket = _denied  # best effort; container-grade isolation is out of scope
    socket.create_connection = _denied


def _patch_matplotlib(artifact_dir: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg", force=True)
        import matplotlib.pyplot as plt
    except Exception:
        return

    def _show(*args, **kwargs):
        for number in plt.get_fignums():
            figure = plt.figure(number)
            figure.savefig(artifact_dir / f"figure_{number}.png")
        plt.close("all")

    plt.show = _show


def _frames_from_traceback(tb, source_lines: list[str]) -> list[dict]:
    """Deepest-first frames with code context resolved against the source."""
    walked = []
    for frame, line in traceback.walk_tb(tb):
        filename = frame.f_code.co_filename
        if filename == __file__:
            continue  # runner internals around the exec call
        if filename == PROGRAM_FILENAME:
            context = source_lines[line - 1] if 0 < line <= len(source_lines) else None
        else:
            context = linecache.getline(filename, line).rstrip("\n") or None
        walked.append(
            {
                "file": filename,
                "line": line,
                "symbol": frame.f_code.co_name,
                "code_context": context,
            }
        )
    walked.reverse()
    return walked


def _exception_payload(exc: BaseException, source_lines: list[str]) -> dict:
    type_name = type(exc).__qualname__
    module = type(exc).__module__
    if module not in ("builtins", "__main__"):
        type_name = f"{module}.{type_name}"
    frames = _frames_from_traceback(exc.__traceback__, source_lines)
    if isinstance(exc, SyntaxError) and exc.filename == PROGRAM_FILENAME and exc.lineno:
        line = exc.lineno
        context = source_lines[line - 1] if 0 < line <= len(source_lines) else None
        frames.insert(0, {
            "file": PROGRAM_FILENAME,
            "line": line,
            "symbol": "<module>",
            "code_context": context,
        })
    return {"type_name": type_name, "message": str(exc), "frames": frames}


def run_once(source: str, artifact_dir: Path) -> dict:
    """Execute the program and return the wire reply payload."""
    source_lines = source.splitlines()
    before = _snapshot(artifact_dir)
    out_buffer, err_buffer = io.StringIO(), io.StringIO()
    status, exception = "success", None
    started = time.monotonic()
    try:
        code = compile(source, PROGRAM_FILENAME, "exec")
        namespace = {"__name__": "__main__", "__builtins__": __builtins__}
        with redirect_stdout(out_buffer), redirect_stderr(err_buffer):
            exec(code, namespace)
    except SystemExit as exc:
        if exc.code not in (None, 0):
            status = "runtime_error"
            exception = _exception_payload(exc, source_lines)
    except BaseException as exc:
        status = "runtime_error"
        exception = _exception_payload(exc, source_lines)
    duration_ms = int((time.monotonic() - started) * 1000)
    return {
        "status": status,
        "stdout": out_buffer.getvalue(),
        "stderr": err_buffer.getvalue(),
        "exception": exception,
        "artifacts": _new_artifacts(artifact_dir, before),
        "duration_ms": duration_ms,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="procalc-runner", description=__doc__)
    parser.add_argument("--artifact-dir", default=".")
    parser.add_argument("--allow-network", action="store_true")
    args = parser.parse_args(argv)

    artifact_dir = Path(args.artifact_dir).resolve()
    artifact_dir.mkdir(parents=True, exist_ok=True)
    os.environ.setdefault("MPLBACKEND", "Agg")

    real_stdout = sys.stdout
    print(READY_LINE, file=real_stdout, flush=True)
    source = sys.stdin.read()

    if not args.allow_network:
        _block_network()
    _patch_matplotlib(artifact_dir)
    os.chdir(artifact_dir)

    reply = run_once(source, artifact_dir)
    # the reply goes last, on the real stdout, behind the reserved sentinel
    print(RESULT_SENTINEL + json.dumps(reply), file=real_stdout, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
