"""Run a program in an isolated runner process and structure the feedback.

Wire protocol: the program source is written to the runner's stdin and the
stream is closed; the runner prints a ready line on startup and, when done,
a single reply line prefixed by ``##PROCALC_RESULT##`` carrying the JSON
body. A fixture-backed executor serves scripted results for offline tests.
"""
from __future__ import annotations

import json
import select
import shlex
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .composer import Program
from .errors import ProcalcError

READY_LINE = "PROCALC_RUNNER_READY"
RESULT_SENTINEL = "##PROCALC_RESULT##"
HANDSHAKE_TIMEOUT_S = 5.0
DEFAULT_TIMEOUT_MS = 30_000

STATUSES = ("success", "runtime_error", "timeout", "setup_error")


class ExecutorError(ProcalcError):
    pass


class ScriptExhaustedError(ExecutorError):
    pass


@dataclass(frozen=True)
class Frame:
    file: str
    line: int
    symbol: str
    code_context: Optional[str] = None

    def __post_init__(self):
        if self.line < 1:
            raise ValueError("frame line must be >= 1")


@dataclass(frozen=True)
class ExceptionInfo:
    type_name: str
    message: str
    frames: tuple[Frame, ...] = ()


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    stdout: str = ""
    stderr: str = ""
    exception: Optional[ExceptionInfo] = None
    artifacts: tuple[str, ...] = ()
    duration_ms: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "runtime_error") != (self.exception is not None):
            raise ValueError("exception present iff status is runtime_error")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")


@dataclass(frozen=True)
class SandboxLimits:
    wall_timeout_ms: int = DEFAULT_TIMEOUT_MS
    artifact_dir: str = "."
    network_allowed: bool = False

    def __post_init__(self):
        if self.wall_timeout_ms < 100:
            raise ValueError("wall_timeout_ms must be >= 100")


def result_from_wire(payload: dict) -> ExecutionResult:
    exc = None
    if payload.get("exception"):
        raw = payload["exception"]
        exc = ExceptionInfo(
            type_name=raw["type_name"],
            message=raw["message"],
            frames=tuple(
                Frame(
                    file=f["file"],
                    line=f["line"],
                    symbol=f["symbol"],
                    code_context=f.get("code_context"),
                )
                for f in raw.get("frames", [])
            ),
        )
    return ExecutionResult(
        status=payload["status"],
        stdout=payload.get("stdout", ""),
        stderr=payload.get("stderr", ""),
        exception=exc,
        artifacts=tuple(payload.get("artifacts", [])),
        duration_ms=int(payload.get("duration_ms", 0)),
    )


def result_to_wire(result: ExecutionResult) -> dict:
    exc = None
    if result.exception:
        exc = {
            "type_name": result.exception.type_name,
            "message": result.exception.message,
            "frames": [
                {
                    "file": f.file,
                    "line": f.line,
                    "symbol": f.symbol,
                    "code_context": f.code_context,
                }
                for f in result.exception.frames
            ],
        }
    return {
        "status": result.status,
        "stdout": result.stdout,
        "stderr": result.stderr,
        "exception": exc,
        "artifacts": list(result.artifacts),
        "duration_ms": result.duration_ms,
    }


def _setup_error(detail: str, duration_ms: int = 0) -> ExecutionResult:
    return ExecutionResult(status="setup_error", stderr=detail, duration_ms=duration_ms)


def _validated_artifacts(reported: Sequence[str], artifact_dir: Path) -> tuple[str, ...]:
    """Keep only reported artifacts that exist inside the artifact dir."""
    root = artifact_dir.resolve()
    kept = []
    for item in reported:
        path = Path(item)
        if not path.is_absolute():
            path = root / path
        resolved = path.resolve()
        if resolved.exists() and resolved.is_relative_to(root):
            kept.append(str(resolved))
    return tuple(kept)


def _read_ready_line(proc: subprocess.Popen, timeout_s: float) -> bool:
    deadline = time.monotonic() + timeout_s
    buf = b""
    fd = proc.stdout.fileno()
    while time.monotonic() < deadline:
        remaining = max(0.0, deadline - time.monotonic())
        readable, _, _ = select.select([fd], [], [], min(0.2, remaining))
        if not readable:
            if proc.poll() is not None:
                return False
            continue
        chunk = proc.stdout.read1(4096) if hasattr(proc.stdout, "read1") else proc.stdout.read(4096)
        if not chunk:
            return False
        buf += chunk
        if b"\n" in buf:
            first, _, _rest = buf.partition(b"\n")
            return first.decode("utf-8", "replace").strip() == READY_LINE
    return False


class SandboxExecutor:
    """Spawns one runner process per call and parses its structured reply."""

    def __init__(self, runner_command: str):
        if not runner_command:
            raise ValueError("runner_command must be non-empty")
        self.runner_command = runner_command

    def execute(self, program: Program, limits: SandboxLimits) -> ExecutionResult:
        artifact_dir = Path(limits.artifact_dir)
        artifact_dir.mkdir(parents=True, exist_ok=True)
        argv = shlex.split(self.runner_command) + ["--artifact-dir", str(artifact_dir)]
        if limits.network_allowed:
            argv.append("--allow-network")
        started = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            return _setup_error(f"runner missing or not executable: {exc}")

        try:
            if not _read_ready_line(proc, HANDSHAKE_TIMEOUT_S):
                proc.kill()
                proc.wait()
                return _setup_error("runner handshake failed: no ready line")
            try:
                out, err = proc.communicate(
                    input=program.source.encode("utf-8"),
                    timeout=limits.wall_timeout_ms / 1000.0,
                )
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
                elapsed_ms = int((time.monotonic() - started) * 1000)
                return ExecutionResult(
                    status="timeout",
                    stderr=f"wall timeout after {limits.wall_timeout_ms} ms",
                    duration_ms=max(elapsed_ms, limits.wall_timeout_ms),
                )
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

        elapsed_ms = int((time.monotonic() - started) * 1000)
        reply = _last_sentinel_line(out.decode("utf-8", "replace"))
        if reply is None:
            detail = err.decode("utf-8", "replace")[-2000:]
            return _setup_error(f"runner produced no reply line: {detail}", elapsed_ms)
        try:
            payload = json.loads(reply)
            result = result_from_wire(payload)
        except (ValueError, KeyError, TypeError) as exc:
            return _setup_error(f"unparseable runner reply: {exc}", elapsed_ms)
        return ExecutionResult(
            status=result.status,
            stdout=result.stdout,
            stderr=result.stderr,
            exception=result.exception,
            artifacts=_validated_artifacts(result.artifacts, artifact_dir),
            duration_ms=result.duration_ms,
        )


def _last_sentinel_line(text: str) -> Optional[str]:
    reply = None
    for line in text.splitlines():
        if line.startswith(RESULT_SENTINEL):
            reply = line[len(RESULT_SENTINEL):].strip()
    return reply


class FixtureExecutor:
    """Serves a scripted sequence of results; enables offline pipeline runs."""

    def __init__(self, script: Sequence[ExecutionResult]):
        self.script = list(script)
        self.calls = 0

    def execute(self, program: Program, limits: SandboxLimits) -> ExecutionResult:
        if self.calls >= len(self.script):
            raise ScriptExhaustedError(
                f"fixture script exhausted after {len(self.script)} calls"
            )
        result = self.script[self.calls]
        self.calls += 1
        return result

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureExecutor":
        with open(path, encoding="utf-8") as fh:
            payloads = json.load(fh)
        return cls([result_from_wire(p) for p in payloads])


def fixture_execute(program: Program, executor: FixtureExecutor) -> ExecutionResult:
    return executor.execute(program, SandboxLimits(artifact_dir="."))
