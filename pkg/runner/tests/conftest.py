from __future__ import annotations

import json
import subprocess
import sys

import pytest

RUNNER_CMD = f"{sys.executable} -m procalc_runner"
READY = "PROCALC_RUNNER_READY"
SENTINEL = "##PROCALC_RESULT##"


@pytest.fixture()
def spawn(tmp_path):
    """Speak the wire protocol directly: send source, return (reply, proc, stdout)."""

    def run(source: str, timeout_s: float = 120.0, extra_args: tuple[str, ...] = ()):
        artifact_dir = tmp_path / "artifacts"
        artifact_dir.mkdir(exist_ok=True)
        proc = subprocess.Popen(
            [sys.executable, "-m", "procalc_runner", "--artifact-dir", str(artifact_dir), *extra_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        out, err = proc.communicate(source, timeout=timeout_s)
        lines = out.splitlines()
        assert lines and lines[0] == READY, f"no ready line; stderr: {err}"
        replies = [line for line in lines if line.startswith(SENTINEL)]
        assert replies, f"no reply line; stdout: {out!r} stderr: {err!r}"
        reply = json.loads(replies[-1][len(SENTINEL):])
        return reply, proc, out

    return run
