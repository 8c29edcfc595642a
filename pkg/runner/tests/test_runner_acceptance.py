"""Acceptance for the sandbox runner, driven through the executor so the
whole wire path (handshake, source delivery, reply parse, timeout kill) is
exercised end to end.
"""
from __future__ import annotations

import math
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from procalc.composer import Program
from procalc.demo import CSTR_PROGRAM_SOURCE
from procalc.executor import SandboxExecutor, SandboxLimits

RUNNER_CMD = f"{sys.executable} -m procalc_runner"


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def program_of(source: str) -> Program:
    return Program(program_id="p", language_tag="python", source=source)


def limits_in(tmp_path, timeout_ms=120_000) -> SandboxLimits:
    return SandboxLimits(wall_timeout_ms=timeout_ms, artifact_dir=str(tmp_path / "artifacts"))


NUMERIC_CHECK_SOURCE = """\
from scipy.integrate import solve_ivp

V = 2  # m^3
q = 0.4  # m^3/min
c_i = 50  # kg/m^3

def cstr_ode(t, c, V, q, c_i):
    return (q/V) * (c_i - c)

c0 = [0]
solution = solve_ivp(
    cstr_ode, (0, 50), c0, args=(V, q, c_i),
    t_eval=[5, 25, 50], rtol=1e-8, atol=1e-10,
)
for value in solution.y[0]:
    print(repr(float(value)))
"""


def test_cstr_program_success_with_plot(tmp_path):
    with criterion("runner-cstr-program"):
        executor = SandboxExecutor(RUNNER_CMD)
        result = executor.execute(program_of(CSTR_PROGRAM_SOURCE), limits_in(tmp_path))
        assert result.status == "success"
        assert len(result.artifacts) == 1
        artifact = Path(result.artifacts[0])
        assert artifact.suffix == ".png"
        assert artifact.stat().st_size > 0


def test_cstr_numeric_solution_matches_analytic(tmp_path):
    with criterion("runner-cstr-numeric"):
        executor = SandboxExecutor(RUNNER_CMD)
        result = executor.execute(program_of(NUMERIC_CHECK_SOURCE), limits_in(tmp_path))
        assert result.status == "success"
        values = [float(line) for line in result.stdout.split()]
        assert len(values) == 3
        V, q, c_i = 2.0, 0.4, 50.0
        for t, value in zip((5.0, 25.0, 50.0), values):
            analytic = c_i * (1 - math.exp(-(q / V) * t))
            assert abs(value - analytic) <= 1e-3
        assert abs(values[2] - 49.998) <= 1e-3  # c(50)


def test_zero_division_frame_points_into_source(tmp_path):
    with criterion("runner-zero-division"):
        source = "a = 4\nb = 0\nratio = a / b\n"
        executor = SandboxExecutor(RUNNER_CMD)
        result = executor.execute(program_of(source), limits_in(tmp_path))
        assert result.status == "runtime_error"
        assert "ZeroDivisionError" in result.exception.type_name
        frame = result.exception.frames[0]
        assert frame.file == "<program>"
        assert frame.line == 3
        assert frame.code_context == "ratio = a / b"


def test_timeout_500ms_enforced(tmp_path):
    with criterion("runner-timeout"):
        executor = SandboxExecutor(RUNNER_CMD)
        start = time.monotonic()
        result = executor.execute(
            program_of("while True:\n    pass\n"), limits_in(tmp_path, timeout_ms=500)
        )
        elapsed = time.monotonic() - start
        assert result.status == "timeout"
        assert result.duration_ms >= 500
        assert elapsed < 30
        time.sleep(0.1)
        survivors = subprocess.run(
            ["ps", "-ef"], capture_output=True, text=True, check=False
        ).stdout
        assert "procalc_runner" not in survivors
