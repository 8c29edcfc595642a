from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procalc.composer import Program
from procalc.executor import ExceptionInfo, ExecutionResult, Frame
from procalc.gateway import load_template
from procalc.planner import Query
from procalc.reflector import (
    AGENT_CODE,
    ReflectionOutcome,
    ReflectionState,
    attribute,
    revise,
    run_loop,
)
from procalc.toolhub import load_protocols

QUERY = Query(id="q", text="integrate the balance and plot it")
_REGISTRY = load_protocols()

PROGRAM_RESPONSE = "```python\nimport numpy as np\nfrom scipy.integrate import solve_ivp\nplt.plot(x)\n```"


def failing_result(marker_context="solution = solve_ivp(f, span, y0)") -> ExecutionResult:
    return ExecutionResult(
        status="runtime_error",
        exception=ExceptionInfo(
            type_name="ValueError",
            message="bad shape",
            frames=(
                Frame(file="<program>", line=2, symbol="f", code_context="y = y / 0"),
                Frame(file="<program>", line=4, symbol="<module>", code_context=marker_context),
            ),
        ),
    )


def success_result() -> ExecutionResult:
    return ExecutionResult(status="success", stdout="ok")


def initial_program() -> Program:
    return Program(
        program_id="p0",
        language_tag="python",
        source="import numpy as np\nfrom scipy.integrate import solve_ivp\nx = solve_ivp(f, s, y)",
    )


def test_attribute_deterministic_marker_in_context(registry):
    assert attribute(failing_result(), registry) == "ode_ivp_solver"


def test_attribute_deepest_frame_wins(registry):
    result = ExecutionResult(
        status="runtime_error",
        exception=ExceptionInfo(
            type_name="E",
            message="m",
            frames=(
                Frame(file="/site-packages/matplotlib/pyplot.py", line=9, symbol="plot"),
                Frame(file="<program>", line=4, symbol="<module>", code_context="solve_ivp(f)"),
            ),
        ),
    )
    assert attribute(result, registry) == "plotter"


def test_attribute_no_match_is_agent_code(registry):
    result = ExecutionResult(
        status="runtime_error",
        exception=ExceptionInfo(
            type_name="KeyError",
            message="x",
            frames=(Frame(file="<program>", line=1, symbol="<module>", code_context="d['x']"),),
        ),
    )
    assert attribute(result, registry) == AGENT_CODE


def test_attribute_requires_runtime_error(registry):
    with pytest.raises(ValueError):
        attribute(success_result(), registry)


def test_attribute_model_mode_replay(recording_gateway, registry):
    gateway = recording_gateway(lambda r: "plotter")
    tool = attribute(
        failing_result(), registry, gateway=gateway, mode="model",
        attribution_template=load_template("attribution_instruction"),
    )
    assert tool == "plotter"


def test_attribute_model_mode_unparseable_falls_back(recording_gateway, registry):
    gateway = recording_gateway(lambda r: "definitely_not_a_tool")
    tool = attribute(
        failing_result(), registry, gateway=gateway, mode="model",
        attribution_template=load_template("attribution_instruction"),
    )
    assert tool == "ode_ivp_solver"  # deterministic fallback


def test_revise_counter_contract(recording_gateway, registry):
    gateway = recording_gateway(lambda r: PROGRAM_RESPONSE)
    state = ReflectionState(max_iterations=3)
    revised = revise(
        QUERY, initial_program(), failing_result(), "ode_ivp_solver",
        registry.get("ode_ivp_solver").docs, state, gateway, registry,
        load_template("program_instruction"),
    )
    assert revised.origin == "revised"
    assert revised.revision_index == 1


def test_revise_agent_code_uses_generic_note(recording_gateway, registry):
    seen = {}

    def transport(request):
        seen["prompt"] = request.prompt_text
        return PROGRAM_RESPONSE

    gateway = recording_gateway(transport)
    state = ReflectionState(max_iterations=3)
    revised = revise(
        QUERY, initial_program(), failing_result(), AGENT_CODE, "", state,
        gateway, registry, load_template("program_instruction"),
    )
    assert revised.revision_index == 1
    assert "surrounding program logic" in seen["prompt"]


def test_revise_rejected_at_budget(recording_gateway, registry):
    gateway = recording_gateway(lambda r: PROGRAM_RESPONSE)
    state = ReflectionState(
        iteration=2,
        history=[(initial_program(), failing_result()), (initial_program(), failing_result())],
        max_iterations=2,
    )
    with pytest.raises(ValueError):
        revise(
            QUERY, initial_program(), failing_result(), AGENT_CODE, "", state,
            gateway, registry, load_template("program_instruction"),
        )


def make_exec(script):
    calls = {"n": 0}

    def exec_fn(program):
        result = script[min(calls["n"], len(script) - 1)]
        calls["n"] += 1
        return result

    return exec_fn, calls


def run_with(script, max_iterations, recording_gateway, reflect_on_timeout=False):
    gateway = recording_gateway(lambda r: PROGRAM_RESPONSE)
    exec_fn, calls = make_exec(script)
    outcome = run_loop(
        QUERY, initial_program(), exec_fn, _REGISTRY, gateway,
        max_iterations=max_iterations,
        reflect_on_timeout=reflect_on_timeout,
        attribution_template=load_template("attribution_instruction"),
        program_template=load_template("program_instruction"),
    )
    return outcome, calls["n"]


def test_loop_fail_then_success(recording_gateway):
    outcome, executions = run_with([failing_result(), success_result()], 3, recording_gateway)
    assert outcome.status == "succeeded"
    assert outcome.state.iteration == 1
    assert len(outcome.state.history) == 1
    assert executions == 2


def test_loop_exhausted(recording_gateway):
    script = [failing_result(), failing_result(), failing_result()]
    outcome, executions = run_with(script, 2, recording_gateway)
    assert outcome.status == "exhausted"
    assert len(outcome.state.history) == 2
    assert executions == 3  # max + 1


def test_loop_immediate_success(recording_gateway):
    outcome, executions = run_with([success_result()], 3, recording_gateway)
    assert outcome.status == "succeeded"
    assert outcome.state.iteration == 0
    assert outcome.state.history == []
    assert executions == 1


def test_loop_timeout_not_reflectable(recording_gateway):
    timeout = ExecutionResult(status="timeout", stderr="wall")
    outcome, executions = run_with([timeout, success_result()], 3, recording_gateway)
    assert outcome.status == "exhausted"
    assert outcome.final[1].status == "timeout"
    assert executions == 1


def test_loop_reflect_on_timeout_flag(recording_gateway):
    timeout = ExecutionResult(status="timeout", stderr="wall")
    outcome, executions = run_with(
        [timeout, success_result()], 3, recording_gateway, reflect_on_timeout=True
    )
    assert outcome.status == "succeeded"
    assert executions == 2


def test_loop_history_revision_indices(recording_gateway):
    script = [failing_result()] * 4
    outcome, _ = run_with(script, 3, recording_gateway)
    indices = [program.revision_index for program, _ in outcome.state.history]
    assert indices == [0, 1, 2]
    assert outcome.final[0].revision_index == 3


def test_outcome_invariant():
    with pytest.raises(ValueError):
        ReflectionOutcome(
            status="succeeded",
            final=(initial_program(), failing_result()),
            state=ReflectionState(),
        )


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.sampled_from(["fail", "success", "timeout", "setup_error"]), min_size=1, max_size=8),
    st.integers(min_value=1, max_value=5),
)
def test_loop_execution_budget_property(kinds, max_iterations):
    def to_result(kind):
        if kind == "fail":
            return failing_result()
        if kind == "success":
            return success_result()
        return ExecutionResult(status=kind, stderr=kind)

    from procalc.gateway import ModelGateway

    gateway = ModelGateway(mode="live", transport=lambda r: PROGRAM_RESPONSE)
    script = [to_result(k) for k in kinds]
    exec_fn, calls = make_exec(script)
    outcome = run_loop(
        QUERY, initial_program(), exec_fn, _REGISTRY, gateway,
        max_iterations=max_iterations,
        attribution_template=load_template("attribution_instruction"),
        program_template=load_template("program_instruction"),
    )
    assert calls["n"] <= max_iterations + 1
    assert len(outcome.state.history) == outcome.state.iteration <= max_iterations
    indices = [p.revision_index for p, _ in outcome.state.history]
    assert indices == sorted(indices) and len(set(indices)) == len(indices)
    if outcome.status == "succeeded":
        assert outcome.final[1].status == "success"
