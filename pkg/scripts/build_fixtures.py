"""Regenerate the bundled replay store, scripted execution results, sample
dataset, and golden prompt snapshot.

Run from the repository root after changing templates or tool protocols:

    python scripts/build_fixtures.py
"""
from __future__ import annotations

import json
import random
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from procalc import demo
from procalc.composer import REACT_GUIDANCE, knowledge_block
from procalc.config import AgentConfig
from procalc.evalsuite.ablation import scenario_chunks, scenario_index
from procalc.executor import FixtureExecutor, SandboxLimits, result_from_wire
from procalc.gateway import ModelGateway, ModelRequest, load_template, render
from procalc.pipeline import run_query
from procalc.planner import PlannerError
from procalc.toolhub import load_protocols

PLAN_TEXT = """\
1. Define the ODE function for the tank balance tools: yes
2. Create time arrays and numerical data for evaluation after: 1 tools: yes
3. Solve the ODE initial value problem after: 1,2 tools: yes
4. Plot the concentration results over time after: 3 tools: yes"""

EXTRACTIONS = {
    "ode_ivp_solver": "V = 2 m^3\nq = 0.4 m^3/min\nc_i = 50 kg/m^3\nc0 = 0 kg/m^3",
    "array_math": "t_start = 0 min\nt_end = 50 min\nnum_points = 500",
    "plotter": (
        "title = Concentration of A in the Reactor Over Time\n"
        "xlabel = Time (minutes)\nylabel = Concentration of A (kg/m^3)"
    ),
}

REACT_PREAMBLE = """\
Thought: The balance dc/dt = (q/V)*(c_i - c) must be integrated from c(0) = 0 over 0..50 minutes.
Action: ode_ivp_solver[V=2, q=0.4, c_i=50, c0=0]
Observation: solver configured for the first-order balance.
Thought: The profile needs an evaluation grid and a plot of the results.
Action: plotter[title=Concentration of A in the Reactor Over Time]
Observation: plot configured.
Answer: The program below chains array_math, ode_ivp_solver, and plotter.
"""

PROGRAM_RESPONSE = "```python\n" + demo.CSTR_PROGRAM_SOURCE + "```"

REVISED_RESPONSE = (
    "```python\n# revision: recheck the solver call arguments\n"
    + demo.CSTR_PROGRAM_SOURCE
    + "```"
)

INTEGRATION_ANSWER = (
    "Starting from clean water, the exit concentration rises exponentially "
    "toward the 50 kg/m^3 inlet value with time constant V/q = 5 min, "
    "reaching about 49.998 kg/m^3 by t = 50 min. The concentration profile "
    "is plotted in cstr_profile.png."
)

SUCCESS_RESULT = {
    "status": "success",
    "stdout": "",
    "stderr": "",
    "exception": None,
    "artifacts": ["cstr_profile.png"],
    "duration_ms": 1200,
}

FAIL_RESULT = {
    "status": "runtime_error",
    "stdout": "",
    "stderr": "Traceback (most recent call last): ZeroDivisionError",
    "exception": {
        "type_name": "ZeroDivisionError",
        "message": "float division by zero",
        "frames": [
            {
                "file": "<program>",
                "line": 13,
                "symbol": "cstr_ode",
                "code_context": "    return (q/V) * (c_i - c)",
            },
            {
                "file": "/usr/lib/python3/site-packages/scipy/integrate/_ivp/rk.py",
                "line": 111,
                "symbol": "_step_impl",
                "code_context": "        K[0] = self.fun(t, y)",
            },
            {
                "file": "<program>",
                "line": 23,
                "symbol": "<module>",
                "code_context": "solution = solve_ivp(cstr_ode, t_span, c0, args=(V, q, c_i), t_eval=t_eval)",
            },
        ],
    },
    "artifacts": [],
    "duration_ms": 40,
}


def respond(request: ModelRequest) -> str:
    """Rule-based stand-in for a live backend while recording fixtures."""
    prompt = request.prompt_text
    if prompt.startswith("You are a task planner"):
        return PLAN_TEXT
    if prompt.startswith("Extract the parameters for tool"):
        for tool_id, lines in EXTRACTIONS.items():
            if f"for tool {tool_id}" in prompt:
                return lines
        return "?"
    if prompt.startswith("You are a process-engineering assistant"):
        if "ZeroDivisionError" in prompt:
            return REVISED_RESPONSE
        if "ReAct style" in prompt:
            return REACT_PREAMBLE + PROGRAM_RESPONSE
        return PROGRAM_RESPONSE
    if prompt.startswith("Compose the final answer"):
        return INTEGRATION_ANSWER
    raise AssertionError(f"no fixture rule for prompt: {prompt[:80]!r}")


def record_scenarios(store_path: Path) -> None:
    store_path.unlink(missing_ok=True)
    registry = load_protocols()
    config = AgentConfig()
    config.model.mode = "record"
    config.model.replay_path = str(store_path)
    config.ablation.no_cache = True
    limits = SandboxLimits(artifact_dir=".")

    def gateway():
        return ModelGateway(
            mode="record", replay_path=store_path, transport=respond
        )

    # base ask: no index, ReAct on, single successful execution
    fixture = FixtureExecutor([result_from_wire(SUCCESS_RESULT)])
    run = run_query(
        demo.CSTR_QUERY_TEXT, config, registry, gateway(),
        lambda p: fixture.execute(p, limits),
    )
    assert run.exit_code == 0, run.failure

    # knowledge-augmented ask with one repaired failure (full ablation variant)
    fixture = FixtureExecutor([result_from_wire(FAIL_RESULT), result_from_wire(SUCCESS_RESULT)])
    run = run_query(
        demo.CSTR_QUERY_TEXT, config, registry, gateway(),
        lambda p: fixture.execute(p, limits),
        index=scenario_index(),
    )
    assert run.exit_code == 0, run.failure
    assert run.outcome.state.iteration == 1

    # ReAct disabled
    config.ablation.no_react = True
    fixture = FixtureExecutor([result_from_wire(SUCCESS_RESULT)])
    run = run_query(
        demo.CSTR_QUERY_TEXT, config, registry, gateway(),
        lambda p: fixture.execute(p, limits),
    )
    assert run.exit_code == 0, run.failure
    config.ablation.no_react = False


def record_raw_backend(store_path: Path) -> None:
    store_path.unlink(missing_ok=True)
    registry = load_protocols()
    config = AgentConfig()
    config.model.mode = "record"
    config.model.replay_path = str(store_path)
    config.ablation.no_cache = True
    gateway = ModelGateway(
        mode="record",
        replay_path=store_path,
        transport=lambda req: "I cannot determine a plan for this task.",
    )
    fixture = FixtureExecutor([result_from_wire(SUCCESS_RESULT)])
    try:
        run_query(
            demo.CSTR_QUERY_TEXT, config, registry, gateway,
            lambda p: fixture.execute(p, SandboxLimits(artifact_dir=".")),
        )
    except PlannerError:
        pass
    else:
        raise AssertionError("raw backend scenario should fail to plan")


def write_exec_scripts(replay_dir: Path) -> None:
    (replay_dir / "exec_success.json").write_text(
        json.dumps([SUCCESS_RESULT], indent=2) + "\n", encoding="utf-8"
    )
    (replay_dir / "exec_fail_success.json").write_text(
        json.dumps([FAIL_RESULT, SUCCESS_RESULT], indent=2) + "\n", encoding="utf-8"
    )


def write_golden_prompt(path: Path) -> None:
    registry = load_protocols()
    digest = registry.protocol_digest(["ode_ivp_solver", "array_math", "plotter"])
    prompt = render(
        load_template("program_instruction"),
        {
            "query": demo.CSTR_QUERY_TEXT,
            "tools": digest,
            "docs": knowledge_block(scenario_chunks()),
            "observations": REACT_GUIDANCE,
            "error": "",
            "history": "",
        },
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(prompt, encoding="utf-8")


_TOPICS = [
    ("mass balance", "What outlet flow balances a {f} kg/h feed split {p} percent to product?", "Apply an overall mass balance."),
    ("heat duty", "What duty heats {f} kg/h of water by {p} K?", "Use Q = m*cp*dT with cp = 4.18 kJ/kg-K."),
    ("reactor", "What conversion is reached in a {f} L reactor at k = 0.{p} 1/min?", "Use the first-order CSTR design equation."),
    ("humidity", "What is the humidity ratio at {p} percent relative humidity and {f} kPa?", "Use W = 0.622*Pv/(P - Pv)."),
]


def write_sample_dataset(path: Path, count: int = 40) -> None:
    rng = random.Random(7)
    rows = []
    for i in range(count):
        topic, question, instruction = _TOPICS[i % len(_TOPICS)]
        f = rng.randrange(100, 9000)
        p = rng.randrange(5, 95)
        rows.append(
            {
                "instruction": f"{instruction} Solve the {topic} problem with a short program.",
                "question": question.format(f=f, p=p),
                "answer": f"{round(f * p / 100.0, 2)}",
            }
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def compact(store_path: Path) -> None:
    entries: dict[str, str] = {}
    for line in store_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            entries[rec["key"]] = rec["response"]
    with open(store_path, "w", encoding="utf-8") as fh:
        for key, response in entries.items():
            fh.write(json.dumps({"key": key, "response": response}) + "\n")


def main() -> None:
    replay = demo.replay_dir()
    replay.mkdir(parents=True, exist_ok=True)
    write_exec_scripts(replay)
    record_scenarios(demo.fixtures_store_path())
    record_raw_backend(demo.raw_backend_store_path())
    compact(demo.fixtures_store_path())
    write_golden_prompt(REPO / "tests" / "data" / "golden" / "prompt_program_cstr.txt")
    write_sample_dataset(demo.sample_dataset_path())
    store_lines = demo.fixtures_store_path().read_text().strip().splitlines()
    print(f"fixtures store: {len(store_lines)} entries")
    print("done")


if __name__ == "__main__":
    main()
