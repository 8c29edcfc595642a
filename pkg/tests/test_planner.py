from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procalc import demo
from procalc.gateway import load_template
from procalc.planner import (
    CycleError,
    EmptyPlanError,
    PlannerError,
    Query,
    SubTask,
    TaskGraph,
    needs_tools,
    parse_plan_text,
    plan,
    topo_order,
)


def graph_of(*nodes: SubTask) -> TaskGraph:
    return TaskGraph(query_id="q", nodes=tuple(nodes))


def test_query_invariant():
    with pytest.raises(ValueError):
        Query(id="q", text="")


def test_plan_cstr_fixture(registry):
    gateway_store = demo.fixtures_store_path()
    from procalc.gateway import ModelGateway

    gateway = ModelGateway(mode="replay", replay_path=gateway_store)
    query = Query(id="q1", text=demo.CSTR_QUERY_TEXT)
    graph = plan(query, registry.overviews(), gateway, load_template("planning"))
    assert len(graph.nodes) == 4
    order = [n.description for n in topo_order(graph)]
    assert order == [
        "Define the ODE function for the tank balance",
        "Create time arrays and numerical data for evaluation",
        "Solve the ODE initial value problem",
        "Plot the concentration results over time",
    ]
    assert needs_tools(graph)


def test_plan_single_direct_answer_node(recording_gateway, registry):
    gateway = recording_gateway(lambda r: "1. answer directly tools: no")
    query = Query(id="q2", text="What is the unit of viscosity?")
    graph = plan(query, registry.overviews(), gateway, load_template("planning"))
    assert len(graph.nodes) == 1
    assert graph.nodes[0].needs_tools is False
    assert needs_tools(graph) is False


def test_plan_empty_output_is_error(recording_gateway, registry):
    gateway = recording_gateway(lambda r: "no numbered lines here")
    with pytest.raises(EmptyPlanError):
        plan(Query(id="q", text="x"), registry.overviews(), gateway, load_template("planning"))


def test_plan_deterministic_under_replay(registry):
    from procalc.gateway import ModelGateway

    query = Query(id="q1", text=demo.CSTR_QUERY_TEXT)
    graphs = []
    for _ in range(2):
        gateway = ModelGateway(mode="replay", replay_path=demo.fixtures_store_path())
        graphs.append(plan(query, registry.overviews(), gateway, load_template("planning")))
    assert graphs[0] == graphs[1]


def test_parse_plan_respects_max():
    text = "\n".join(f"{i}. step {i} tools: no" for i in range(1, 18))
    with pytest.raises(PlannerError):
        parse_plan_text("q", text)


def test_parse_plan_tools_default_yes():
    graph = parse_plan_text("q", "1. do the thing")
    assert graph.nodes[0].needs_tools is True


def test_graph_invariants():
    with pytest.raises(ValueError):
        graph_of()  # empty
    with pytest.raises(ValueError):
        SubTask(id="a", description="d", needs_tools=False, depends_on=("a",))
    with pytest.raises(ValueError):
        graph_of(SubTask("a", "d", False, ("ghost",)))
    with pytest.raises(CycleError):
        graph_of(
            SubTask("a", "d", False, ("b",)),
            SubTask("b", "d", False, ("a",)),
        )


def test_topo_chain():
    graph = graph_of(
        SubTask("a", "first", False),
        SubTask("b", "second", False, ("a",)),
        SubTask("c", "third", False, ("b",)),
    )
    assert [n.id for n in topo_order(graph)] == ["a", "b", "c"]


def test_topo_diamond_tiebreak():
    graph = graph_of(
        SubTask("a", "root", False),
        SubTask("c", "right", False, ("a",)),
        SubTask("b", "left", False, ("a",)),
        SubTask("d", "join", False, ("b", "c")),
    )
    assert [n.id for n in topo_order(graph)] == ["a", "b", "c", "d"]


def test_topo_single():
    graph = graph_of(SubTask("only", "one", True))
    assert [n.id for n in topo_order(graph)] == ["only"]


def test_needs_tools_any():
    graph = graph_of(
        SubTask("a", "x", False),
        SubTask("b", "y", True),
        SubTask("c", "z", False),
    )
    assert needs_tools(graph) is True
    all_false = graph_of(SubTask("a", "x", False), SubTask("b", "y", False))
    assert needs_tools(all_false) is False


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=1, max_value=12), st.randoms(use_true_random=False))
def test_topo_properties(n, rng):
    # random DAG: edges only from lower to higher ids
    nodes = []
    for i in range(n):
        deps = tuple(
            f"t{j:02d}" for j in range(i) if rng.random() < 0.3
        )
        nodes.append(SubTask(f"t{i:02d}", f"step {i}", False, deps))
    shuffled = list(nodes)
    rng.shuffle(shuffled)
    graph = TaskGraph(query_id="q", nodes=tuple(shuffled))
    order = topo_order(graph)
    assert len(order) == n
    position = {node.id: idx for idx, node in enumerate(order)}
    for node in nodes:
        for dep in node.depends_on:
            assert position[dep] < position[node.id]
    # permuting insertion order does not change the result
    reshuffled = list(nodes)
    rng.shuffle(reshuffled)
    assert topo_order(TaskGraph(query_id="q", nodes=tuple(reshuffled))) == order
