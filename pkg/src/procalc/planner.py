"""Query decomposition into a dependency-ordered sub-task graph.

The model is prompted with a rigid line grammar (one numbered sub-task per
line with optional ``after:`` and ``tools:`` suffixes) so its plan output is
mechanically checkable.
"""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass

from .errors import ProcalcError
from .gateway import ModelGateway, ModelRequest, PromptTemplate, render

MAX_SUBTASKS = 16

_PLAN_LINE_RE = re.compile(
    r"^\s*(\d+)[.)]\s*(.*?)"
    r"(?:\s+after:\s*([\d,\s]+?))?"
    r"(?:\s+tools:\s*(yes|no))?\s*$"
)


class PlannerError(ProcalcError):
    pass


class EmptyPlanError(PlannerError):
    pass


class CycleError(PlannerError):
    pass


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    context_hints: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class SubTask:
    id: str
    description: str
    needs_tools: bool
    depends_on: tuple[str, ...] = ()

    def __post_init__(self):
        if self.id in self.depends_on:
            raise ValueError(f"sub-task {self.id!r} depends on itself")


@dataclass(frozen=True)
class TaskGraph:
    query_id: str
    nodes: tuple[SubTask, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("task graph needs at least one node")
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sub-task ids")
        known = set(ids)
        for node in self.nodes:
            for dep in node.depends_on:
                if dep not in known:
                    raise ValueError(f"sub-task {node.id!r} depends on unknown {dep!r}")
        topo_order(self)  # raises CycleError on cycles

    def node(self, task_id: str) -> SubTask:
        for n in self.nodes:
            if n.id == task_id:
                return n
        raise KeyError(task_id)


def parse_plan_text(query_id: str, text: str) -> TaskGraph:
    """Parse the numbered-line plan grammar into a validated TaskGraph."""
    nodes: list[SubTask] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _PLAN_LINE_RE.match(line)
        if not m or not m.group(2).strip():
            continue
        number, description, after, tools = m.groups()
        deps = ()
        if after:
            deps = tuple(f"t{int(n):02d}" for n in re.findall(r"\d+", after))
        nodes.append(
            SubTask(
                id=f"t{int(number):02d}",
                description=description.strip(),
                needs_tools=(tools != "no"),
                depends_on=deps,
            )
        )
        if len(nodes) > MAX_SUBTASKS:
            raise PlannerError(f"plan exceeds {MAX_SUBTASKS} sub-tasks")
    if not nodes:
        raise EmptyPlanError("model produced no parseable sub-tasks")
    return TaskGraph(query_id=query_id, nodes=tuple(nodes))


def plan(
    query: Query,
    tool_overviews: list[str],
    gateway: ModelGateway,
    template: PromptTemplate,
) -> TaskGraph:
    """Render the planning template, complete, and parse the sub-task list."""
    prompt = render(template, {"query": query.text, "tools": "\n".join(tool_overviews)})
    response = gateway.complete(ModelRequest(prompt_text=prompt))
    return parse_plan_text(query.id, response.text)


def topo_order(graph: TaskGraph) -> list[SubTask]:
    """Topological order with ties broken by ascending sub-task id."""
    indegree = {n.id: len(n.depends_on) for n in graph.nodes}
    dependents: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    for node in graph.nodes:
        for dep in node.depends_on:
            dependents[dep].append(node.id)
    ready = [tid for tid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[SubTask] = []
    while ready:
        tid = heapq.heappop(ready)
        order.append(graph.node(tid))
        for succ in dependents[tid]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                heapq.heappush(ready, succ)
    if len(order) != len(graph.nodes):
        raise CycleError(f"dependency cycle in plan for query {graph.query_id!r}")
    return order


def needs_tools(graph: TaskGraph) -> bool:
    return any(node.needs_tools for node in graph.nodes)
