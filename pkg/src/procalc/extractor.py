"""Parameter extraction from the query against a tool's argument schema.

Values come back from the model as ``name = value [unit]`` lines, get
type-checked against the ArgSpec's semantic type, and are validated against
stipulations (presence, type, unit compatibility).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .gateway import ModelGateway, ModelRequest
from .planner import Query
from .toolhub import ToolProtocol

_NUMBER_RE = re.compile(r"^[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?$")
_LINE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*(.*?)\s*$")

# Small alias table; folding handles case/whitespace/superscripts. Full
# dimensional analysis is out of scope.
_UNIT_ALIASES = {
    "m**3": "m3",
    "cubicmeters": "m3",
    "cubicmetres": "m3",
    "litre": "l",
    "litres": "l",
    "liter": "l",
    "liters": "l",
    "permin": "/min",
    "perminute": "/min",
    "minute": "min",
    "minutes": "min",
    "hr": "h",
    "hour": "h",
    "hours": "h",
    "feet3": "ft3",
    "foot3": "ft3",
    "cubicfeet": "ft3",
}
_SUPERSCRIPTS = str.maketrans("⁰¹²³⁴⁵⁶⁷⁸⁹", "0123456789")


def normalize_unit(unit: Optional[str]) -> Optional[str]:
    """Case/whitespace/superscript folding plus a small alias table."""
    if unit is None:
        return None
    u = unit.strip().strip("[]()").lower().translate(_SUPERSCRIPTS)
    u = u.replace(" ", "").replace("^", "").replace("·", "").replace("**", "")
    for raw, canon in _UNIT_ALIASES.items():
        if u == raw:
            u = canon
            break
    # fold aliases inside compound units like kg/hr
    if "/" in u:
        num, _, den = u.partition("/")
        num = _UNIT_ALIASES.get(num, num)
        den = _UNIT_ALIASES.get(den, den)
        u = f"{num}/{den}"
    return u or None


def units_compatible(given: Optional[str], stipulated: Optional[str]) -> bool:
    """Compatible when either side is unstated or normalized forms match."""
    if given is None or stipulated is None:
        return True
    return normalize_unit(given) == normalize_unit(stipulated)


@dataclass(frozen=True)
class ParamValue:
    raw_text: str
    parsed: object
    unit: Optional[str] = None


@dataclass
class ParamSet:
    tool_id: str
    values: dict[str, ParamValue] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.values) & set(self.missing)
        if overlap:
            raise ValueError(f"args both present and missing: {sorted(overlap)}")


@dataclass(frozen=True)
class Violation:
    arg_name: str
    reason: str  # missing | type_mismatch | unit_mismatch


@dataclass(frozen=True)
class StipulationReport:
    tool_id: str
    consistent: tuple[str, ...]
    violations: tuple[Violation, ...]


def parse_typed_value(raw: str, semantic_type: str):
    """Parse a raw token per semantic type; returns None when unparseable."""
    raw = raw.strip()
    if not raw or raw == "?":
        return None
    if semantic_type == "real":
        return float(raw) if _NUMBER_RE.match(raw) else None
    if semantic_type == "integer":
        return int(raw) if re.fullmatch(r"[-+]?\d+", raw) else None
    if semantic_type == "boolean":
        low = raw.lower()
        if low in ("true", "yes"):
            return True
        if low in ("false", "no"):
            return False
        return None
    if semantic_type == "array":
        try:
            value = json.loads(raw)
        except ValueError:
            parts = [p.strip() for p in raw.strip("[]").split(",") if p.strip()]
            if not parts or not all(_NUMBER_RE.match(p) for p in parts):
                return None
            return [float(p) for p in parts]
        return value if isinstance(value, list) else None
    # string / function: any non-empty text stands
    return raw


def _matches_type(value: object, semantic_type: str) -> bool:
    if semantic_type == "real":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if semantic_type == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if semantic_type == "boolean":
        return isinstance(value, bool)
    if semantic_type == "array":
        return isinstance(value, list)
    return isinstance(value, str)


def _split_value_unit(raw: str, semantic_type: str) -> tuple[str, Optional[str]]:
    """Split a ``value [unit]`` remainder; strings keep the whole remainder."""
    raw = raw.strip()
    if semantic_type in ("string", "function"):
        return raw, None
    parts = raw.split(None, 1)
    if len(parts) == 2:
        return parts[0], parts[1].strip()
    return raw, None


def extraction_prompt(query: Query, protocol: ToolProtocol) -> str:
    lines = [
        f"Extract the parameters for tool {protocol.tool_id} from the task below.",
        "Arguments:",
    ]
    for a in protocol.args:
        unit = f" [{a.unit}]" if a.unit else ""
        req = "required" if a.required else "optional"
        lines.append(f"- {a.name} ({a.semantic_type}{unit}, {req}): {a.description}")
    lines += [
        "",
        "Task:",
        query.text,
        "",
        "Reply with one `name = value [unit]` line per argument you can read",
        "from the task; write `name = ?` when the task does not state it.",
    ]
    return "\n".join(lines)


def extract(query: Query, protocol: ToolProtocol, gateway: ModelGateway) -> ParamSet:
    """Prompt the model for ``name = value [unit]`` lines and type-check them.

    Malformed model output is not an exception: every required argument that
    cannot be parsed lands in ``missing``.
    """
    response = gateway.complete(ModelRequest(prompt_text=extraction_prompt(query, protocol)))
    by_name = {a.name: a for a in protocol.args}
    raw_lines: dict[str, str] = {}
    for line in response.text.splitlines():
        m = _LINE_RE.match(line)
        if m and m.group(1) in by_name:
            raw_lines[m.group(1)] = m.group(2)

    values: dict[str, ParamValue] = {}
    missing: list[str] = []
    for spec in protocol.args:
        raw = raw_lines.get(spec.name)
        if raw is None or raw.strip() in ("", "?"):
            if spec.required:
                missing.append(spec.name)
            continue
        token, unit = _split_value_unit(raw, spec.semantic_type)
        parsed = parse_typed_value(token, spec.semantic_type)
        if parsed is None:
            if spec.required:
                missing.append(spec.name)
            continue
        values[spec.name] = ParamValue(raw_text=raw, parsed=parsed, unit=unit)
    return ParamSet(tool_id=protocol.tool_id, values=values, missing=missing)


def check_stipulations(params: ParamSet, protocol: ToolProtocol) -> StipulationReport:
    """Per-argument verdicts against the documented stipulations.

    Exactly one verdict per ArgSpec: |consistent| + |violations| equals the
    spec count. Absent optional arguments are vacuously consistent.
    """
    if params.tool_id != protocol.tool_id:
        raise ValueError(
            f"param set is for {params.tool_id!r}, protocol is {protocol.tool_id!r}"
        )
    consistent: list[str] = []
    violations: list[Violation] = []
    for spec in protocol.args:
        value = params.values.get(spec.name)
        if value is None:
            if spec.required:
                violations.append(Violation(spec.name, "missing"))
            else:
                consistent.append(spec.name)
            continue
        if not _matches_type(value.parsed, spec.semantic_type):
            violations.append(Violation(spec.name, "type_mismatch"))
        elif not units_compatible(value.unit, spec.unit):
            violations.append(Violation(spec.name, "unit_mismatch"))
        else:
            consistent.append(spec.name)
    return StipulationReport(
        tool_id=protocol.tool_id,
        consistent=tuple(consistent),
        violations=tuple(violations),
    )
