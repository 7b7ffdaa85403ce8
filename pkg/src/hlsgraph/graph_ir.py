"""Hybrid control/data-flow graph: data model, validation, edge ablation, JSON I/O.

A graph holds typed blocks (Loop, Read, Write, Call, Standard) plus one Param
node per function parameter, connected by Control, Data and ParamFlow edges.
Graphs are immutable; helpers return new instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

SCHEMA_VERSION = 1


class NodeKind(str, Enum):
    LOOP = "loop"
    READ = "read"
    WRITE = "write"
    CALL = "call"
    STANDARD = "standard"
    PARAM = "param"


class EdgeKind(str, Enum):
    CONTROL = "control"
    DATA = "data"
    PARAM_FLOW = "param_flow"


NODE_KINDS = tuple(NodeKind)
EDGE_KINDS = tuple(EdgeKind)

# attribute fields a node of each kind may set; everything else stays zero/false
_LOOP_FIELDS = ("trip_count", "loop_carried_dep", "stride")
_CALL_FIELDS = ("callee_param_count", "callee_invocations", "callee_instr_count")
_PARAM_FIELDS = ("is_array_param", "data_type_bytes", "array_elements", "unused")
KIND_FIELDS: dict[NodeKind, tuple[str, ...]] = {
    NodeKind.LOOP: ("instr_count",) + _LOOP_FIELDS,
    NodeKind.READ: ("instr_count",),
    NodeKind.WRITE: ("instr_count",),
    NodeKind.CALL: ("instr_count",) + _CALL_FIELDS,
    NodeKind.STANDARD: ("instr_count",),
    NodeKind.PARAM: _PARAM_FIELDS,
}


class SchemaError(ValueError):
    """Raised when a graph document does not match the file schema."""


@dataclass(frozen=True)
class NodeAttrs:
    kind: NodeKind
    instr_count: int = 0
    trip_count: int = 0
    loop_carried_dep: bool = False
    stride: int = 0
    callee_param_count: int = 0
    callee_invocations: int = 0
    callee_instr_count: int = 0
    is_array_param: bool = False
    data_type_bytes: int = 0
    array_elements: int = 0
    unused: bool = False


ATTR_NAMES = tuple(f.name for f in fields(NodeAttrs) if f.name != "kind")
_BOOL_ATTRS = {"loop_carried_dep", "is_array_param", "unused"}


@dataclass(frozen=True)
class Node:
    id: int
    attrs: NodeAttrs
    label: str = ""

    @property
    def kind(self) -> NodeKind:
        return self.attrs.kind


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class HcdfgGraph:
    """Attributed directed graph of one design.

    The entry block is the first non-Param node in ``nodes`` order.
    ``globals`` holds design-level scalars (instruction and parameter counts).
    """

    design_id: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    globals: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "globals", dict(self.globals))

    def __hash__(self):
        return hash((self.design_id, self.nodes, self.edges))

    @property
    def entry(self) -> int | None:
        for node in self.nodes:
            if node.kind is not NodeKind.PARAM:
                return node.id
        return None

    def node(self, node_id: int) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def index_of(self) -> dict[int, int]:
        return {node.id: i for i, node in enumerate(self.nodes)}

    def edges_of(self, kind: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e.kind is kind]

    def nodes_labeled(self, label: str) -> list[Node]:
        return [n for n in self.nodes if n.label == label]

    def edge_counts(self) -> dict[EdgeKind, int]:
        counts = {k: 0 for k in EdgeKind}
        for e in self.edges:
            counts[e.kind] += 1
        return counts


def validate(graph: HcdfgGraph) -> list[str]:
    """Return a list of invariant violations; empty means the graph is valid."""
    problems: list[str] = []
    ids: dict[int, Node] = {}
    for node in graph.nodes:
        if node.id in ids:
            problems.append(f"node {node.id}: duplicate node id")
        ids[node.id] = node
        problems.extend(_attr_violations(node))

    for e in graph.edges:
        missing = [x for x in (e.src, e.dst) if x not in ids]
        if missing:
            problems.append(f"edge {e.src}->{e.dst} ({e.kind.value}): dangling edge, missing node {missing[0]}")
            continue
        src, dst = ids[e.src], ids[e.dst]
        if e.kind is EdgeKind.CONTROL:
            if NodeKind.PARAM in (src.kind, dst.kind):
                problems.append(f"edge {e.src}->{e.dst}: control edge on param node")
        elif e.kind is EdgeKind.PARAM_FLOW:
            if src.kind is not NodeKind.PARAM or dst.kind not in (NodeKind.READ, NodeKind.WRITE):
                problems.append(f"edge {e.src}->{e.dst}: param_flow edge must run from a param to a read/write block")
        elif NodeKind.PARAM in (src.kind, dst.kind):
            problems.append(f"edge {e.src}->{e.dst}: data edge on param node")

    entry = graph.entry
    if entry is None:
        problems.append("graph: no entry block (no non-param nodes)")
    else:
        succ: dict[int, list[int]] = {}
        for e in graph.edges_of(EdgeKind.CONTROL):
            succ.setdefault(e.src, []).append(e.dst)
        seen = {entry}
        stack = [entry]
        while stack:
            for nxt in succ.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        for node in graph.nodes:
            if node.kind is not NodeKind.PARAM and node.id not in seen:
                problems.append(f"node {node.id}: unreachable from entry block {entry}")

    flows: dict[int, int] = {}
    for e in graph.edges_of(EdgeKind.PARAM_FLOW):
        flows[e.src] = flows.get(e.src, 0) + 1
    for node in graph.nodes:
        if node.kind is not NodeKind.PARAM:
            continue
        n_flow = flows.get(node.id, 0)
        if n_flow == 0 and not node.attrs.unused:
            problems.append(f"node {node.id}: param without param_flow edges must be flagged unused")
        if n_flow > 0 and node.attrs.unused:
            problems.append(f"node {node.id}: param flagged unused but has param_flow edges")
    return problems


def _attr_violations(node: Node) -> list[str]:
    out = []
    a = node.attrs
    allowed = KIND_FIELDS[a.kind]
    for name in ATTR_NAMES:
        value = getattr(a, name)
        if name not in allowed and value:
            out.append(f"node {node.id}: attribute {name} must be zero for {a.kind.value} nodes")
        if name not in _BOOL_ATTRS and value < 0:
            out.append(f"node {node.id}: attribute {name} is negative")
    if a.kind is NodeKind.PARAM:
        if a.data_type_bytes <= 0:
            out.append(f"node {node.id}: param data_type_bytes must be positive")
        if (a.array_elements > 0) != a.is_array_param:
            out.append(f"node {node.id}: array_elements > 0 iff is_array_param")
    return out


def ablate_edges(graph: HcdfgGraph, kinds: Iterable[EdgeKind]) -> HcdfgGraph:
    """Drop every edge whose kind is in ``kinds``; Control edges cannot be ablated."""
    kinds = {EdgeKind(k) for k in kinds}
    if EdgeKind.CONTROL in kinds:
        raise ValueError("control edges cannot be ablated")
    if not kinds:
        return graph
    return replace(graph, edges=tuple(e for e in graph.edges if e.kind not in kinds))


# -- serialization -----------------------------------------------------------

_DOC_KEYS = {"schema_version", "design_id", "nodes", "edges", "globals"}
_NODE_KEYS = {"id", "kind", "label", "attrs"}
_EDGE_KEYS = {"src", "dst", "kind"}


def to_document(graph: HcdfgGraph) -> dict[str, Any]:
    nodes = []
    for node in graph.nodes:
        attrs = {}
        for name in KIND_FIELDS[node.kind]:
            value = getattr(node.attrs, name)
            attrs[name] = bool(value) if name in _BOOL_ATTRS else int(value)
        nodes.append({"id": node.id, "kind": node.kind.value, "label": node.label, "attrs": attrs})
    return {
        "schema_version": SCHEMA_VERSION,
        "design_id": graph.design_id,
        "nodes": nodes,
        "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in graph.edges],
        "globals": dict(graph.globals),
    }


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")


def _enum(cls, value, where):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(f"{where}: unknown {cls.__name__} {value!r}") from None


def from_document(doc: Mapping[str, Any]) -> HcdfgGraph:
    _check_keys(doc, _DOC_KEYS, _DOC_KEYS - {"globals"}, "graph")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"graph: schema_version {doc['schema_version']!r} != {SCHEMA_VERSION}")
    nodes = []
    for i, nd in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        _check_keys(nd, _NODE_KEYS, {"id", "kind"}, where)
        kind = _enum(NodeKind, nd["kind"], where)
        raw = nd.get("attrs", {})
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}.attrs: expected an object")
        extra = set(raw) - set(KIND_FIELDS[kind])
        if extra:
            raise SchemaError(f"{where}.attrs: field(s) {sorted(extra)} not allowed for {kind.value} nodes")
        values = {}
        for name, value in raw.items():
            if name in _BOOL_ATTRS:
                if not isinstance(value, bool):
                    raise SchemaError(f"{where}.attrs.{name}: expected a boolean")
            elif isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"{where}.attrs.{name}: expected an integer")
            values[name] = value
        if isinstance(nd["id"], bool) or not isinstance(nd["id"], int):
            raise SchemaError(f"{where}.id: expected an integer")
        nodes.append(Node(nd["id"], NodeAttrs(kind, **values), str(nd.get("label", ""))))
    edges = []
    for i, ed in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        _check_keys(ed, _EDGE_KEYS, _EDGE_KEYS, where)
        edges.append(Edge(int(ed["src"]), int(ed["dst"]), _enum(EdgeKind, ed["kind"], where)))
    globals_ = doc.get("globals", {})
    if not isinstance(globals_, dict):
        raise SchemaError("globals: expected an object")
    return HcdfgGraph(str(doc["design_id"]), tuple(nodes), tuple(edges), globals_)


def serialize(graph: HcdfgGraph) -> str:
    return json.dumps(to_document(graph), indent=1)


def deserialize(text: str) -> HcdfgGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed graph document: {exc}") from None
    return from_document(doc)


def save_graph(graph: HcdfgGraph, path: str | Path) -> None:
    Path(path).write_text(serialize(graph) + "\n")


def load_graph(path: str | Path) -> HcdfgGraph:
    return deserialize(Path(path).read_text())
