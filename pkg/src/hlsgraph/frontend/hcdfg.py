from __future__ import annotations

from pathlib import Path

from ..graph_ir import Edge, EdgeKind, HcdfgGraph, Node, NodeAttrs, NodeKind
from .cfg import BasicBlockList, build_cfg
from .dfg import build_dfg
from .parser import parse
from .syntax import Program


def _block_attrs(block) -> NodeAttrs:
    kind = block.kind
    if kind is NodeKind.LOOP:
        return NodeAttrs(kind, instr_count=block.instr_count, trip_count=block.trip_count,
                         loop_carried_dep=block.loop_carried_dep, stride=block.stride)
    if kind is NodeKind.CALL:
        return NodeAttrs(kind, instr_count=block.instr_count,
                         callee_param_count=block.callee_param_count,
                         callee_invocations=block.callee_invocations,
                         callee_instr_count=block.callee_instr_count)
    return NodeAttrs(kind, instr_count=block.instr_count)


def graph_from_blocks(bbl: BasicBlockList, design_id: str | None = None) -> HcdfgGraph:
    nodes = [Node(b.id, _block_attrs(b), b.label) for b in bbl.blocks]
    edges = [Edge(b.id, s, EdgeKind.CONTROL) for b in bbl.blocks for s in b.succs]
    edges += [Edge(d, u, EdgeKind.DATA) for d, u in build_dfg(bbl)]

    next_id = len(nodes)
    for param in bbl.function.params:
        accessors = [b.id for b in bbl.blocks if param.name in b.arrays]
        nodes.append(Node(next_id, NodeAttrs(
            NodeKind.PARAM,
            is_array_param=param.is_array,
            data_type_bytes=param.byte_width,
            array_elements=param.elements,
            unused=not accessors,
        ), param.name))
        edges += [Edge(next_id, b, EdgeKind.PARAM_FLOW) for b in accessors]
        next_id += 1

    globals_ = {"instr_count": bbl.instr_count, "param_count": len(bbl.function.params)}
    return HcdfgGraph(design_id or bbl.function.name, tuple(nodes), tuple(edges), globals_)


def build_hcdfg(program: Program | str, design_id: str | None = None) -> HcdfgGraph:
    """Hybrid control/data-flow graph of the program's top function.

    Accepts a parsed Program or C source text.
    """
    if isinstance(program, str):
        program = parse(program)
    return graph_from_blocks(build_cfg(program), design_id)


def extract_file(path: str | Path, top: str | None = None, design_id: str | None = None) -> HcdfgGraph:
    program = parse(Path(path).read_text(), top)
    return build_hcdfg(program, design_id)
