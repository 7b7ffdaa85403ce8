"""C-subset frontend: source text to hybrid control/data-flow graph."""

from .cfg import BasicBlockList, Block, build_cfg, loop_carried_dependency
from .dfg import build_dfg
from .hcdfg import build_hcdfg, extract_file, graph_from_blocks
from .parser import FrontendError, ParseError, UnsupportedConstruct, parse

__all__ = [
    "BasicBlockList", "Block", "FrontendError", "ParseError", "UnsupportedConstruct",
    "build_cfg", "build_dfg", "build_hcdfg", "extract_file", "graph_from_blocks",
    "loop_carried_dependency", "parse",
]
