"""Lower a parsed function to typed basic blocks.

Classical basic blocks are refined so that every load, store and call sits in
its own Read, Write or Call block and every loop header becomes a Loop block.
Each remaining run of computation becomes a Standard block.

Elementary operations (the ``instr_count`` unit): one per arithmetic op,
comparison, array index computation, load, store and call; a loop header
costs two (exit test and increment). Scalar copies and constant
subexpressions are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

from ..graph_ir import NodeKind
from .parser import UnsupportedConstruct, fold_constant
from .syntax import (
    COMPARISONS, Assign, BinOp, Call, Const, ExprStmt, For, Function, Index,
    Program, Return, Unary, Var,
)

# operand tags: ("t", temp) temporary, ("v", name) scalar variable,
# ("a", name) whole array passed to a call, ("c", value) constant


@dataclass
class Instr:
    op: str  # arith | cmp | index | load | store | call | mov | loop
    dest: str | None = None
    srcs: tuple = ()
    array: str | None = None
    callee: str | None = None

    @property
    def counted(self) -> int:
        return 0 if self.op == "mov" else 1


@dataclass
class Block:
    id: int
    kind: NodeKind
    instrs: list[Instr] = field(default_factory=list)
    succs: list[int] = field(default_factory=list)
    label: str = ""
    trip_count: int = 0
    stride: int = 0
    loop_carried_dep: bool = False
    callee: str = ""
    callee_param_count: int = 0
    callee_invocations: int = 0
    callee_instr_count: int = 0

    @property
    def instr_count(self) -> int:
        return sum(i.counted for i in self.instrs)

    @property
    def memory_ops(self) -> list[Instr]:
        return [i for i in self.instrs if i.op in ("load", "store")]

    @property
    def arrays(self) -> set[str]:
        return {i.array for i in self.memory_ops}


@dataclass
class BasicBlockList:
    function: Function
    blocks: list[Block]

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def preds(self) -> dict[int, list[int]]:
        out = {b.id: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.succs:
                out[s].append(b.id)
        return out

    @property
    def instr_count(self) -> int:
        return sum(b.instr_count for b in self.blocks)


class _Lowerer:
    def __init__(self, program: Program, function: Function, stack: tuple[str, ...]):
        self.program = program
        self.function = function
        self.stack = stack + (function.name,)
        self.blocks: list[Block] = []
        self.tail: Block | None = None
        self.n_temps = 0
        self.n_loops = 0
        self.trip_stack: list[int] = []
        self.addr_cache: dict[int, tuple] = {}
        self.arrays = {p.name: p for p in function.params if p.is_array}

    # -- block plumbing -----------------------------------------------------
    def new_block(self, kind: NodeKind, label: str = "") -> Block:
        block = Block(len(self.blocks), kind, label=label)
        if self.tail is not None:
            self.link(self.tail, block)
        self.blocks.append(block)
        self.tail = block
        return block

    @staticmethod
    def link(src: Block, dst: Block) -> None:
        if dst.id not in src.succs:
            src.succs.append(dst.id)

    def temp(self) -> str:
        self.n_temps += 1
        return f"%{self.n_temps}"

    def emit_op(self, op: str, srcs: tuple, array: str | None = None) -> tuple:
        if self.tail is None or self.tail.kind is not NodeKind.STANDARD:
            self.new_block(NodeKind.STANDARD)
        dest = self.temp()
        self.tail.instrs.append(Instr(op, dest, srcs, array))
        return ("t", dest)

    def emit_mov(self, var: str, src: tuple) -> None:
        if self.tail is None or self.tail.kind is NodeKind.LOOP:
            self.new_block(NodeKind.STANDARD)
        self.tail.instrs.append(Instr("mov", var, (src,)))

    def emit_load(self, array: str, addr: tuple) -> tuple:
        block = self.new_block(NodeKind.READ, f"load:{array}")
        dest = self.temp()
        block.instrs.append(Instr("load", dest, (addr,), array))
        return ("t", dest)

    def emit_store(self, array: str, addr: tuple, value: tuple) -> None:
        block = self.new_block(NodeKind.WRITE, f"store:{array}")
        block.instrs.append(Instr("store", None, (addr, value), array))

    # -- expressions --------------------------------------------------------
    def lower_expr(self, e) -> tuple:
        folded = fold_constant(e)
        if folded is not None:
            return ("c", folded)
        if isinstance(e, Var):
            if e.name in self.arrays:
                raise UnsupportedConstruct(f"array {e.name!r} used as a value")
            return ("v", e.name)
        if isinstance(e, BinOp):
            left = self.lower_expr(e.left)
            right = self.lower_expr(e.right)
            return self.emit_op("cmp" if e.op in COMPARISONS else "arith", (left, right))
        if isinstance(e, Unary):
            operand = self.lower_expr(e.operand)
            if e.op == "+":
                return operand
            return self.emit_op("arith", (operand,))
        if isinstance(e, Index):
            return self.emit_load(e.array, self.address(e))
        if isinstance(e, Call):
            return self.lower_call(e)
        raise TypeError(f"unexpected expression {e!r}")

    def address(self, e: Index) -> tuple:
        key = id(e)
        if key not in self.addr_cache:
            subs = tuple(self.lower_expr(s) for s in e.indices)
            self.addr_cache[key] = self.emit_op("index", subs, e.array)
        return self.addr_cache[key]

    def lower_call(self, call: Call) -> tuple:
        if call.name in self.stack:
            raise UnsupportedConstruct(f"recursive call to {call.name!r}")
        callee = self.program.function(call.name)
        if len(callee.params) != len(call.args):
            raise UnsupportedConstruct(f"call to {call.name!r} with {len(call.args)} arguments, expected {len(callee.params)}")
        args = []
        for arg, param in zip(call.args, callee.params):
            if param.is_array:
                if not (isinstance(arg, Var) and arg.name in self.arrays):
                    raise UnsupportedConstruct(f"array argument of {call.name!r} must be an array parameter")
                args.append(("a", arg.name))
            else:
                args.append(self.lower_expr(arg))
        summary = lower_function(self.program, callee, self.stack)
        block = self.new_block(NodeKind.CALL, call.name)
        block.callee = call.name
        block.callee_param_count = len(callee.params)
        block.callee_invocations = prod(self.trip_stack) if self.trip_stack else 1
        block.callee_instr_count = summary.instr_count
        dest = self.temp()
        block.instrs.append(Instr("call", dest, tuple(args), callee=call.name))
        return ("t", dest)

    # -- statements ---------------------------------------------------------
    def hoist_addresses(self, stmt) -> None:
        # address arithmetic that needs no memory access goes ahead of the loads
        pending = []
        if isinstance(stmt, Assign):
            pending += _pure_indexes(stmt.value)
            if isinstance(stmt.target, Index) and not _has_memory(stmt.target.indices):
                pending.append(stmt.target)
        elif isinstance(stmt, ExprStmt):
            pending += _pure_indexes(stmt.call)
        elif isinstance(stmt, Return) and stmt.value is not None:
            pending += _pure_indexes(stmt.value)
        for idx in pending:
            self.address(idx)

    def lower_stmt(self, stmt) -> None:
        self.addr_cache = {}
        if isinstance(stmt, For):
            self.lower_for(stmt)
            return
        self.hoist_addresses(stmt)
        if isinstance(stmt, ExprStmt):
            self.lower_call(stmt.call)
        elif isinstance(stmt, Return):
            if stmt.value is not None:
                self.lower_expr(stmt.value)
        elif isinstance(stmt, Assign):
            target = stmt.target
            value = self.lower_expr(stmt.value)
            if isinstance(target, Var):
                if stmt.op != "=":
                    value = self.emit_op("arith", (("v", target.name), value))
                self.emit_mov(target.name, value)
            else:
                addr = self.address(target)
                if stmt.op != "=":
                    current = self.emit_load(target.array, addr)
                    value = self.emit_op("arith", (current, value))
                self.emit_store(target.array, addr, value)
        self.addr_cache = {}

    def lower_for(self, loop: For) -> None:
        label = loop.label or f"loop{self.n_loops}"
        self.n_loops += 1
        header = self.new_block(NodeKind.LOOP, label)
        header.trip_count = loop.trip_count
        header.stride = loop.stride
        header.loop_carried_dep = loop_carried_dependency(loop, self.function)
        header.instrs.append(Instr("loop", self.temp(), (("v", loop.var),)))
        header.instrs.append(Instr("loop", self.temp(), (("v", loop.var),)))
        self.trip_stack.append(loop.trip_count)
        for stmt in loop.body:
            self.lower_stmt(stmt)
        self.trip_stack.pop()
        self.link(self.tail, header)
        self.tail = header

    def run(self) -> BasicBlockList:
        for stmt in self.function.body:
            self.lower_stmt(stmt)
        if not self.blocks:
            self.new_block(NodeKind.STANDARD)
        return BasicBlockList(self.function, self.blocks)


def _has_memory(exprs) -> bool:
    for e in exprs:
        if isinstance(e, (Index, Call)):
            return True
        if isinstance(e, BinOp) and _has_memory((e.left, e.right)):
            return True
        if isinstance(e, Unary) and _has_memory((e.operand,)):
            return True
    return False


def _pure_indexes(e) -> list[Index]:
    """Array accesses in evaluation order whose subscripts need no memory access."""
    out = []
    if isinstance(e, Index):
        if _has_memory(e.indices):
            for s in e.indices:
                out += _pure_indexes(s)
        else:
            out.append(e)
    elif isinstance(e, BinOp):
        out += _pure_indexes(e.left) + _pure_indexes(e.right)
    elif isinstance(e, Unary):
        out += _pure_indexes(e.operand)
    elif isinstance(e, Call):
        for a in e.args:
            out += _pure_indexes(a)
    return out


def lower_function(program: Program, function: Function, stack: tuple[str, ...] = ()) -> BasicBlockList:
    return _Lowerer(program, function, stack).run()


def build_cfg(program: Program) -> BasicBlockList:
    """Typed basic blocks of the program's top function, with control successors."""
    return lower_function(program, program.top_function)


# -- loop-carried dependence ------------------------------------------------

_MAX_DISTANCE_SET = 200_000


def _affine(e, symbols: set[str], dims: dict[str, tuple[int, ...]]):
    """Affine form {var: coeff, "": const} of an integer expression, or None."""
    if isinstance(e, Const):
        return {"": e.value} if isinstance(e.value, int) else None
    if isinstance(e, Var):
        return {e.name: 1} if e.name in symbols else None
    if isinstance(e, Unary):
        inner = _affine(e.operand, symbols, dims)
        if inner is None or e.op not in ("+", "-"):
            return None
        return inner if e.op == "+" else {k: -v for k, v in inner.items()}
    if isinstance(e, BinOp):
        a = _affine(e.left, symbols, dims)
        b = _affine(e.right, symbols, dims)
        if a is None or b is None:
            return None
        if e.op in ("+", "-"):
            sign = 1 if e.op == "+" else -1
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, 0) + sign * v
            return out
        if e.op == "*":
            if set(a) <= {""}:
                a, b = b, a
            if set(b) <= {""}:
                c = b.get("", 0)
                return {k: v * c for k, v in a.items()}
        return None
    return None


def _flat_affine(idx: Index, symbols, dims):
    shape = dims[idx.array]
    out: dict[str, int] = {}
    stride = 1
    for sub, extent in reversed(list(zip(idx.indices, shape))):
        form = _affine(sub, symbols, dims)
        if form is None:
            return None
        for k, v in form.items():
            out[k] = out.get(k, 0) + v * stride
        stride *= extent
    return {k: v for k, v in out.items() if v != 0 or k == ""}


def _collect_accesses(stmts, out: list, inner: dict[str, tuple[int, int]], arrays: set[str]):
    """(array, Index|None, is_write) in body order; None marks an opaque call access."""

    def reads(e):
        if isinstance(e, Index):
            for s in e.indices:
                reads(s)
            out.append((e.array, e, False))
        elif isinstance(e, BinOp):
            reads(e.left)
            reads(e.right)
        elif isinstance(e, Unary):
            reads(e.operand)
        elif isinstance(e, Call):
            for a in e.args:
                if isinstance(a, Var) and a.name in arrays:
                    out.append((a.name, None, False))
                    out.append((a.name, None, True))
                else:
                    reads(a)

    for s in stmts:
        if isinstance(s, For):
            inner[s.var] = (s.step, s.trip_count)
            _collect_accesses(s.body, out, inner, arrays)
        elif isinstance(s, Assign):
            reads(s.value)
            if isinstance(s.target, Index):
                for sub in s.target.indices:
                    reads(sub)
                if s.op != "=":
                    out.append((s.target.array, s.target, False))
                out.append((s.target.array, s.target, True))
        elif isinstance(s, ExprStmt):
            reads(s.call)
        elif isinstance(s, Return) and s.value is not None:
            reads(s.value)


def _array_dependence(loop: For, fw, fr, inner) -> bool:
    if fw is None or fr is None:
        return True
    if loop.trip_count < 2:
        return False
    i = loop.var
    a_w, a_r = fw.get(i, 0), fr.get(i, 0)
    if a_w != a_r:
        return True
    reach = {0}
    for v in (set(fw) | set(fr)) - {"", i}:
        b_w, b_r = fw.get(v, 0), fr.get(v, 0)
        if b_w != b_r:
            return True
        if v in inner and b_w:
            step, trip = inner[v]
            deltas = [b_w * m * step for m in range(-(trip - 1), trip)]
            reach = {x + d for x in reach for d in deltas}
            if len(reach) > _MAX_DISTANCE_SET:
                return True
    offset = fr.get("", 0) - fw.get("", 0)
    unit = a_w * loop.step
    for s in reach:
        need = s - offset
        if unit == 0:
            if need == 0:
                return True
        elif need % unit == 0 and 1 <= need // unit <= loop.trip_count - 1:
            return True
    return False


def _scalar_dependence(loop: For) -> bool:
    written: set[str] = set()

    def assigned(stmts):
        for s in stmts:
            if isinstance(s, For):
                assigned(s.body)
            elif isinstance(s, Assign) and isinstance(s.target, Var):
                written.add(s.target.name)

    assigned(loop.body)
    if not written:
        return False
    defined: set[str] = set()
    exposed: set[str] = set()

    def names(e, acc):
        if isinstance(e, Var):
            acc.add(e.name)
        elif isinstance(e, BinOp):
            names(e.left, acc)
            names(e.right, acc)
        elif isinstance(e, Unary):
            names(e.operand, acc)
        elif isinstance(e, (Index, Call)):
            for sub in (e.indices if isinstance(e, Index) else e.args):
                names(sub, acc)

    def walk(stmts):
        for s in stmts:
            if isinstance(s, For):
                walk(s.body)
                continue
            used: set[str] = set()
            if isinstance(s, Assign):
                names(s.value, used)
                if isinstance(s.target, Index):
                    names(s.target, used)
                elif s.op != "=":
                    used.add(s.target.name)
            elif isinstance(s, ExprStmt):
                names(s.call, used)
            elif isinstance(s, Return) and s.value is not None:
                names(s.value, used)
            exposed.update(used - defined)
            if isinstance(s, Assign) and isinstance(s.target, Var):
                defined.add(s.target.name)

    walk(loop.body)
    return bool(exposed & written)


def loop_carried_dependency(loop: For, function: Function) -> bool:
    """True iff some iteration reads a location written by an earlier iteration.

    Array locations are compared through affine index analysis (exact for
    affine subscripts over loop counters and unmodified scalar parameters,
    conservative otherwise); scalar variables carry a dependence when they are
    read before being written inside the body and written somewhere in it.
    """
    if _scalar_dependence(loop):
        return True
    accesses: list = []
    inner: dict[str, tuple[int, int]] = {}
    dims = {p.name: p.dims for p in function.params if p.is_array}
    _collect_accesses(loop.body, accesses, inner, set(dims))
    symbols = _invariant_scalars(function) | set(inner) | _all_loop_vars(function.body)
    forms = {}
    for array, idx, _ in accesses:
        if idx is not None and id(idx) not in forms:
            forms[id(idx)] = _flat_affine(idx, symbols, dims)
    writes = [(a, forms.get(id(x)) if x is not None else None) for a, x, w in accesses if w]
    reads = [(a, forms.get(id(x)) if x is not None else None) for a, x, w in accesses if not w]
    for wa, fw in writes:
        for ra, fr in reads:
            if wa == ra and _array_dependence(loop, fw, fr, inner):
                return True
    return False


def _all_loop_vars(stmts) -> set[str]:
    out = set()
    for s in stmts:
        if isinstance(s, For):
            out.add(s.var)
            out |= _all_loop_vars(s.body)
    return out


def _invariant_scalars(function: Function) -> set[str]:
    assigned = set()

    def visit(stmts):
        for s in stmts:
            if isinstance(s, For):
                visit(s.body)
            elif isinstance(s, Assign) and isinstance(s.target, Var):
                assigned.add(s.target.name)

    visit(function.body)
    return {p.name for p in function.params if not p.is_array and p.name not in assigned}
