"""AST node types for the C subset accepted by the frontend."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Union


@dataclass(frozen=True)
class Const:
    value: int | float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Index:
    array: str
    indices: tuple["Expr", ...]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[Const, Var, Index, BinOp, Unary, Call]

COMPARISONS = {"<", "<=", ">", ">=", "==", "!=", "&&", "||"}


@dataclass(frozen=True)
class Assign:
    target: Var | Index
    op: str  # "=" or a compound operator such as "+="
    value: Expr
    line: int = 0


@dataclass(frozen=True)
class ExprStmt:
    call: Call
    line: int = 0


@dataclass(frozen=True)
class Return:
    value: Expr | None
    line: int = 0


@dataclass(frozen=True)
class For:
    var: str
    start: int
    step: int
    trip_count: int
    body: tuple["Stmt", ...]
    label: str = ""
    line: int = 0

    @property
    def stride(self) -> int:
        return abs(self.step)


Stmt = Union[Assign, ExprStmt, Return, For]


@dataclass(frozen=True)
class Param:
    name: str
    byte_width: int
    dims: tuple[int, ...] = ()

    @property
    def is_array(self) -> bool:
        return bool(self.dims)

    @property
    def elements(self) -> int:
        return prod(self.dims) if self.dims else 0


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]
    return_type: str = "void"
    line: int = 0

    def param(self, name: str) -> Param | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...]
    top: str = field(default="")

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def top_function(self) -> Function:
        return self.function(self.top)
