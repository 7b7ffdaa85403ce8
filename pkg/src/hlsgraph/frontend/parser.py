"""Lexer and recursive-descent parser for the C subset (see docs/minic.md)."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .syntax import (
    Assign, BinOp, Call, Const, ExprStmt, For, Function, Index,
    Param, Program, Return, Unary, Var,
)


class FrontendError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


class ParseError(FrontendError):
    """Syntax error at a source position."""


class UnsupportedConstruct(FrontendError):
    """A valid C construct outside the accepted subset."""

    def __init__(self, construct: str, line: int = 0, col: int = 0):
        self.construct = construct
        super().__init__(f"unsupported construct: {construct}", line, col)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, op, eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<pp>\#[^\n]*)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fF]?|\d+[eE][+-]?\d+[fF]?)
  | (?P<int>0[xX][0-9a-fA-F]+[uUlL]*|\d+[uUlL]*)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op><<=|>>=|\+\+|--|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<|>>|<=|>=|==|!=|&&|\|\||->|[-+*/%<>=!~&|^?:;,.(){}\[\]])
""", re.VERBOSE | re.DOTALL)


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "pp":
            raise UnsupportedConstruct("preprocessor directive", line, col)
        if kind in ("int", "float", "ident", "op"):
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


_TYPE_WIDTHS = {"char": 1, "short": 2, "int": 4, "long": 8, "float": 4, "double": 8, "bool": 1}
_TYPE_WORDS = set(_TYPE_WIDTHS) | {"void", "unsigned", "signed", "const", "static", "volatile"}
_STDINT_RE = re.compile(r"u?int(8|16|32|64)_t$")
_ALLOC_CALLS = {"malloc", "calloc", "realloc", "free", "alloca"}
_UNSUPPORTED_KEYWORDS = {
    "while", "do", "if", "else", "switch", "case", "goto", "break", "continue",
    "struct", "union", "enum", "typedef", "sizeof",
}

# binary operator precedence, loosest first
_PRECEDENCE = [
    ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
    ("<", "<=", ">", ">="), ("<<", ">>"), ("+", "-"), ("*", "/", "%"),
]
_COMPOUND = {"+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}


def _is_type_word(text: str) -> bool:
    return text in _TYPE_WORDS or bool(_STDINT_RE.match(text))


def fold_constant(expr, where: Token | None = None):
    """Evaluate an expression built only from literals; None if it is not constant."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Unary):
        v = fold_constant(expr.operand)
        if v is None:
            return None
        return {"-": lambda x: -x, "+": lambda x: x, "~": lambda x: ~int(x), "!": lambda x: int(not x)}[expr.op](v)
    if isinstance(expr, BinOp):
        a, b = fold_constant(expr.left), fold_constant(expr.right)
        if a is None or b is None:
            return None
        op = expr.op
        if op == "/":
            if b == 0:
                return None
            return a // b if isinstance(a, int) and isinstance(b, int) else a / b
        if op == "%":
            return None if b == 0 else a % b
        table = {
            "+": a + b, "-": a - b, "*": a * b,
            "<": int(a < b), "<=": int(a <= b), ">": int(a > b), ">=": int(a >= b),
            "==": int(a == b), "!=": int(a != b), "&&": int(bool(a and b)), "||": int(bool(a or b)),
        }
        if op in table:
            return table[op]
        if isinstance(a, int) and isinstance(b, int):
            return {"<<": a << b, ">>": a >> b, "&": a & b, "|": a | b, "^": a ^ b}[op]
    return None


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0
        self.function_names: set[str] = set()
        # per-function scope
        self.scalars: set[str] = set()
        self.arrays: dict[str, Param] = {}
        self.loop_vars: list[str] = []

    # -- token helpers ------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident" or _is_type_word(self.tok.text):
            self.fail(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    def unsupported(self, construct: str, tok: Token | None = None):
        tok = tok or self.tok
        raise UnsupportedConstruct(construct, tok.line, tok.col)

    # -- top level ----------------------------------------------------------
    def parse_program(self, top: str | None = None) -> Program:
        functions = []
        while self.tok.kind != "eof":
            functions.append(self.parse_function())
        if not functions:
            self.fail("no function definition found")
        called = {c for f in functions for c in _called_names(f.body)}
        if top is None:
            roots = [f.name for f in functions if f.name not in called]
            top = roots[-1] if roots else functions[-1].name
        elif top not in self.function_names:
            raise ParseError(f"top function {top!r} is not defined")
        return Program(tuple(functions), top)

    def parse_type(self) -> tuple[str, int]:
        words = []
        while self.tok.kind == "ident" and _is_type_word(self.tok.text):
            words.append(self.advance().text)
        if not words:
            self.fail("expected a type")
        if self.at("*"):
            self.unsupported("pointer type")
        width = 4
        for w in words:
            if w in _TYPE_WIDTHS:
                width = _TYPE_WIDTHS[w]
            m = _STDINT_RE.match(w)
            if m:
                width = int(m.group(1)) // 8
        if "long" in words and "double" not in words:
            width = 8
        if [w for w in words if w not in ("const", "static", "volatile")] == ["void"]:
            return "void", 0
        return " ".join(words), width

    def parse_function(self) -> Function:
        start = self.tok
        if self.tok.kind != "ident" or not _is_type_word(self.tok.text):
            if self.tok.text in _UNSUPPORTED_KEYWORDS:
                self.unsupported(self.tok.text)
            self.fail("expected a function definition")
        ret_type, _ = self.parse_type()
        name = self.expect_ident().text
        if name in self.function_names:
            self.fail(f"function {name!r} redefined", start)
        self.expect("(")
        params = []
        if self.at("void") and self.peek().text == ")":
            self.advance()
        elif not self.at(")"):
            params.append(self.parse_param())
            while self.at(","):
                self.advance()
                params.append(self.parse_param())
        self.expect(")")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            self.fail(f"duplicate parameter name in {name!r}", start)
        self.scalars = {p.name for p in params if not p.is_array}
        self.arrays = {p.name: p for p in params if p.is_array}
        self.loop_vars = []
        self.function_names.add(name)
        body = self.parse_block()
        for i, stmt in enumerate(body):
            if isinstance(stmt, Return) and i != len(body) - 1:
                self.unsupported("early return")
        return Function(name, tuple(params), tuple(body), ret_type, start.line)

    def parse_param(self) -> Param:
        _, width = self.parse_type()
        if width == 0:
            self.fail("parameter of type void")
        name = self.expect_ident().text
        dims = []
        while self.at("["):
            tok = self.advance()
            if self.at("]"):
                self.unsupported("array parameter without a constant size", tok)
            size = fold_constant(self.parse_expr())
            if not isinstance(size, int) or size <= 0:
                self.unsupported("array parameter size is not a positive constant", tok)
            dims.append(size)
            self.expect("]")
        return Param(name, width, tuple(dims))

    # -- statements ---------------------------------------------------------
    def parse_block(self) -> list:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail("unterminated block")
            stmts.extend(self.parse_statement())
        self.expect("}")
        return stmts

    def parse_statement(self, label: str = "") -> list:
        tok = self.tok
        if self.at("{"):
            return self.parse_block()
        if self.at(";"):
            self.advance()
            return []
        if tok.kind == "ident" and tok.text in _UNSUPPORTED_KEYWORDS:
            self.unsupported(f"{tok.text} statement" if tok.text not in ("struct", "union", "enum", "typedef", "sizeof") else tok.text)
        if tok.kind == "ident" and self.peek().text == ":" and not _is_type_word(tok.text):
            self.advance()
            self.advance()
            nxt = self.parse_statement(label=tok.text)
            return nxt
        if self.at("for"):
            return [self.parse_for(label)]
        if self.at("return"):
            self.advance()
            value = None if self.at(";") else self.parse_expr()
            self.expect(";")
            return [Return(value, tok.line)]
        if tok.kind == "ident" and _is_type_word(tok.text):
            return self.parse_declaration()
        stmt = self.parse_simple_statement()
        self.expect(";")
        return [stmt]

    def parse_declaration(self) -> list:
        self.parse_type()
        out = []
        while True:
            name_tok = self.expect_ident()
            if self.at("["):
                self.unsupported("local array allocation")
            self.declare_scalar(name_tok)
            if self.at("="):
                self.advance()
                out.append(Assign(Var(name_tok.text), "=", self.parse_expr(), name_tok.line))
            if not self.at(","):
                break
            self.advance()
        self.expect(";")
        return out

    def declare_scalar(self, tok: Token):
        if tok.text in self.arrays:
            self.fail(f"{tok.text!r} redeclared", tok)
        self.scalars.add(tok.text)

    def parse_simple_statement(self):
        tok = self.tok
        if self.at("++") or self.at("--"):
            op = self.advance().text
            target = self.parse_lvalue()
            return Assign(target, "+=" if op == "++" else "-=", Const(1), tok.line)
        if tok.kind != "ident":
            self.fail("expected a statement")
        if self.peek().text == "(":
            call = self.parse_postfix()
            if not isinstance(call, Call):
                self.fail("expected a call")
            return ExprStmt(call, tok.line)
        target = self.parse_lvalue(assigning=True)
        if self.at("++") or self.at("--"):
            op = self.advance().text
            return Assign(target, "+=" if op == "++" else "-=", Const(1), tok.line)
        op_tok = self.tok
        if not (self.at("=") or op_tok.text in _COMPOUND):
            self.fail("expected an assignment")
        self.advance()
        value = self.parse_expr()
        if isinstance(target, Var) and target.name in self.loop_vars:
            self.unsupported("assignment to a loop induction variable", tok)
        return Assign(target, op_tok.text, value, tok.line)

    def parse_lvalue(self, assigning: bool = False):
        tok = self.expect_ident()
        name = tok.text
        if self.at("["):
            if name not in self.arrays:
                self.fail(f"{name!r} is not an array", tok)
            subs = self.parse_subscripts()
            if len(subs) != len(self.arrays[name].dims):
                self.fail(f"{name!r} indexed with {len(subs)} subscripts, declared with {len(self.arrays[name].dims)}", tok)
            return Index(name, subs)
        if name in self.arrays:
            self.fail(f"assignment to whole array {name!r}", tok)
        if name not in self.scalars:
            if not assigning:
                self.fail(f"undeclared identifier {name!r}", tok)
            self.scalars.add(name)
        return Var(name)

    def parse_subscripts(self) -> tuple:
        subs = []
        while self.at("["):
            self.advance()
            subs.append(self.parse_expr())
            self.expect("]")
        return tuple(subs)

    def parse_for(self, label: str) -> For:
        tok = self.expect("for")
        self.expect("(")
        if self.tok.kind == "ident" and _is_type_word(self.tok.text):
            self.parse_type()
        var_tok = self.expect_ident()
        var = var_tok.text
        if var in self.arrays:
            self.fail(f"array {var!r} used as loop variable", var_tok)
        self.scalars.add(var)
        self.expect("=")
        start = self._loop_constant(self.parse_expr(), tok, "loop start")
        self.expect(";")

        cond_tok = self.tok
        left = self.parse_expr()
        if not isinstance(left, BinOp) or left.op not in ("<", "<=", ">", ">=", "!="):
            self.unsupported("loop condition is not a simple comparison", cond_tok)
        if left.left == Var(var):
            cmp, bound_expr = left.op, left.right
        elif left.right == Var(var):
            flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "!=": "!="}
            cmp, bound_expr = flip[left.op], left.left
        else:
            self.unsupported("loop condition does not test the induction variable", cond_tok)
        stop = self._loop_constant(bound_expr, cond_tok, "loop bound")
        self.expect(";")

        step_tok = self.tok
        step = self.parse_step(var)
        self.expect(")")
        trip = _trip_count(start, stop, step, cmp)
        if trip is None:
            self.unsupported("loop does not terminate after a constant number of iterations", step_tok)

        self.loop_vars.append(var)
        body = self.parse_statement()
        self.loop_vars.pop()
        return For(var, start, step, trip, tuple(body), label, tok.line)

    def _loop_constant(self, expr, tok, what) -> int:
        value = fold_constant(expr)
        if value is None or not isinstance(value, int):
            self.unsupported(f"{what} is not a compile-time integer constant", tok)
        return value

    def parse_step(self, var: str) -> int:
        tok = self.tok
        if self.at("++") or self.at("--"):
            op = self.advance().text
            if self.expect_ident().text != var:
                self.unsupported("loop step updates a different variable", tok)
            return 1 if op == "++" else -1
        if self.expect_ident().text != var:
            self.unsupported("loop step updates a different variable", tok)
        if self.at("++") or self.at("--"):
            return 1 if self.advance().text == "++" else -1
        if self.at("+=") or self.at("-="):
            sign = 1 if self.advance().text == "+=" else -1
            return sign * self._loop_constant(self.parse_expr(), tok, "loop step")
        if self.at("="):
            self.advance()
            rhs = self.parse_expr()
            if isinstance(rhs, BinOp) and rhs.op in ("+", "-") and rhs.left == Var(var):
                sign = 1 if rhs.op == "+" else -1
                return sign * self._loop_constant(rhs.right, tok, "loop step")
        self.unsupported("loop step is not a constant increment", tok)

    # -- expressions --------------------------------------------------------
    def parse_expr(self, level: int = 0):
        if level == len(_PRECEDENCE):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _PRECEDENCE[level]:
            op = self.advance().text
            right = self.parse_expr(level + 1)
            left = BinOp(op, left, right)
        if level == 0 and self.at("?"):
            self.unsupported("conditional expression")
        return left

    def parse_unary(self):
        if self.tok.kind == "op" and self.tok.text in ("-", "+", "!", "~"):
            op = self.advance().text
            return Unary(op, self.parse_unary())
        if self.at("++") or self.at("--"):
            self.unsupported("increment inside an expression")
        if self.at("&") or self.at("*"):
            self.unsupported("pointer operation")
        if self.at("(") and self.peek().kind == "ident" and _is_type_word(self.peek().text):
            self.advance()
            self.parse_type()
            self.expect(")")
            return self.parse_unary()
        return self.parse_postfix()

    def parse_postfix(self):
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return Const(int(tok.text.rstrip("uUlL"), 0))
        if tok.kind == "float":
            self.advance()
            return Const(float(tok.text.rstrip("fF")))
        if self.at("("):
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind != "ident":
            self.fail(f"unexpected token {tok.text or 'end of input'!r}")
        name = tok.text
        if name in _UNSUPPORTED_KEYWORDS:
            self.unsupported(name)
        self.advance()
        if self.at("("):
            if name in _ALLOC_CALLS:
                self.unsupported(f"dynamic allocation ({name})", tok)
            if name not in self.function_names:
                self.fail(f"call to undefined function {name!r}", tok)
            self.advance()
            args = []
            if not self.at(")"):
                args.append(self.parse_expr())
                while self.at(","):
                    self.advance()
                    args.append(self.parse_expr())
            self.expect(")")
            return Call(name, tuple(args))
        if self.at("."):
            self.unsupported("struct member access")
        if self.at("++") or self.at("--"):
            self.unsupported("increment inside an expression")
        if self.at("["):
            if name not in self.arrays:
                self.fail(f"{name!r} is not an array", tok)
            subs = self.parse_subscripts()
            if len(subs) != len(self.arrays[name].dims):
                self.fail(f"{name!r} indexed with {len(subs)} subscripts, declared with {len(self.arrays[name].dims)}", tok)
            return Index(name, subs)
        if name in self.arrays:
            return Var(name)
        if name not in self.scalars:
            self.fail(f"undeclared identifier {name!r}", tok)
        return Var(name)


def _trip_count(start: int, stop: int, step: int, cmp: str) -> int | None:
    if step == 0:
        return None
    if cmp == "!=":
        span = stop - start
        if span % step or span / step < 0:
            return None
        return span // step
    if cmp in ("<", "<="):
        if step < 0:
            return 0 if (start >= stop if cmp == "<" else start > stop) else None
        end = stop if cmp == "<" else stop + 1
        return max(0, math.ceil((end - start) / step))
    if step > 0:
        return 0 if (start <= stop if cmp == ">" else start < stop) else None
    end = stop if cmp == ">" else stop - 1
    return max(0, math.ceil((start - end) / -step))


def _called_names(stmts) -> set[str]:
    out = set()

    def visit_expr(e):
        if isinstance(e, Call):
            out.add(e.name)
            for a in e.args:
                visit_expr(a)
        elif isinstance(e, BinOp):
            visit_expr(e.left)
            visit_expr(e.right)
        elif isinstance(e, Unary):
            visit_expr(e.operand)
        elif isinstance(e, Index):
            for i in e.indices:
                visit_expr(i)

    for s in stmts:
        if isinstance(s, For):
            out |= _called_names(s.body)
        elif isinstance(s, Assign):
            visit_expr(s.target)
            visit_expr(s.value)
        elif isinstance(s, ExprStmt):
            visit_expr(s.call)
        elif isinstance(s, Return) and s.value is not None:
            visit_expr(s.value)
    return out


def parse(source: str, top: str | None = None) -> Program:
    """Parse C-subset source text into a Program.

    The top function defaults to the last function that no other function calls.
    """
    return Parser(source).parse_program(top)
