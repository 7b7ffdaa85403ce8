"""Analytic stand-in for an HLS tool.

Given a parsed program, its configuration space and a SyntheticDesignSpec, the
oracle returns (LAT, FF, LUT, DSP) for any configuration. Formulas:

Memory parallelism of array a
    ports(resource) * banks(a), banks = factor (cyclic), max(1, factor/2)
    (block), array length (complete); a bare factor acts cyclic, no directive means 1.
    ports: RAM_1P 1, RAM_2P 2, RAM_S2P 1.5, RAM_T2P 2; default 1.

Latency, recursively over statements of the top function
    straight-line statement: op_cycles * ops
    loop: trip / s * latency(body) + loop_overhead,
          s = min(unroll, memory parallelism of the body's arrays that carry a
                  memory directive in the space,
                  1 if the body calls a non-inlined function,
                  dep_saturation if loop-carried else unroll_saturation)
    call: latency(callee) + call_overhead (0 when inlined)
    LAT = base_latency + latency(top body)

Resources, with r = product of effective unroll factors of enclosing loops
    FF  = ff_base  + ff_per_op  * sum(ops * r) + ff_per_bank  * sum_a ports(a) * ln(1 + banks(a))
    LUT = lut_base + lut_per_op * sum(ops * r) + lut_per_bank * sum_a mem_lut(a) * ln(1 + banks(a))
    DSP = dsp_per_mul * sum(multiplies * r)
    A non-inlined callee is instantiated once (r = 1) plus a call_ff handshake per call site.
    Multiplies by a constant map to shifts and need no DSP.

FF, LUT and DSP are rounded to integers. With noise > 0, every output is
scaled by a deterministic factor (1 + noise * N(0, 1)) seeded by the
configuration index.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .directives import ConfigurationSpace, DirectiveType, FeatureSchema, DEFAULT_SCHEMA
from .frontend.cfg import loop_carried_dependency
from .frontend.syntax import Assign, BinOp, Call, Const, ExprStmt, For, Function, Index, Program, Return, Unary, Var

PORTS = {"RAM_1P": 1.0, "RAM_2P": 2.0, "RAM_S2P": 1.5, "RAM_T2P": 2.0}
MEM_LUT = {"RAM_1P": 1.0, "RAM_2P": 1.3, "RAM_S2P": 1.2, "RAM_T2P": 1.6}


@dataclass(frozen=True)
class SyntheticDesignSpec:
    base_latency: float = 20.0
    op_cycles: float = 1.0
    loop_overhead: float = 2.0
    unroll_saturation: float = 16.0
    dep_saturation: float = 4.0
    call_overhead: float = 4.0
    ff_base: float = 150.0
    ff_per_op: float = 32.0
    ff_per_bank: float = 40.0
    lut_base: float = 300.0
    lut_per_op: float = 45.0
    lut_per_bank: float = 70.0
    call_ff: float = 60.0
    dsp_per_mul: float = 3.0
    noise: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "noise":
                if value < 0:
                    raise ValueError("noise amplitude must be non-negative")
            elif value <= 0:
                raise ValueError(f"synthetic coefficient {f.name} must be positive")

    @classmethod
    def sampled(cls, seed: int, noise: float = 0.0) -> "SyntheticDesignSpec":
        """Coefficients drawn around the defaults so designs differ."""
        rng = np.random.default_rng(seed)
        base = cls()
        values = {}
        for f in fields(cls):
            if f.name in ("noise", "dsp_per_mul", "unroll_saturation", "dep_saturation"):
                continue
            values[f.name] = round(float(getattr(base, f.name) * rng.uniform(0.6, 1.6)), 3)
        return cls(**values, noise=noise)

    def to_dict(self) -> dict:
        return asdict(self)


# -- expression statistics --------------------------------------------------

@dataclass
class _Stats:
    ops: int = 0
    muls: int = 0


def _expr_stats(e, st: _Stats, calls: list) -> None:
    if isinstance(e, BinOp):
        st.ops += 1
        if e.op == "*" and not isinstance(e.left, Const) and not isinstance(e.right, Const):
            st.muls += 1
        _expr_stats(e.left, st, calls)
        _expr_stats(e.right, st, calls)
    elif isinstance(e, Unary):
        st.ops += 1
        _expr_stats(e.operand, st, calls)
    elif isinstance(e, Index):
        st.ops += 1
        for sub in e.indices:
            _expr_stats(sub, st, calls)
    elif isinstance(e, Call):
        calls.append(e)
        for a in e.args:
            _expr_stats(a, st, calls)


def _stmt_stats(s) -> tuple[_Stats, list]:
    st, calls = _Stats(), []
    if isinstance(s, Assign):
        _expr_stats(s.value, st, calls)
        if isinstance(s.target, Index):
            st.ops += 1  # store
            for sub in s.target.indices:
                _expr_stats(sub, st, calls)
        if s.op != "=":
            st.ops += 1 + isinstance(s.target, Index)  # operator plus reload of the target
            if s.op == "*=" and not isinstance(s.value, Const):
                st.muls += 1
    elif isinstance(s, ExprStmt):
        _expr_stats(s.call, st, calls)
    elif isinstance(s, Return) and s.value is not None:
        _expr_stats(s.value, st, calls)
    return st, calls


def _arrays_in(e, out: set) -> None:
    if isinstance(e, Index):
        out.add(e.array)
        for sub in e.indices:
            _arrays_in(sub, out)
    elif isinstance(e, BinOp):
        _arrays_in(e.left, out)
        _arrays_in(e.right, out)
    elif isinstance(e, Unary):
        _arrays_in(e.operand, out)
    elif isinstance(e, Call):
        for a in e.args:
            _arrays_in(a, out)


class SyntheticOracle:
    """Deterministic cost model of one design."""

    def __init__(self, program: Program, space: ConfigurationSpace, spec: SyntheticDesignSpec,
                 schema: FeatureSchema = DEFAULT_SCHEMA):
        self.program, self.space, self.spec, self.schema = program, space, spec, schema
        self.top = program.top_function
        self._dep = {}
        self._index_loops(self.top)
        # arrays without memory directives are left to the tool and never throttle a loop
        memory = (DirectiveType.RESOURCE, DirectiveType.PARTITION_TYPE, DirectiveType.PARTITION_FACTOR)
        self.constrained = {str(d.target) for d in space.directives if d.dtype in memory}

    def _index_loops(self, function: Function) -> None:
        counter = [0]

        def visit(stmts):
            for s in stmts:
                if isinstance(s, For):
                    label = s.label or f"loop{counter[0]}"
                    counter[0] += 1
                    self._dep[id(s)] = (label, loop_carried_dependency(s, function))
                    visit(s.body)

        visit(function.body)

    # configuration lookup
    def _settings(self, config: Sequence[int]) -> dict:
        out: dict = {}
        for d, value in zip(self.space.directives, self.space.check(config)):
            vocab = self.schema.vocab(d.dtype)
            out[(d.dtype, str(d.target))] = vocab[value] if vocab is not None else value
        return out

    def _banks(self, array: str, cfg: dict) -> float:
        ptype = cfg.get((DirectiveType.PARTITION_TYPE, array))
        factor = cfg.get((DirectiveType.PARTITION_FACTOR, array), 1)
        if ptype == "complete":
            return float(self.top.param(array).elements)
        if ptype == "block":
            return max(1.0, factor / 2)
        return float(factor)

    def _ports(self, array: str, cfg: dict) -> float:
        return PORTS.get(cfg.get((DirectiveType.RESOURCE, array), "RAM_1P"), 1.0)

    def _inlined(self, callee: str, cfg: dict) -> bool:
        value = cfg.get((DirectiveType.INLINE, callee), "off")
        return value in ("on", 1, True)

    # latency
    def _latency(self, stmts, cfg, binding: dict, top: bool) -> tuple[float, set, bool]:
        """(cycles, top-level arrays touched, contains a shared call)."""
        total, arrays, shared = 0.0, set(), False
        for s in stmts:
            if isinstance(s, For):
                body, inner_arrays, inner_shared = self._latency(s.body, cfg, binding, top)
                label, dep = self._dep.get(id(s), ("", True))
                unroll = min(cfg.get((DirectiveType.UNROLL, label), 1), s.trip_count) if top else 1
                par = min((self._ports(a, cfg) * self._banks(a, cfg) for a in inner_arrays & self.constrained), default=math.inf)
                cap = self.spec.dep_saturation if dep else self.spec.unroll_saturation
                speed = min(unroll, par, cap, 1.0 if inner_shared else math.inf)
                total += s.trip_count / speed * body + self.spec.loop_overhead
                arrays |= inner_arrays
                shared |= inner_shared
                continue
            st, calls = _stmt_stats(s)
            total += self.spec.op_cycles * st.ops
            local: set = set()
            if isinstance(s, Assign):
                _arrays_in(s.value, local)
                _arrays_in(s.target, local)
            elif isinstance(s, ExprStmt):
                _arrays_in(s.call, local)
            elif isinstance(s, Return) and s.value is not None:
                _arrays_in(s.value, local)
            arrays |= {binding.get(a, a) for a in local}
            for call in calls:
                callee = self.program.function(call.name)
                inner_binding = self._bind(callee, call, binding)
                body, inner_arrays, _ = self._latency(callee.body, cfg, inner_binding, False)
                inlined = self._inlined(call.name, cfg)
                total += body + (0.0 if inlined else self.spec.call_overhead)
                arrays |= inner_arrays
                shared |= not inlined
        return total, arrays, shared

    def _bind(self, callee: Function, call: Call, binding: dict) -> dict:
        out = {}
        for p, arg in zip(callee.params, call.args):
            if p.is_array and isinstance(arg, Var):
                out[p.name] = binding.get(arg.name, arg.name)
        return out

    # resources
    def _work(self, stmts, cfg, rep: float, top: bool, acc: dict) -> None:
        for s in stmts:
            if isinstance(s, For):
                label, _ = self._dep.get(id(s), ("", True))
                unroll = min(cfg.get((DirectiveType.UNROLL, label), 1), s.trip_count) if top else 1
                self._work(s.body, cfg, rep * unroll, top, acc)
                continue
            st, calls = _stmt_stats(s)
            acc["ops"] += st.ops * rep
            acc["muls"] += st.muls * rep
            for call in calls:
                callee = self.program.function(call.name)
                if self._inlined(call.name, cfg):
                    self._work(callee.body, cfg, rep, False, acc)
                else:
                    acc["call_sites"] += 1
                    if call.name not in acc["instances"]:
                        acc["instances"].add(call.name)
                        self._work(callee.body, cfg, 1.0, False, acc)

    def evaluate(self, config: Sequence[int]) -> tuple[float, int, int, int]:
        cfg = self._settings(config)
        sp = self.spec
        cycles, _, _ = self._latency(self.top.body, cfg, {}, True)
        lat = sp.base_latency + cycles
        acc = {"ops": 0.0, "muls": 0.0, "call_sites": 0, "instances": set()}
        self._work(self.top.body, cfg, 1.0, True, acc)
        arrays = [p.name for p in self.top.params if p.is_array]
        mem_ff = sum(self._ports(a, cfg) * math.log1p(self._banks(a, cfg)) for a in arrays)
        mem_lut = sum(MEM_LUT.get(cfg.get((DirectiveType.RESOURCE, a), "RAM_1P"), 1.0)
                      * math.log1p(self._banks(a, cfg)) for a in arrays)
        ff = sp.ff_base + sp.ff_per_op * acc["ops"] + sp.ff_per_bank * mem_ff + sp.call_ff * acc["call_sites"]
        lut = sp.lut_base + sp.lut_per_op * acc["ops"] + sp.lut_per_bank * mem_lut
        dsp = sp.dsp_per_mul * acc["muls"]
        if sp.noise > 0:
            rng = np.random.default_rng(self.space.index_of(config))
            lat, ff, lut, dsp = (x * max(0.0, 1.0 + sp.noise * rng.standard_normal()) for x in (lat, ff, lut, dsp))
        return float(lat), int(round(ff)), int(round(lut)), int(round(dsp))
