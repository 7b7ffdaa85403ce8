"""Synthesis directives, configuration spaces, node features and global attributes."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from math import prod
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .graph_ir import NODE_KINDS, EdgeKind, HcdfgGraph, NodeKind

SPACE_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1


class DirectiveType(str, Enum):
    RESOURCE = "resource"
    PARTITION_TYPE = "partition_type"
    PARTITION_FACTOR = "partition_factor"
    UNROLL = "unroll"
    INLINE = "inline"


DTYPES = tuple(DirectiveType)
CATEGORICAL = {DirectiveType.RESOURCE, DirectiveType.PARTITION_TYPE, DirectiveType.INLINE}


class UnresolvedTarget(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    """Node feature layout and the vocabularies of categorical directives.

    Layout: kind one-hot (6) | block/param attributes (10) | resource one-hot
    with a trailing "none" slot | partition-type one-hot with "none" |
    ln(1+partition factor) | ln(1+unroll factor) | inline flag.
    """

    resource_vocab: tuple[str, ...] = ("RAM_1P", "RAM_2P", "RAM_S2P", "RAM_T2P")
    partition_type_vocab: tuple[str, ...] = ("block", "cyclic", "complete")
    inline_vocab: tuple[str, ...] = ("off", "on")

    ATTRIBUTE_SLOTS = (
        "ln_instr_count", "ln_trip_count", "loop_carried_dep", "ln_stride",
        "ln_callee_param_count", "ln_callee_invocations", "ln_callee_instr_count",
        "is_array_param", "ln_data_type_bytes", "ln_array_elements",
    )

    def vocab(self, dtype: DirectiveType) -> tuple[str, ...] | None:
        return {
            DirectiveType.RESOURCE: self.resource_vocab,
            DirectiveType.PARTITION_TYPE: self.partition_type_vocab,
            DirectiveType.INLINE: self.inline_vocab,
        }.get(dtype)

    @property
    def slot_names(self) -> list[str]:
        names = [f"kind_{k.value}" for k in NODE_KINDS]
        names += list(self.ATTRIBUTE_SLOTS)
        names += [f"resource_{v}" for v in self.resource_vocab] + ["resource_none"]
        names += [f"ptype_{v}" for v in self.partition_type_vocab] + ["ptype_none"]
        names += ["ln_partition_factor", "ln_unroll", "inline"]
        return names

    @property
    def node_width(self) -> int:
        return len(self.slot_names)

    @property
    def edge_width(self) -> int:
        return len(EdgeKind)

    global_width = 12

    def offset(self, slot: str) -> int:
        return self.slot_names.index(slot)

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "resource_vocab": list(self.resource_vocab),
            "partition_type_vocab": list(self.partition_type_vocab),
            "inline_vocab": list(self.inline_vocab),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        allowed = {"schema_version", "resource_vocab", "partition_type_vocab", "inline_vocab"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"feature schema: unknown field(s) {sorted(unknown)}")
        if doc.get("schema_version", MANIFEST_SCHEMA_VERSION) != MANIFEST_SCHEMA_VERSION:
            raise ValueError(f"feature schema: unsupported schema_version {doc['schema_version']!r}")
        default = cls()
        return cls(
            tuple(doc.get("resource_vocab", default.resource_vocab)),
            tuple(doc.get("partition_type_vocab", default.partition_type_vocab)),
            tuple(doc.get("inline_vocab", default.inline_vocab)),
        )

    @property
    def fingerprint(self) -> str:
        text = json.dumps({"slots": self.slot_names, **self.to_dict()}, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


DEFAULT_SCHEMA = FeatureSchema()


@dataclass(frozen=True)
class Directive:
    target: str | int
    dtype: DirectiveType
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dtype", DirectiveType(self.dtype))
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if not self.values:
            raise ValueError(f"directive {self.name}: empty value set")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"directive {self.name}: duplicate values")
        if self.dtype in (DirectiveType.PARTITION_FACTOR, DirectiveType.UNROLL):
            if min(self.values) < 1:
                raise ValueError(f"directive {self.name}: factors must be positive integers")
        elif min(self.values) < 0:
            raise ValueError(f"directive {self.name}: categorical indices must be >= 0")

    @property
    def name(self) -> str:
        return f"{self.dtype.value}@{self.target}"


Configuration = tuple  # one chosen value per directive, in directive order


@dataclass(frozen=True)
class ConfigurationSpace:
    design_id: str
    directives: tuple[Directive, ...]
    normalization: tuple[tuple[float, ...], tuple[float, ...]] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "directives", tuple(self.directives))
        keys = [(d.target, d.dtype) for d in self.directives]
        if len(set(keys)) != len(keys):
            raise ValueError(f"space {self.design_id}: two directives of the same type on one target")

    @property
    def size(self) -> int:
        return prod(len(d.values) for d in self.directives)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.directives]

    def __iter__(self) -> Iterator[Configuration]:
        return enumerate_space(self)

    def contains(self, config: Sequence[int]) -> bool:
        return len(config) == len(self.directives) and all(
            v in d.values for v, d in zip(config, self.directives))

    def check(self, config: Sequence[int]) -> Configuration:
        if len(config) != len(self.directives):
            raise ValueError(f"configuration has {len(config)} values, space {self.design_id} has {len(self.directives)} directives")
        for v, d in zip(config, self.directives):
            if v not in d.values:
                raise ValueError(f"value {v} not admissible for directive {d.name} (allowed {list(d.values)})")
        return tuple(int(v) for v in config)

    def index_of(self, config: Sequence[int]) -> int:
        idx = 0
        for v, d in zip(self.check(config), self.directives):
            idx = idx * len(d.values) + d.values.index(v)
        return idx

    def config_at(self, index: int) -> Configuration:
        if not 0 <= index < self.size:
            raise IndexError(index)
        out = []
        for d in reversed(self.directives):
            index, r = divmod(index, len(d.values))
            out.append(d.values[r])
        return tuple(reversed(out))

    def value_matrix(self) -> np.ndarray:
        """All configurations as rows, in enumeration order."""
        if not self.directives:
            return np.zeros((1, 0))
        grids = np.meshgrid(*[np.asarray(d.values, dtype=float) for d in self.directives], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)


def enumerate_space(space: ConfigurationSpace) -> Iterator[Configuration]:
    """Every configuration once, lexicographic in value-set position (last directive fastest)."""
    return itertools.product(*[d.values for d in space.directives])


# -- global attributes ------------------------------------------------------

def _grouped(space: ConfigurationSpace) -> list[list[int]]:
    return [[i for i, d in enumerate(space.directives) if d.dtype is t] for t in DTYPES]


def space_vector(space: ConfigurationSpace) -> tuple[np.ndarray, np.ndarray]:
    """Per directive type, mean and median over the union of admissible values."""
    s = np.zeros(len(DTYPES))
    s_med = np.zeros(len(DTYPES))
    for k, cols in enumerate(_grouped(space)):
        if cols:
            values = sorted({v for i in cols for v in space.directives[i].values})
            s[k] = np.mean(values)
            s_med[k] = np.median(values)
    return s, s_med


def config_vector(space: ConfigurationSpace, config: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    c = np.zeros(len(DTYPES))
    c_med = np.zeros(len(DTYPES))
    for k, cols in enumerate(_grouped(space)):
        if cols:
            values = [config[i] for i in cols]
            c[k] = np.mean(values)
            c_med[k] = np.median(values)
    return c, c_med


_NORMALIZATION_SAMPLES = 50_000


def normalization(space: ConfigurationSpace, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Standard deviation over the space of each (s - c) and (s' - c') component.

    Spaces larger than 50k configurations are estimated from a seeded sample.
    Components that never vary get a scale of 1.
    """
    if space.normalization is not None:
        return np.asarray(space.normalization[0]), np.asarray(space.normalization[1])
    if space.size <= _NORMALIZATION_SAMPLES:
        values = space.value_matrix()
    else:
        rng = np.random.default_rng(seed)
        values = np.stack([rng.choice(np.asarray(d.values, float), _NORMALIZATION_SAMPLES)
                           for d in space.directives], axis=1)
    std = np.ones(len(DTYPES))
    std_med = np.ones(len(DTYPES))
    for k, cols in enumerate(_grouped(space)):
        if cols:
            sub = values[:, cols]
            a = sub.mean(axis=1).std()
            b = np.median(sub, axis=1).std()
            std[k] = a if a > 1e-12 else 1.0
            std_med[k] = b if b > 1e-12 else 1.0
    return std, std_med


def with_normalization(space: ConfigurationSpace) -> ConfigurationSpace:
    std, std_med = normalization(space)
    return ConfigurationSpace(space.design_id, space.directives, (tuple(std.tolist()), tuple(std_med.tolist())))


def global_attrs(space: ConfigurationSpace, config: Sequence[int], l: float, p: float,
                 normalize: bool = True) -> np.ndarray:
    """12-dim global vector: ln(1+l), ln(1+p), scaled (s - c), scaled (s' - c')."""
    config = space.check(config)
    s, s_med = space_vector(space)
    c, c_med = config_vector(space, config)
    diff, diff_med = s - c, s_med - c_med
    if normalize:
        std, std_med = normalization(space)
        diff, diff_med = diff / std, diff_med / std_med
    return np.concatenate([[np.log1p(l), np.log1p(p)], diff, diff_med])


# -- node features ----------------------------------------------------------

class FeatureEncoder:
    """Encodes (graph, configuration) pairs of one design into feature matrices."""

    def __init__(self, graph: HcdfgGraph, space: ConfigurationSpace, schema: FeatureSchema = DEFAULT_SCHEMA):
        self.graph, self.space, self.schema = graph, space, schema
        self.targets = [resolve_target(graph, d.target) for d in space.directives]
        for d in space.directives:
            vocab = schema.vocab(d.dtype)
            if vocab is not None and max(d.values) >= len(vocab):
                raise ValueError(f"directive {d.name}: value index outside the {d.dtype.value} vocabulary")
        self.base = self._base_matrix()
        kinds = {EdgeKind.CONTROL: 0, EdgeKind.DATA: 1, EdgeKind.PARAM_FLOW: 2}
        index = graph.index_of()
        self.edge_src = np.array([index[e.src] for e in graph.edges], dtype=np.int64)
        self.edge_dst = np.array([index[e.dst] for e in graph.edges], dtype=np.int64)
        self.edge_feats = np.zeros((len(graph.edges), schema.edge_width))
        self.edge_feats[np.arange(len(graph.edges)), [kinds[e.kind] for e in graph.edges]] = 1.0
        self.l = float(graph.globals.get("instr_count", sum(n.attrs.instr_count for n in graph.nodes)))
        self.p = float(graph.globals.get("param_count", sum(n.kind is NodeKind.PARAM for n in graph.nodes)))

    def _base_matrix(self) -> np.ndarray:
        schema = self.schema
        x = np.zeros((len(self.graph.nodes), schema.node_width))
        attr0 = len(NODE_KINDS)
        for row, node in enumerate(self.graph.nodes):
            a = node.attrs
            x[row, NODE_KINDS.index(node.kind)] = 1.0
            x[row, attr0:attr0 + 10] = [
                np.log1p(a.instr_count), np.log1p(a.trip_count), float(a.loop_carried_dep), np.log1p(a.stride),
                np.log1p(a.callee_param_count), np.log1p(a.callee_invocations), np.log1p(a.callee_instr_count),
                float(a.is_array_param), np.log1p(a.data_type_bytes), np.log1p(a.array_elements),
            ]
        x[:, schema.offset("resource_none")] = 1.0
        x[:, schema.offset("ptype_none")] = 1.0
        return x

    def node_features(self, config: Sequence[int]) -> np.ndarray:
        config = self.space.check(config)
        schema = self.schema
        x = self.base.copy()
        for d, rows, value in zip(self.space.directives, self.targets, config):
            if d.dtype is DirectiveType.RESOURCE:
                x[rows, schema.offset("resource_none")] = 0.0
                x[rows, schema.offset(f"resource_{schema.resource_vocab[value]}")] = 1.0
            elif d.dtype is DirectiveType.PARTITION_TYPE:
                x[rows, schema.offset("ptype_none")] = 0.0
                x[rows, schema.offset(f"ptype_{schema.partition_type_vocab[value]}")] = 1.0
            elif d.dtype is DirectiveType.PARTITION_FACTOR:
                x[rows, schema.offset("ln_partition_factor")] = np.log1p(value)
            elif d.dtype is DirectiveType.UNROLL:
                x[rows, schema.offset("ln_unroll")] = np.log1p(value)
            else:
                x[rows, schema.offset("inline")] = float(value)
        return x

    def global_features(self, config: Sequence[int]) -> np.ndarray:
        return global_attrs(self.space, config, self.l, self.p)


def resolve_target(graph: HcdfgGraph, target: str | int) -> list[int]:
    """Row indices of the nodes a directive target names (node id or label)."""
    if isinstance(target, int):
        rows = [i for i, n in enumerate(graph.nodes) if n.id == target]
    else:
        rows = [i for i, n in enumerate(graph.nodes) if n.label == target]
    if not rows:
        raise UnresolvedTarget(f"directive target {target!r} does not match any node of {graph.design_id}")
    return rows


def encode_features(graph: HcdfgGraph, space: ConfigurationSpace, config: Sequence[int],
                    schema: FeatureSchema = DEFAULT_SCHEMA) -> tuple[np.ndarray, np.ndarray]:
    """Node feature matrix (nodes x schema.node_width) and edge one-hot matrix (edges x 3)."""
    enc = FeatureEncoder(graph, space, schema)
    return enc.node_features(config), enc.edge_feats


# -- files ------------------------------------------------------------------

def space_to_document(space: ConfigurationSpace, schema: FeatureSchema = DEFAULT_SCHEMA) -> dict:
    directives = []
    for d in space.directives:
        vocab = schema.vocab(d.dtype)
        values = [vocab[v] for v in d.values] if vocab is not None else list(d.values)
        directives.append({"target": d.target, "type": d.dtype.value, "values": values})
    doc = {"schema_version": SPACE_SCHEMA_VERSION, "design_id": space.design_id, "directives": directives}
    if space.normalization is not None:
        doc["normalization"] = {"mean": list(space.normalization[0]), "median": list(space.normalization[1])}
    return doc


def space_from_document(doc: dict, schema: FeatureSchema = DEFAULT_SCHEMA) -> ConfigurationSpace:
    allowed = {"schema_version", "design_id", "directives", "normalization"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"space: unknown field(s) {sorted(unknown)}")
    if doc.get("schema_version") != SPACE_SCHEMA_VERSION:
        raise ValueError(f"space: unsupported schema_version {doc.get('schema_version')!r}")
    directives = []
    for i, item in enumerate(doc["directives"]):
        extra = set(item) - {"target", "type", "values"}
        if extra:
            raise ValueError(f"space.directives[{i}]: unknown field(s) {sorted(extra)}")
        try:
            dtype = DirectiveType(item["type"])
        except ValueError:
            raise ValueError(f"space.directives[{i}]: unknown directive type {item['type']!r}") from None
        vocab = schema.vocab(dtype)
        values = []
        for v in item["values"]:
            if isinstance(v, str):
                if vocab is None or v not in vocab:
                    raise ValueError(f"space.directives[{i}]: value {v!r} not in the {dtype.value} vocabulary")
                v = vocab.index(v)
            values.append(v)
        directives.append(Directive(item["target"], dtype, tuple(values)))
    norm = doc.get("normalization")
    if norm is not None:
        norm = (tuple(norm["mean"]), tuple(norm["median"]))
    return ConfigurationSpace(doc["design_id"], tuple(directives), norm)


def save_space(space: ConfigurationSpace, path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> None:
    Path(path).write_text(json.dumps(space_to_document(space, schema), indent=1) + "\n")


def load_space(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> ConfigurationSpace:
    return space_from_document(json.loads(Path(path).read_text()), schema)


def save_schema(schema: FeatureSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=1) + "\n")


def load_schema(path: str | Path) -> FeatureSchema:
    return FeatureSchema.from_dict(json.loads(Path(path).read_text()))
