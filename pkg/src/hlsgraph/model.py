"""Graph network for HLS cost regression and the DeepSets baseline.

Both models read batched graphs (a disjoint union of per-configuration graphs)
and regress four log-space targets: latency, FF, LUT and DSP. Gradients come
from torch autograd; everything runs in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .directives import DEFAULT_SCHEMA, FeatureSchema

TARGETS = ("LAT", "FF", "LUT", "DSP")
CHECKPOINT_FORMAT = "hlsgraph-checkpoint"
CHECKPOINT_VERSION = 1
DTYPE = torch.float64


@dataclass(frozen=True)
class Hyperparams:
    layers: int = 4
    node_hidden: int = 128
    global_hidden: int = 256
    attention_heads: int = 2
    attention_hidden: int = 256
    leaky_slope: float = 0.2
    head_outputs: int = 4
    # DeepSets baseline
    set_hidden: int = 512
    set_layers: int = 5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"hyperparameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class Prediction:
    """Log-space outputs ln(1 + y) for LAT, FF, LUT, DSP."""

    log: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.maximum(np.expm1(self.log), 0.0)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(TARGETS, self.values.tolist()))


# -- batching ---------------------------------------------------------------

@dataclass
class GraphSample:
    x: np.ndarray           # nodes x node_width
    edge_feats: np.ndarray  # edges x 3
    src: np.ndarray
    dst: np.ndarray
    u: np.ndarray           # 12
    y: np.ndarray | None = None  # log targets


@dataclass
class GraphBatch:
    x: torch.Tensor
    edge_feats: torch.Tensor
    src: torch.Tensor
    dst: torch.Tensor
    node_graph: torch.Tensor
    u: torch.Tensor
    num_graphs: int
    y: torch.Tensor | None = None

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]


def collate(samples: Sequence[GraphSample]) -> GraphBatch:
    offsets = np.cumsum([0] + [s.x.shape[0] for s in samples])
    x = np.concatenate([s.x for s in samples])
    ef = np.concatenate([s.edge_feats for s in samples]) if samples else np.zeros((0, 3))
    src = np.concatenate([s.src + o for s, o in zip(samples, offsets)])
    dst = np.concatenate([s.dst + o for s, o in zip(samples, offsets)])
    node_graph = np.repeat(np.arange(len(samples)), np.diff(offsets))
    u = np.stack([s.u for s in samples])
    y = None
    if all(s.y is not None for s in samples):
        y = torch.as_tensor(np.stack([s.y for s in samples]), dtype=DTYPE)
    return GraphBatch(
        torch.as_tensor(x, dtype=DTYPE), torch.as_tensor(ef, dtype=DTYPE),
        torch.as_tensor(src, dtype=torch.long), torch.as_tensor(dst, dtype=torch.long),
        torch.as_tensor(node_graph, dtype=torch.long), torch.as_tensor(u, dtype=DTYPE),
        len(samples), y,
    )


# -- building blocks --------------------------------------------------------

def _linear(n_in: int, n_out: int) -> nn.Linear:
    layer = nn.Linear(n_in, n_out, dtype=DTYPE)
    nn.init.xavier_uniform_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


def _dense(n_in: int, n_out: int) -> nn.Sequential:
    return nn.Sequential(_linear(n_in, n_out), nn.ELU())


def segment_sum(values: torch.Tensor, index: torch.Tensor, n: int) -> torch.Tensor:
    out = values.new_zeros((n,) + values.shape[1:])
    return out.index_add(0, index, values)


def segment_softmax(scores: torch.Tensor, index: torch.Tensor, n: int) -> torch.Tensor:
    """Softmax of scores (rows x heads) within each segment, max-subtracted."""
    peak = scores.new_full((n, scores.shape[1]), -math.inf)
    peak = peak.scatter_reduce(0, index[:, None].expand_as(scores), scores, "amax", include_self=True)
    z = torch.exp(scores - peak[index].detach())
    return z / segment_sum(z, index, n)[index]


class Attention(nn.Module):
    """Per-node, per-head scores from (global state, node state)."""

    def __init__(self, global_dim: int, node_dim: int, hidden: int, heads: int, slope: float):
        super().__init__()
        self.net = nn.Sequential(_linear(global_dim + node_dim, hidden), nn.LeakyReLU(slope), _linear(hidden, heads))

    def forward(self, u: torch.Tensor, v: torch.Tensor, node_graph: torch.Tensor, n_graphs: int) -> torch.Tensor:
        logits = self.net(torch.cat([u[node_graph], v], dim=1))
        return segment_softmax(logits, node_graph, n_graphs)


class PropagationLayer(nn.Module):
    def __init__(self, hp: Hyperparams):
        super().__init__()
        h, g, k = hp.node_hidden, hp.global_hidden, hp.attention_heads
        self.message = nn.Sequential(_linear(2 * h, h), nn.ELU(), _linear(h, h))
        self.node_update = _dense(2 * h, h)
        self.attention = Attention(g, h, hp.attention_hidden, k, hp.leaky_slope)
        self.global_message = _dense(h, k * h)
        self.global_update = _dense(g + k * h, g)
        self.heads = k

    def forward(self, v, e, u, batch: GraphBatch):
        n = v.shape[0]
        msg = self.message(torch.cat([v[batch.src], e], dim=1))
        indeg = segment_sum(torch.ones_like(batch.dst, dtype=DTYPE), batch.dst, n).clamp(min=1.0)
        agg = segment_sum(msg, batch.dst, n) / indeg[:, None]  # nodes without in-edges get 0
        v_new = self.node_update(torch.cat([v, agg], dim=1))
        scores = self.attention(u, v_new, batch.node_graph, batch.num_graphs)
        gm = self.global_message(v).view(n, self.heads, -1)
        pooled = segment_sum((scores[:, :, None] * gm).reshape(n, -1), batch.node_graph, batch.num_graphs)
        u_new = self.global_update(torch.cat([u, pooled], dim=1))
        return v_new, u_new, scores


class GnnModel(nn.Module):
    arch = "gnn"

    def __init__(self, schema: FeatureSchema = DEFAULT_SCHEMA, hp: Hyperparams = Hyperparams(), seed: int = 0):
        super().__init__()
        self.schema, self.hp = schema, hp
        torch.manual_seed(seed)
        h, g, k = hp.node_hidden, hp.global_hidden, hp.attention_heads
        self.encode_node = _dense(schema.node_width, h)
        self.encode_edge = _dense(schema.edge_width, h)
        self.encode_global = _dense(schema.global_width, g)
        self.layers = nn.ModuleList([PropagationLayer(hp) for _ in range(hp.layers)])
        self.pool_attention = Attention(g, h, hp.attention_hidden, k, hp.leaky_slope)
        self.head = nn.Sequential(_linear(g + k * h, g), nn.ELU(), _linear(g, hp.head_outputs))

    @property
    def output_bias(self) -> torch.Tensor:
        return self.head[-1].bias

    def check_widths(self, batch: GraphBatch) -> None:
        _check_width("node", batch.x.shape[1], self.schema.node_width)
        _check_width("edge", batch.edge_feats.shape[1], self.schema.edge_width)
        _check_width("global", batch.u.shape[1], self.schema.global_width)

    def encode(self, batch: GraphBatch):
        self.check_widths(batch)
        return self.encode_node(batch.x), self.encode_edge(batch.edge_feats), self.encode_global(batch.u)

    def propagate_step(self, t: int, v, e, u, batch: GraphBatch):
        if not 1 <= t <= self.hp.layers:
            raise ValueError(f"layer index {t} outside 1..{self.hp.layers}")
        return self.layers[t - 1](v, e, u, batch)

    def readout(self, v, u, batch: GraphBatch):
        scores = self.pool_attention(u, v, batch.node_graph, batch.num_graphs)
        n = v.shape[0]
        weighted = (scores[:, :, None] * v[:, None, :]).reshape(n, -1)
        pooled = segment_sum(weighted, batch.node_graph, batch.num_graphs)
        return self.head(torch.cat([u, pooled], dim=1)), scores

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        v, e, u = self.encode(batch)
        for t in range(1, self.hp.layers + 1):
            v, u, _ = self.propagate_step(t, v, e, u, batch)
        out, _ = self.readout(v, u, batch)
        return out


class DeepSetsModel(nn.Module):
    """Per-node MLP, sum over nodes, then an MLP on the sum joined with the global vector."""

    arch = "deepsets"

    def __init__(self, schema: FeatureSchema = DEFAULT_SCHEMA, hp: Hyperparams = Hyperparams(), seed: int = 0):
        super().__init__()
        self.schema, self.hp = schema, hp
        torch.manual_seed(seed)
        w = hp.set_hidden
        layers = []
        for i in range(hp.set_layers):
            layers += [_linear(schema.node_width if i == 0 else w, w), nn.ReLU()]
        self.node_net = nn.Sequential(*layers)
        self.head = nn.Sequential(_linear(w + schema.global_width, w), nn.ReLU(), _linear(w, hp.head_outputs))

    @property
    def output_bias(self) -> torch.Tensor:
        return self.head[-1].bias

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        _check_width("node", batch.x.shape[1], self.schema.node_width)
        _check_width("global", batch.u.shape[1], self.schema.global_width)
        summed = segment_sum(self.node_net(batch.x), batch.node_graph, batch.num_graphs)
        return self.head(torch.cat([summed, batch.u], dim=1))


ARCHITECTURES = {"gnn": GnnModel, "deepsets": DeepSetsModel}


def _check_width(what: str, got: int, expected: int) -> None:
    if got != expected:
        raise ValueError(f"{what} feature width {got} does not match the model's {expected}")


def build_model(arch: str, schema: FeatureSchema = DEFAULT_SCHEMA, hp: Hyperparams = Hyperparams(), seed: int = 0):
    try:
        cls = ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
    return cls(schema, hp, seed)


def l1_loss(pred_log: torch.Tensor, target_log: torch.Tensor) -> torch.Tensor:
    """Mean absolute error in log space; the subgradient of |.| at 0 is 0."""
    return (pred_log - target_log).abs().mean()


def log_targets(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("targets must be non-negative")
    return np.log1p(values)


def loss(pred: Prediction, target) -> float:
    """Loss of one prediction against raw (de-logged) targets."""
    return float(np.mean(np.abs(pred.log - log_targets(target))))


@torch.no_grad()
def predict(model: nn.Module, samples: Sequence[GraphSample], batch_size: int = 256) -> np.ndarray:
    """Log-space predictions, one row per sample."""
    model.eval()
    out = [model(collate(samples[i:i + batch_size])).numpy() for i in range(0, len(samples), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, len(TARGETS)))


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: nn.Module, path: str | Path, extra: dict | None = None) -> None:
    tensors = [
        {"name": name, "shape": list(t.shape), "values": t.detach().reshape(-1).tolist()}
        for name, t in model.state_dict().items()
    ]
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "hyperparams": asdict(model.hp),
        "schema": model.schema.to_dict(),
        "schema_fingerprint": model.schema.fingerprint,
        "extra": extra or {},
        "tensors": tensors,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path, schema: FeatureSchema | None = None) -> nn.Module:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    stored = FeatureSchema.from_dict(doc["schema"])
    if stored.fingerprint != doc["schema_fingerprint"]:
        raise ValueError(f"{path}: schema fingerprint does not match the stored schema")
    if schema is not None and schema.fingerprint != stored.fingerprint:
        raise ValueError(f"{path}: checkpoint schema {stored.fingerprint} differs from dataset schema {schema.fingerprint}")
    model = build_model(doc["arch"], stored, Hyperparams(**doc["hyperparams"]))
    state = {}
    for item in doc["tensors"]:
        state[item["name"]] = torch.tensor(item["values"], dtype=DTYPE).reshape(item["shape"])
    model.load_state_dict(state)
    model.checkpoint_extra = doc.get("extra", {})
    return model
