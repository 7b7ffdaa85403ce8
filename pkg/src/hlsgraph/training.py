"""Training, fine-tuning and evaluation loops."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .data import Dataset, SynthesisRecord, make_samples
from .graph_ir import EdgeKind
from .model import TARGETS, GraphSample, collate, l1_loss, predict

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 800
    batch_size: int = 128
    lr: float = 1e-3
    lr_min: float = 1e-4
    grad_clip: float = 3.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        for name in ("epochs", "batch_size", "lr", "lr_min", "grad_clip", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"train config: {name} must be positive")


@dataclass(frozen=True)
class FinetuneConfig:
    max_samples: int = 128
    sample_fraction: float = 0.05
    updates: int = 150
    batch_size: int = 32
    lr: float = 1e-3
    grad_clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in ("max_samples", "sample_fraction", "updates", "batch_size", "lr", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"finetune config: {name} must be positive")

    def budget(self, space_size: int) -> int:
        return sample_budget(space_size, self.max_samples, self.sample_fraction)


def sample_budget(space_size: int, cap: int = 128, fraction: float = 0.05) -> int:
    # round before ceil so 0.05 * 4704 == 235.2 does not pick up float error
    return min(cap, math.ceil(round(fraction * space_size, 9)))


def load_configs(path: str | Path) -> tuple[TrainConfig, FinetuneConfig]:
    """Read {"train": {...}, "finetune": {...}}; missing keys keep defaults."""
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - {"train", "finetune"}
    if unknown:
        raise ValueError(f"{path}: unknown section(s) {sorted(unknown)}")
    out = []
    for cls, key in ((TrainConfig, "train"), (FinetuneConfig, "finetune")):
        section = doc.get(key, {})
        names = {f.name for f in fields(cls)}
        bad = set(section) - names
        if bad:
            raise ValueError(f"{path}: [{key}] unknown field(s) {sorted(bad)}")
        out.append(cls(**section))
    return out[0], out[1]


def save_configs(path: str | Path, train: TrainConfig, finetune: FinetuneConfig) -> None:
    Path(path).write_text(json.dumps({"train": asdict(train), "finetune": asdict(finetune)}, indent=1) + "\n")


# -- splitting --------------------------------------------------------------

@dataclass
class Split:
    train: dict[str, list[SynthesisRecord]] = field(default_factory=dict)
    val: dict[str, list[SynthesisRecord]] = field(default_factory=dict)
    test: dict[str, list[SynthesisRecord]] = field(default_factory=dict)


def split_records(records: Sequence[SynthesisRecord], seed: int) -> tuple[list, list, list]:
    """70/10/20 by floor(10%) validation, floor(20%) test, remainder train."""
    n = len(records)
    if n < 10:
        raise ValueError(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val, n_test = n // 10, n // 5
    val = [records[i] for i in order[:n_val]]
    test = [records[i] for i in order[n_val:n_val + n_test]]
    train = [records[i] for i in order[n_val + n_test:]]
    return train, val, test


def split(dataset: Dataset, seed: int = 0) -> Split:
    out = Split()
    for k, d in enumerate(dataset.designs):
        out.train[d.design_id], out.val[d.design_id], out.test[d.design_id] = split_records(d.records, seed + 1000 * k)
    return out


def samples_for(dataset: Dataset, records: dict[str, list[SynthesisRecord]],
                drop_edges: Iterable[EdgeKind] = ()) -> list[GraphSample]:
    out = []
    drop = tuple(drop_edges)
    for d in dataset.designs:
        if records.get(d.design_id):
            out += make_samples(d, records[d.design_id], dataset.schema, drop)
    return out


# -- optimization -----------------------------------------------------------

def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Epoch-level cosine annealing from cfg.lr (epoch 0) to cfg.lr_min (last epoch)."""
    if cfg.epochs == 1:
        return cfg.lr
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1 + math.cos(math.pi * epoch / (cfg.epochs - 1)))


def _step(model, optimizer, batch, clip: float) -> tuple[float, float]:
    optimizer.zero_grad()
    loss = l1_loss(model(batch), batch.y)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value}")
    loss.backward()
    norm = torch.nn.utils.clip_grad_norm_(model.parameters(), clip).item()
    optimizer.step()
    return value, norm


def log_mae(model, samples: Sequence[GraphSample]) -> float:
    if not samples:
        return float("nan")
    pred = predict(model, samples)
    return float(np.mean(np.abs(pred - np.stack([s.y for s in samples]))))


def init_output_bias(model, samples: Sequence[GraphSample]) -> None:
    """Start the regression head at the mean log target."""
    with torch.no_grad():
        model.output_bias.copy_(torch.as_tensor(np.mean([s.y for s in samples], axis=0)))


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list[dict]
    best_epoch: int

    @property
    def best_val(self) -> float:
        return self.history[self.best_epoch]["val_mae"]


def train(model, train_samples: Sequence[GraphSample], val_samples: Sequence[GraphSample],
          cfg: TrainConfig = TrainConfig(), log_path: str | Path | None = None) -> TrainResult:
    """Adam with cosine-annealed lr and global-norm clipping; keeps the best-validation weights."""
    if not train_samples:
        raise ValueError("empty training set")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    init_output_bias(model, train_samples)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    history, best_state, best_epoch, best_val = [], None, 0, math.inf
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        order = rng.permutation(len(train_samples))
        losses, weights = [], []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = collate([train_samples[i] for i in idx])
            try:
                value, _ = _step(model, optimizer, batch, cfg.grad_clip)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch starting at {start}: {exc}; lr={lr:.3g}") from None
            losses.append(value)
            weights.append(len(idx))
        train_loss = float(np.average(losses, weights=weights))
        val = log_mae(model, val_samples) if val_samples else train_loss
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_mae": val})
        if val < best_val:
            best_val, best_epoch = val, epoch
            best_state = copy.deepcopy(model.state_dict())
        log.debug("epoch %d lr %.3g train %.4f val %.4f", epoch, lr, train_loss, val)
    model.load_state_dict(best_state)
    if log_path is not None:
        write_history(history, log_path)
    return TrainResult(model, history, best_epoch)


def write_history(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_mae"])
        for row in history:
            w.writerow([row["epoch"], repr(row["lr"]), repr(row["train_loss"]), repr(row["val_mae"])])


def finetune(pretrained, samples: Sequence[GraphSample], cfg: FinetuneConfig = FinetuneConfig(),
             space_size: int | None = None) -> tuple[torch.nn.Module, list[float]]:
    """Exactly cfg.updates Adam steps on reshuffled minibatches; returns a new model."""
    if not samples:
        raise ValueError("fine-tuning needs at least one target sample")
    if space_size is not None and len(samples) > cfg.budget(space_size):
        raise ValueError(f"{len(samples)} samples exceed the budget of {cfg.budget(space_size)}")
    model = copy.deepcopy(pretrained)
    model.train()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    losses: list[float] = []
    order: list[int] = []
    bs = min(cfg.batch_size, len(samples))
    for _ in range(cfg.updates):
        if len(order) < bs:
            order += rng.permutation(len(samples)).tolist()
        idx, order = order[:bs], order[bs:]
        value, _ = _step(model, optimizer, collate([samples[i] for i in idx]), cfg.grad_clip)
        losses.append(value)
    return model, losses


# -- metrics ----------------------------------------------------------------

@dataclass
class Metrics:
    mape: dict[str, float]
    mae: dict[str, float]
    count: int

    @property
    def mean_mape(self) -> float:
        return float(np.mean(list(self.mape.values())))


def metrics_from_values(pred: np.ndarray, true: np.ndarray) -> Metrics:
    """MAPE (percent, skipping zero targets; 0.0 if all zero) and MAE in original units."""
    pred, true = np.atleast_2d(pred), np.atleast_2d(true)
    mape, mae = {}, {}
    for k, name in enumerate(TARGETS):
        err = np.abs(pred[:, k] - true[:, k])
        mae[name] = float(err.mean())
        nz = true[:, k] != 0
        mape[name] = float(100.0 * np.mean(err[nz] / np.abs(true[nz, k]))) if nz.any() else 0.0
    return Metrics(mape, mae, len(true))


def evaluate(model, samples: Sequence[GraphSample]) -> Metrics:
    if not samples:
        raise ValueError("evaluate needs at least one record")
    pred = np.maximum(np.expm1(predict(model, samples)), 0.0)
    true = np.expm1(np.stack([s.y for s in samples]))
    return metrics_from_values(pred, true)
