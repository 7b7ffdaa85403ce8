"""Pareto fronts, ADRS and model-guided design space exploration."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import DesignData, SynthesisRecord, make_samples
from .directives import FeatureSchema
from .model import predict
from .training import FinetuneConfig, finetune

log = logging.getLogger(__name__)

DEVICE_PROFILE_ENV = "HLSGRAPH_DEVICE_PROFILE"
DEFAULT_CAPACITIES = {"FF": 548160, "LUT": 274080, "DSP": 2520}


@dataclass(frozen=True)
class CostPoint:
    latency: float
    area: float
    index: int = -1  # configuration index in its space

    def __post_init__(self):
        if not (np.isfinite(self.latency) and np.isfinite(self.area)):
            raise ValueError("cost point coordinates must be finite")
        if self.latency <= 0 or self.area < 0:
            raise ValueError(f"invalid cost point ({self.latency}, {self.area})")


def dominates(a: CostPoint, b: CostPoint) -> bool:
    return a.latency <= b.latency and a.area <= b.area and (a.latency, a.area) != (b.latency, b.area)


def pareto_front(points: Sequence[CostPoint]) -> list[CostPoint]:
    """Non-dominated points, sorted by (latency, area, index); exact duplicates all kept."""
    ordered = sorted(points, key=lambda p: (p.latency, p.area, p.index))
    front: list[CostPoint] = []
    best_area = np.inf
    i = 0
    while i < len(ordered):
        # points sharing a latency: only those at the group's minimum area can survive
        j = i
        while j < len(ordered) and ordered[j].latency == ordered[i].latency:
            j += 1
        group_min = ordered[i].area
        if group_min < best_area:
            front += [p for p in ordered[i:j] if p.area == group_min]
            best_area = group_min
        i = j
    return front


def iterative_fronts(points: Sequence[CostPoint], k: int = 5) -> list[list[CostPoint]]:
    """Up to k successive Pareto fronts, each computed after removing the previous ones."""
    if k < 1:
        raise ValueError("number of fronts must be at least 1")
    remaining = list(points)
    fronts = []
    for _ in range(k):
        if not remaining:
            break
        front = pareto_front(remaining)
        taken = {id(p) for p in front}
        remaining = [p for p in remaining if id(p) not in taken]
        fronts.append(front)
    return fronts


def load_capacities(path: str | Path | None = None) -> dict[str, float]:
    """FF/LUT/DSP capacities from a device profile (argument, env var, or built-in placeholder)."""
    path = path or os.environ.get(DEVICE_PROFILE_ENV)
    if not path:
        return dict(DEFAULT_CAPACITIES)
    doc = json.loads(Path(path).read_text())
    caps = {k: float(doc[k]) for k in ("FF", "LUT", "DSP")}
    for k, v in caps.items():
        if v <= 0:
            raise ValueError(f"{path}: capacity {k} must be positive")
    return caps


def aggregate_area(ff: float, lut: float, dsp: float, capacities: dict[str, float] | None = None) -> float:
    caps = capacities or DEFAULT_CAPACITIES
    for k in ("FF", "LUT", "DSP"):
        if caps[k] <= 0:
            raise ValueError(f"capacity {k} must be positive")
    return ff / caps["FF"] + lut / caps["LUT"] + dsp / caps["DSP"]


def adrs(reference: Sequence[CostPoint], approx: Sequence[CostPoint]) -> float:
    """Mean over distinct reference points of the distance to the closest approximate point."""
    if not reference or not approx:
        raise ValueError("ADRS needs two non-empty fronts")
    # duplicated reference coordinates count once
    ref = np.unique(np.array([[p.latency, p.area] for p in reference]), axis=0)
    ref_l, ref_a = ref[:, :1], ref[:, 1:]
    app_a = np.array([p.area for p in approx])[None, :]
    app_l = np.array([p.latency for p in approx])[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(ref_a > 0, (app_a - ref_a) / ref_a, np.where(app_a > ref_a, np.inf, 0.0))
    dl = (app_l - ref_l) / ref_l
    d = np.maximum(0.0, np.maximum(da, dl))
    return float(d.min(axis=1).mean())


# -- exploration ------------------------------------------------------------

Oracle = Callable[[tuple], tuple]  # config -> (LAT, FF, LUT, DSP)


@dataclass(frozen=True)
class DseConfig:
    fronts: int = 5
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    budget: int | None = None  # overrides the fine-tuning budget rule
    seed: int = 0


@dataclass
class FrontStep:
    k: int
    candidates: int
    synthesis_count: int
    adrs: float


@dataclass
class DseReport:
    design_id: str
    samples: list[int]
    fronts: list[list[int]]
    steps: list[FrontStep]
    queried: dict[int, tuple]
    predicted: dict[int, tuple]
    reference: list[int]
    seed: int = 0

    @property
    def synthesis_count(self) -> int:
        return self.steps[-1].synthesis_count if self.steps else len(self.samples)

    @property
    def final_adrs(self) -> float:
        return self.steps[-1].adrs

    def to_dict(self) -> dict:
        return {
            "design_id": self.design_id,
            "seed": self.seed,
            "samples": self.samples,
            "fronts": self.fronts,
            "steps": [vars(s) for s in self.steps],
            "synthesis_count": self.synthesis_count,
            "adrs": self.final_adrs,
            "reference_front": self.reference,
        }


def cost_of(values: Sequence[float], index: int, capacities: dict[str, float]) -> CostPoint:
    lat, ff, lut, dsp = values
    return CostPoint(max(float(lat), 1e-9), aggregate_area(ff, lut, dsp, capacities), index)


def run_dse(model, design: DesignData, oracle: Oracle, schema: FeatureSchema, cfg: DseConfig = DseConfig(),
            capacities: dict[str, float] | None = None,
            ground_truth: Sequence[SynthesisRecord] | None = None) -> DseReport:
    """Sample, fine-tune, predict the whole space, query the first K predicted fronts.

    ADRS after front k compares the true front of the synthesizable subset
    (ground_truth, or the oracle over the whole space) with the true Pareto
    front of everything queried so far, fine-tuning samples included.
    """
    caps = capacities or load_capacities()
    space = design.space
    configs = list(space)
    budget = cfg.budget if cfg.budget is not None else cfg.finetune.budget(space.size)
    if budget > space.size:
        log.warning("sample budget %d exceeds space size %d; clamping", budget, space.size)
        budget = space.size
    rng = np.random.default_rng(cfg.seed)
    sample_idx = sorted(rng.choice(space.size, size=budget, replace=False).tolist())

    queried: dict[int, tuple] = {i: tuple(oracle(configs[i])) for i in sample_idx}
    sample_records = [SynthesisRecord(space.design_id, configs[i], *queried[i]) for i in sample_idx]
    tuned, _ = finetune(model, make_samples(design, sample_records, schema),
                        FinetuneConfig(**{**vars(cfg.finetune), "max_samples": max(budget, 1), "seed": cfg.seed}))
    pred_log = predict(tuned, make_samples(design, None, schema, configs=configs))
    pred_vals = np.maximum(np.expm1(pred_log), 0.0)
    predicted = {i: tuple(pred_vals[i].tolist()) for i in range(len(configs))}
    fronts = iterative_fronts([cost_of(pred_vals[i], i, caps) for i in range(len(configs))], cfg.fronts)

    if ground_truth is not None:
        truth = [cost_of(r.targets, space.index_of(r.config), caps) for r in ground_truth]
    else:
        truth = [cost_of(oracle(c), i, caps) for i, c in enumerate(configs)]
    reference = pareto_front(truth)

    steps = []
    for k, front in enumerate(fronts, start=1):
        new = [p.index for p in front if p.index not in queried]
        for i in new:
            queried[i] = tuple(oracle(configs[i]))
        found = pareto_front([cost_of(v, i, caps) for i, v in queried.items()])
        steps.append(FrontStep(k, len(front), len(queried), adrs(reference, found)))
    return DseReport(space.design_id, sample_idx, [[p.index for p in f] for f in fronts], steps,
                     queried, predicted, [p.index for p in reference], cfg.seed)
