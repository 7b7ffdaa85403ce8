"""End-to-end runs shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .data import Dataset
from .dse import DseConfig, DseReport, run_dse
from .graph_ir import EdgeKind
from .model import TARGETS, Hyperparams, build_model
from .training import Metrics, Split, TrainConfig, TrainResult, evaluate, samples_for, split, train

ABLATIONS: dict[str, tuple[EdgeKind, ...]] = {
    "full": (),
    "no-data": (EdgeKind.DATA,),
    "no-param": (EdgeKind.PARAM_FLOW,),
    "neither": (EdgeKind.DATA, EdgeKind.PARAM_FLOW),
}


@dataclass
class FitOutcome:
    result: TrainResult
    split: Split
    test: Metrics
    per_design: dict[str, Metrics]

    @property
    def model(self):
        return self.result.model


def fit(dataset: Dataset, arch: str = "gnn", cfg: TrainConfig = TrainConfig(), drop_edges: Iterable[EdgeKind] = (),
        split_seed: int | None = None, hp: Hyperparams = Hyperparams(), log_path: str | Path | None = None) -> FitOutcome:
    """Split, train, and score on the held-out test records."""
    drop = tuple(drop_edges)
    parts = split(dataset, cfg.seed if split_seed is None else split_seed)
    model = build_model(arch, dataset.schema, hp, seed=cfg.seed)
    result = train(model, samples_for(dataset, parts.train, drop), samples_for(dataset, parts.val, drop), cfg, log_path)
    test = evaluate(result.model, samples_for(dataset, parts.test, drop))
    per_design = {
        d: evaluate(result.model, samples_for(dataset.subset([d]), parts.test, drop)) for d in dataset.design_ids
    }
    return FitOutcome(result, parts, test, per_design)


def ablation(dataset: Dataset, cfg: TrainConfig, arch: str = "gnn", settings: Sequence[str] = tuple(ABLATIONS),
             hp: Hyperparams = Hyperparams()) -> dict[str, Metrics]:
    """Retrain and evaluate under each edge-removal setting, same split and seed."""
    return {s: fit(dataset, arch, cfg, ABLATIONS[s], hp=hp).test for s in settings}


def write_metrics(rows: dict[str, Metrics], path: str | Path, key: str = "setting") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key, *[f"MAPE_{t}" for t in TARGETS], "MAPE_mean", *[f"MAE_{t}" for t in TARGETS], "count"])
        for name, m in rows.items():
            w.writerow([name, *[repr(m.mape[t]) for t in TARGETS], repr(m.mean_mape),
                        *[repr(m.mae[t]) for t in TARGETS], m.count])


def write_dse_steps(reports: Sequence[DseReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "fronts", "candidates", "synthesis_count", "adrs"])
        for rep in reports:
            for s in rep.steps:
                w.writerow([rep.seed, s.k, s.candidates, s.synthesis_count, repr(s.adrs)])


def dse_over_seeds(model, design, oracle, schema, seeds: Sequence[int], cfg: DseConfig = DseConfig(),
                   ground_truth=None) -> list[DseReport]:
    out = []
    for seed in seeds:
        out.append(run_dse(model, design, oracle, schema, DseConfig(cfg.fronts, cfg.finetune, cfg.budget, seed),
                           ground_truth=ground_truth))
    return out
