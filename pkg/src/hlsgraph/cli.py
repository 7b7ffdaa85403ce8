"""Command-line entry point: ``hlsgraph <command> [flags]``.

Failures print one machine-readable line to stderr::

    error code=<kind> command=<name> message="<summary>"

followed by human-oriented detail, and exit with status 2 (bad usage or
input) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

log = logging.getLogger("hlsgraph")


class CliError(Exception):
    def __init__(self, code: str, message: str, detail: str = "", status: int = 2):
        super().__init__(message)
        self.code, self.message, self.detail, self.status = code, message, detail, status


# -- helpers ----------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args):
    from .data import ingest

    dataset = ingest(args.data)
    if getattr(args, "designs", None):
        names = args.designs.split(",")
        missing = set(names) - set(dataset.design_ids)
        if missing:
            raise CliError("unknown-design", f"design(s) {sorted(missing)} not in {args.data}")
        dataset = dataset.subset(names)
    if not dataset.designs:
        raise CliError("empty-dataset", f"no designs in {args.data}")
    return dataset


def _train_config(args):
    from .training import TrainConfig, load_configs

    cfg = load_configs(args.config)[0] if args.config else TrainConfig()
    overrides = {"seed": args.seed}
    for name in ("epochs", "batch_size", "lr"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    return TrainConfig(**{**vars(cfg), **overrides})


def _finetune_config(args):
    from .training import FinetuneConfig, load_configs

    cfg = load_configs(args.config)[1] if getattr(args, "config", None) else FinetuneConfig()
    overrides = {"seed": args.seed}
    for name in ("updates", "batch_size"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    return FinetuneConfig(**{**vars(cfg), **overrides})


def _drop_edges(text: str | None):
    from .graph_ir import EdgeKind

    if not text:
        return ()
    kinds = []
    for item in text.split(","):
        try:
            kind = EdgeKind(item.strip())
        except ValueError:
            kind = None
        if kind is None or kind is EdgeKind.CONTROL:
            raise CliError("bad-flag", f"cannot drop edge kind {item!r} (use data, param_flow)")
        kinds.append(kind)
    return tuple(kinds)


def _parse_config(space, text: str, schema):
    """'v1,v2,...' in directive order; categorical values may be names."""
    cells = [c.strip() for c in text.split(",")]
    if len(cells) != len(space.directives):
        raise CliError("bad-config", f"expected {len(space.directives)} values ({', '.join(space.names)}), got {len(cells)}")
    values = []
    for d, cell in zip(space.directives, cells):
        vocab = schema.vocab(d.dtype)
        if vocab is not None and cell in vocab:
            values.append(vocab.index(cell))
        else:
            try:
                values.append(int(cell))
            except ValueError:
                raise CliError("bad-config", f"directive {d.name}: cannot read {cell!r}") from None
    if not space.contains(values):
        raise CliError("bad-config", f"configuration {values} is not in the space of {space.design_id}")
    return tuple(values)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


# -- commands ---------------------------------------------------------------

def cmd_extract(args) -> None:
    from .frontend import extract_file
    from .graph_ir import save_graph, validate

    graph = extract_file(args.source, args.top, args.design_id)
    problems = validate(graph)
    if problems:
        raise CliError("invalid-graph", problems[0], "\n".join(problems), status=1)
    out = _out_dir(args)
    save_graph(graph, out / f"{graph.design_id}.graph.json")
    counts = graph.edge_counts()
    print(f"design={graph.design_id} nodes={len(graph.nodes)} "
          + " ".join(f"{k.value}_edges={v}" for k, v in counts.items()))


def cmd_gen_synthetic(args) -> None:
    from .data import build_bundled, save_dataset

    designs = args.designs.split(",") if args.designs else None
    dataset = build_bundled(args.set, designs, args.noise)
    save_dataset(dataset, _out_dir(args))
    for d in dataset.designs:
        print(f"design={d.design_id} configurations={d.space.size} nodes={len(d.graph.nodes)}")
    print("total " + " ".join(f"{k}={v}" for k, v in dataset.totals().items()))


def cmd_train(args) -> None:
    from .experiments import fit, write_metrics
    from .model import save_checkpoint
    from .plotting import training_curve

    dataset = _load_dataset(args)
    cfg = _train_config(args)
    drop = _drop_edges(args.drop_edges)
    out = _out_dir(args)
    outcome = fit(dataset, args.arch, cfg, drop, log_path=out / "metrics.csv")
    save_checkpoint(outcome.model, out / "checkpoint.json", extra={
        "drop_edges": [k.value for k in drop], "designs": dataset.design_ids,
        "best_epoch": outcome.result.best_epoch, "split_seed": cfg.seed,
    })
    write_metrics({**outcome.per_design, "all": outcome.test}, out / "test_metrics.csv", key="design")
    training_curve(outcome.result.history, out / "training_curve.png")
    print(f"best_epoch={outcome.result.best_epoch} val_mae={outcome.result.best_val:.6f}")
    print("test " + " ".join(f"MAPE_{k}={v:.3f}" for k, v in outcome.test.mape.items()))


def _checkpoint(args, schema=None):
    from .model import load_checkpoint

    return load_checkpoint(args.checkpoint, schema)


def cmd_predict(args) -> None:
    from .directives import FeatureEncoder, load_space
    from .graph_ir import ablate_edges, load_graph
    from .model import GraphSample, Prediction, TARGETS, predict

    model = _checkpoint(args)
    graph = load_graph(args.graph)
    drop = _drop_edges(",".join(getattr(model, "checkpoint_extra", {}).get("drop_edges", [])))
    if drop:
        graph = ablate_edges(graph, drop)
    space = load_space(args.space, model.schema)
    config = _parse_config(space, args.config, model.schema)
    enc = FeatureEncoder(graph, space, model.schema)
    sample = GraphSample(enc.node_features(config), enc.edge_feats, enc.edge_src, enc.edge_dst, enc.global_features(config))
    start = time.perf_counter()
    pred = Prediction(predict(model, [sample])[0])
    log.info("inference %.1f ms per graph", 1e3 * (time.perf_counter() - start))
    out = _out_dir(args)
    _write_rows(out / "prediction.csv", ["design_id", *TARGETS], [[space.design_id, *map(_fmt, pred.values)]])
    print(" ".join(f"{k}={v:.6g}" for k, v in pred.as_dict().items()))


def cmd_eval(args) -> None:
    from .experiments import write_metrics
    from .plotting import parity
    from .training import evaluate, samples_for, split

    dataset = _load_dataset(args)
    model = _checkpoint(args, dataset.schema)
    extra = getattr(model, "checkpoint_extra", {})
    drop = _drop_edges(",".join(extra.get("drop_edges", [])))
    if args.split == "all":
        chosen = {d.design_id: d.records for d in dataset.designs}
    else:
        parts = split(dataset, extra.get("split_seed", args.seed) if args.split_seed is None else args.split_seed)
        chosen = getattr(parts, args.split)
    rows = {}
    for d in dataset.design_ids:
        rows[d] = evaluate(model, samples_for(dataset.subset([d]), chosen, drop))
    samples = samples_for(dataset, chosen, drop)
    rows["all"] = evaluate(model, samples)
    out = _out_dir(args)
    write_metrics(rows, out / "eval_metrics.csv", key="design")
    from .model import predict

    pred = np.maximum(np.expm1(predict(model, samples)), 0.0)
    parity(pred, np.expm1(np.stack([s.y for s in samples])), out / "parity.png")
    print("eval " + " ".join(f"MAPE_{k}={v:.3f}" for k, v in rows["all"].mape.items()))


def cmd_finetune(args) -> None:
    from .data import SynthesisRecord, make_samples
    from .model import save_checkpoint
    from .training import finetune

    dataset = _load_dataset(args)
    design = dataset.design(args.design)
    model = _checkpoint(args, dataset.schema)
    cfg = _finetune_config(args)
    budget = args.budget or cfg.budget(design.space.size)
    budget = min(budget, len(design.records))
    rng = np.random.default_rng(args.seed)
    chosen = sorted(rng.choice(len(design.records), size=budget, replace=False).tolist())
    records: list[SynthesisRecord] = [design.records[i] for i in chosen]
    tuned, losses = finetune(model, make_samples(design, records, dataset.schema), cfg)
    out = _out_dir(args)
    save_checkpoint(tuned, out / "checkpoint.json", extra={**getattr(model, "checkpoint_extra", {}),
                                                            "finetuned_on": design.design_id})
    _write_rows(out / "finetune_loss.csv", ["update", "loss"], [[i, _fmt(v)] for i, v in enumerate(losses)])
    print(f"design={design.design_id} samples={budget} updates={len(losses)} final_loss={losses[-1]:.6f}")


def cmd_dse(args) -> None:
    from .data import bundled_oracle, build_bundled
    from .dse import DseConfig, cost_of, load_capacities, pareto_front, run_dse
    from .experiments import write_dse_steps
    from .plotting import adrs_curve, pareto_plot

    caps = load_capacities(args.device_profile)
    if args.data:
        dataset = _load_dataset(args)
        design = dataset.design(args.design)
        schema = dataset.schema
        table = {r.config: (r.LAT, r.FF, r.LUT, r.DSP) for r in design.records}

        def oracle(config):
            try:
                return table[tuple(config)]
            except KeyError:
                raise CliError("not-synthesized", f"configuration {config} has no record", status=1) from None

        ground_truth = design.records
        if len(table) != design.space.size:
            raise CliError("partial-space", f"{design.design_id}: the dataset covers {len(table)} of "
                           f"{design.space.size} configurations; dse needs the full space")
    else:
        dataset = build_bundled(args.synthetic_set, [args.design])
        if not dataset.designs:
            raise CliError("unknown-design", f"no bundled design {args.design!r}")
        design, schema = dataset.designs[0], dataset.schema
        oracle = bundled_oracle(args.design, args.synthetic_set, schema).evaluate
        ground_truth = design.records
    model = _checkpoint(args, schema)
    cfg = DseConfig(args.fronts, _finetune_config(args), args.budget, args.seed)
    report = run_dse(model, design, oracle, schema, cfg, caps, ground_truth)
    out = _out_dir(args)
    (out / "dse_report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    write_dse_steps([report], out / "adrs.csv")
    _write_rows(out / "candidates.csv", ["config_index", "front", "pred_LAT", "pred_FF", "pred_LUT", "pred_DSP",
                                         "LAT", "FF", "LUT", "DSP"],
                [[i, k + 1, *map(_fmt, report.predicted[i]), *map(_fmt, report.queried[i])]
                 for k, f in enumerate(report.fronts) for i in f])
    by_index = {design.space.index_of(r.config): cost_of(r.targets, 0, caps) for r in ground_truth}
    truth = np.array([[c.latency, c.area] for c in by_index.values()])
    ref = np.array([[by_index[i].latency, by_index[i].area] for i in report.reference])
    found = pareto_front([cost_of(v, i, caps) for i, v in report.queried.items()])
    pareto_plot(truth, ref, np.array([[p.latency, p.area] for p in found]), out / "pareto.png")
    adrs_curve([s.k for s in report.steps], [s.adrs for s in report.steps],
               [s.synthesis_count for s in report.steps], out / "adrs.png")
    for s in report.steps:
        print(f"fronts={s.k} synthesis_count={s.synthesis_count} adrs={s.adrs:.6f}")


def cmd_ablate(args) -> None:
    from .experiments import ABLATIONS, ablation, write_metrics
    from .plotting import ablation_bars

    dataset = _load_dataset(args)
    cfg = _train_config(args)
    results = ablation(dataset, cfg, args.arch)
    out = _out_dir(args)
    write_metrics(results, out / "ablation.csv")
    ablation_bars(list(ABLATIONS), {k: v.mape for k, v in results.items()}, out / "ablation.png")
    for name, m in results.items():
        print(f"setting={name} mean_MAPE={m.mean_mape:.3f} " + " ".join(f"{k}={v:.3f}" for k, v in m.mape.items()))


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlsgraph", description="HLS cost prediction with graph neural networks.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="seed for sampling, splitting and initialization")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for numeric kernels")
        p.add_argument("--out", required=True, help="output directory")
        return p

    p = command("extract", cmd_extract, "Build the HCDFG of a C source file.")
    p.add_argument("--source", required=True)
    p.add_argument("--top", help="top function (default: the last function nobody calls)")
    p.add_argument("--design-id")

    p = command("gen-synthetic", cmd_gen_synthetic, "Write a bundled synthetic dataset directory.")
    p.add_argument("--set", default="corpus", choices=["corpus", "fixture"])
    p.add_argument("--designs", help="comma-separated subset")
    p.add_argument("--noise", type=float, default=0.0)

    def training_flags(p):
        p.add_argument("--data", required=True, help="dataset directory")
        p.add_argument("--designs", help="comma-separated subset of designs")
        p.add_argument("--arch", default="gnn", choices=["gnn", "deepsets"])
        p.add_argument("--config", help="JSON training config file")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)

    p = command("train", cmd_train, "Train a model on a dataset directory.")
    training_flags(p)
    p.add_argument("--drop-edges", help="edge kinds to remove: data, param_flow")

    p = command("predict", cmd_predict, "Predict LAT/FF/LUT/DSP for one configuration.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--config", required=True, help="comma-separated values in directive order")

    p = command("eval", cmd_eval, "Per-target MAPE and MAE of a checkpoint.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--designs")
    p.add_argument("--split", default="test", choices=["all", "train", "val", "test"])
    p.add_argument("--split-seed", type=int)

    p = command("finetune", cmd_finetune, "Adapt a checkpoint to a few samples of one design.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--config")
    p.add_argument("--budget", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--batch-size", type=int)

    p = command("dse", cmd_dse, "Model-guided design space exploration of one design.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--design", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="oracle: records of a dataset directory")
    src.add_argument("--synthetic-set", default="corpus", choices=["corpus", "fixture"],
                     help="oracle: bundled synthetic cost model (default)")
    p.add_argument("--fronts", type=int, default=5)
    p.add_argument("--budget", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--config")
    p.add_argument("--device-profile", help="JSON with FF, LUT, DSP capacities")

    p = command("ablate", cmd_ablate, "Retrain under each edge-removal setting and compare MAPE.")
    training_flags(p)
    return parser


def _validate(args) -> None:
    _drop_edges(getattr(args, "drop_edges", None))
    if args.jobs < 1:
        raise CliError("bad-flag", "--jobs must be at least 1")
    for name in ("epochs", "batch_size", "updates", "budget", "fronts"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise CliError("bad-flag", f"--{name.replace('_', '-')} must be at least 1")
    for name in ("source", "data", "checkpoint", "graph", "space", "config", "device_profile"):
        value = getattr(args, name, None)
        if value and name != "config" and not Path(value).exists():
            raise CliError("missing-input", f"--{name.replace('_', '-')} path {value} does not exist")
    if args.command != "predict" and getattr(args, "config", None) and not Path(args.config).exists():
        raise CliError("missing-input", f"--config path {args.config} does not exist")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        import torch

        torch.set_num_threads(args.jobs)
        args.func(args)
        return 0
    except CliError as exc:
        return _fail(args.command, exc.code, exc.message, exc.detail, exc.status)
    except Exception as exc:  # noqa: BLE001 - report every failure in the machine-readable format
        from .data import DatasetError
        from .frontend import FrontendError

        if isinstance(exc, FrontendError):
            return _fail(args.command, "frontend", str(exc), "", 2)
        if isinstance(exc, DatasetError):
            return _fail(args.command, "dataset", str(exc), "", 2)
        if isinstance(exc, (ValueError, KeyError)):
            return _fail(args.command, "invalid-input", str(exc), type(exc).__name__, 2)
        if isinstance(exc, OSError):
            return _fail(args.command, "io", str(exc), type(exc).__name__, 1)
        return _fail(args.command, "internal", str(exc), repr(exc), 1)


def _fail(command: str, code: str, message: str, detail: str, status: int) -> int:
    summary = message.replace("\n", " ").replace('"', "'")
    print(f'error code={code} command={command} message="{summary}"', file=sys.stderr)
    if detail:
        print(detail, file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
