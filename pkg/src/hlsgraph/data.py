"""Synthesis records, dataset directories, and the bundled synthetic corpus.

Dataset directory layout::

    manifest.json            feature schema + design list
    <design>/graph.json      HCDFG document
    <design>/space.json      configuration space
    <design>/records.csv     design_id, one column per directive, LAT, FF, LUT, DSP
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .directives import (
    DEFAULT_SCHEMA, ConfigurationSpace, FeatureEncoder, FeatureSchema, space_from_document,
    space_to_document, with_normalization,
)
from .frontend import build_hcdfg, parse
from .frontend.syntax import Program
from .graph_ir import HcdfgGraph, ablate_edges, EdgeKind, load_graph, save_graph
from .model import TARGETS, GraphSample, log_targets
from .synthetic import SyntheticDesignSpec, SyntheticOracle

MANIFEST_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SynthesisRecord:
    design_id: str
    config: tuple[int, ...]
    LAT: float
    FF: int
    LUT: int
    DSP: int

    def __post_init__(self):
        values = self.targets
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"record of {self.design_id}: targets must be finite and non-negative")

    @property
    def targets(self) -> np.ndarray:
        return np.array([self.LAT, self.FF, self.LUT, self.DSP], dtype=float)


@dataclass
class DesignData:
    graph: HcdfgGraph
    space: ConfigurationSpace
    records: list[SynthesisRecord]

    @property
    def design_id(self) -> str:
        return self.space.design_id

    def encoder(self, schema: FeatureSchema, drop_edges: Iterable[EdgeKind] = ()) -> FeatureEncoder:
        graph = ablate_edges(self.graph, drop_edges) if drop_edges else self.graph
        return FeatureEncoder(graph, self.space, schema)


@dataclass
class Dataset:
    designs: list[DesignData] = field(default_factory=list)
    schema: FeatureSchema = DEFAULT_SCHEMA

    def design(self, design_id: str) -> DesignData:
        for d in self.designs:
            if d.design_id == design_id:
                return d
        raise KeyError(design_id)

    @property
    def design_ids(self) -> list[str]:
        return [d.design_id for d in self.designs]

    def subset(self, design_ids: Iterable[str]) -> "Dataset":
        wanted = set(design_ids)
        return Dataset([d for d in self.designs if d.design_id in wanted], self.schema)

    def totals(self) -> dict:
        return {
            "designs": len(self.designs),
            "configurations": sum(d.space.size for d in self.designs),
            "records": sum(len(d.records) for d in self.designs),
        }


# -- samples for the models -------------------------------------------------

def make_samples(design: DesignData, records: Sequence[SynthesisRecord] | None, schema: FeatureSchema,
                 drop_edges: Iterable[EdgeKind] = (), configs: Sequence[Sequence[int]] | None = None) -> list[GraphSample]:
    """Model inputs for records (with targets) or bare configurations (without)."""
    enc = design.encoder(schema, tuple(drop_edges))
    items = [(r.config, log_targets(r.targets)) for r in records] if records is not None else [(c, None) for c in configs]
    return [GraphSample(enc.node_features(c), enc.edge_feats, enc.edge_src, enc.edge_dst,
                        enc.global_features(c), y) for c, y in items]


# -- synthetic generation ---------------------------------------------------

def generate_synthetic(spec: SyntheticDesignSpec, program: Program | str, space: ConfigurationSpace,
                       schema: FeatureSchema = DEFAULT_SCHEMA, jobs: int = 1) -> DesignData:
    """Graph, space (with normalization constants) and a record for every configuration."""
    if isinstance(program, str):
        program = parse(program)
    graph = build_hcdfg(program, space.design_id)
    space = with_normalization(space)
    oracle = SyntheticOracle(program, space, spec, schema)
    configs = list(space)

    def run(config):
        return SynthesisRecord(space.design_id, tuple(config), *oracle.evaluate(config))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            records = list(pool.map(run, configs))
    else:
        records = [run(c) for c in configs]
    FeatureEncoder(graph, space, schema)  # fail early on unresolved targets
    return DesignData(graph, space, records)


def _corpus_doc() -> dict:
    return json.loads(resources.files("hlsgraph.corpus").joinpath("designs.json").read_text())


def corpus_entries(which: str = "corpus") -> list[dict]:
    doc = _corpus_doc()
    if which not in ("corpus", "fixture"):
        raise ValueError(f"unknown bundled set {which!r}; choose corpus or fixture")
    return doc[which]


def holdout_design() -> str:
    return _corpus_doc()["holdout"]


def corpus_source(name: str) -> str:
    return resources.files("hlsgraph.corpus").joinpath(name).read_text()


def entry_space(entry: dict, schema: FeatureSchema = DEFAULT_SCHEMA) -> ConfigurationSpace:
    return space_from_document({"schema_version": 1, "design_id": entry["design_id"],
                                "directives": entry["directives"]}, schema)


def build_bundled(which: str = "corpus", designs: Iterable[str] | None = None, noise: float = 0.0,
                  schema: FeatureSchema = DEFAULT_SCHEMA) -> Dataset:
    """Generate the bundled synthetic designs (all, or the named subset)."""
    wanted = set(designs) if designs is not None else None
    out = []
    for entry in corpus_entries(which):
        if wanted is not None and entry["design_id"] not in wanted:
            continue
        spec = SyntheticDesignSpec.sampled(entry["spec_seed"], noise)
        out.append(generate_synthetic(spec, corpus_source(entry["source"]), entry_space(entry, schema), schema))
    return Dataset(out, schema)


def bundled_oracle(design_id: str, which: str = "corpus", schema: FeatureSchema = DEFAULT_SCHEMA) -> SyntheticOracle:
    for entry in corpus_entries(which):
        if entry["design_id"] == design_id:
            space = with_normalization(entry_space(entry, schema))
            spec = SyntheticDesignSpec.sampled(entry["spec_seed"])
            return SyntheticOracle(parse(corpus_source(entry["source"])), space, spec, schema)
    raise KeyError(design_id)


# -- files ------------------------------------------------------------------

def _format_value(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_records(path: Path, space: ConfigurationSpace, records: Sequence[SynthesisRecord],
                  schema: FeatureSchema = DEFAULT_SCHEMA) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design_id", *space.names, *TARGETS])
        for r in records:
            cells = []
            for d, v in zip(space.directives, r.config):
                vocab = schema.vocab(d.dtype)
                cells.append(vocab[v] if vocab is not None else str(v))
            w.writerow([r.design_id, *cells, _format_value(r.LAT), r.FF, r.LUT, r.DSP])


def read_records(path: Path, space: ConfigurationSpace, schema: FeatureSchema = DEFAULT_SCHEMA) -> list[SynthesisRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["design_id", *space.names, *TARGETS]
        if header != expected:
            raise DatasetError(f"{path}:1: header {header} does not match the space (expected {expected})")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DatasetError(f"{path}:{lineno}: expected {len(expected)} columns, got {len(row)}")
            if row[0] != space.design_id:
                raise DatasetError(f"{path}:{lineno}: design_id {row[0]!r} differs from {space.design_id!r}")
            config = []
            for d, cell in zip(space.directives, row[1:1 + len(space.directives)]):
                vocab = schema.vocab(d.dtype)
                try:
                    v = vocab.index(cell) if vocab is not None else int(cell)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: directive {d.name}: cannot read value {cell!r}") from None
                if v not in d.values:
                    raise DatasetError(f"{path}:{lineno}: directive {d.name}: value {cell} outside its value set")
                config.append(v)
            lat, ff, lut, dsp = row[-4:]
            try:
                records.append(SynthesisRecord(space.design_id, tuple(config), float(lat), int(ff), int(lut), int(dsp)))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return records


def save_dataset(dataset: Dataset, root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for d in dataset.designs:
        sub = root / d.design_id
        sub.mkdir(exist_ok=True)
        save_graph(d.graph, sub / "graph.json")
        (sub / "space.json").write_text(json.dumps(space_to_document(d.space, dataset.schema), indent=1) + "\n")
        write_records(sub / "records.csv", d.space, d.records, dataset.schema)
    manifest = {
        "schema_version": MANIFEST_VERSION,
        "feature_schema": dataset.schema.to_dict(),
        "schema_fingerprint": dataset.schema.fingerprint,
        "designs": dataset.design_ids,
        "totals": dataset.totals(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def ingest(root: str | Path) -> Dataset:
    """Load and cross-validate a dataset directory."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        if not any(root.iterdir()):
            warnings.warn(f"{root}: empty dataset directory", stacklevel=2)
            return Dataset()
        raise DatasetError(f"{manifest_path}: missing manifest")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != MANIFEST_VERSION:
        raise DatasetError(f"{manifest_path}: unsupported schema_version {manifest.get('schema_version')!r}")
    schema = FeatureSchema.from_dict(manifest.get("feature_schema", {}))
    designs = []
    for design_id in manifest["designs"]:
        sub = root / design_id
        try:
            graph = load_graph(sub / "graph.json")
            space = space_from_document(json.loads((sub / "space.json").read_text()), schema)
        except (OSError, ValueError) as exc:
            raise DatasetError(f"{sub}: {exc}") from None
        if space.design_id != design_id or graph.design_id != design_id:
            raise DatasetError(f"{sub}: design_id mismatch between manifest, graph and space")
        if space.normalization is None:
            space = with_normalization(space)
        try:
            FeatureEncoder(graph, space, schema)
        except ValueError as exc:
            raise DatasetError(f"{sub}: {exc}") from None
        designs.append(DesignData(graph, space, read_records(sub / "records.csv", space, schema)))
    return Dataset(designs, schema)
