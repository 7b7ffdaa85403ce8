import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlsgraph.data import (
    DatasetError, SynthesisRecord, build_bundled, corpus_entries, generate_synthetic,
    holdout_design, ingest, read_records, save_dataset, write_records,
)
from hlsgraph.directives import ConfigurationSpace, Directive, DirectiveType as D
from hlsgraph.dse import CostPoint, dominates, pareto_front
from hlsgraph.frontend import parse
from hlsgraph.synthetic import SyntheticDesignSpec, SyntheticOracle

KERNEL = """void k(int a[64], int b[64], int c[64]) {
    L: for (int i = 0; i < 64; i++) { b[i] = a[i] * c[i] + 1; }
}"""


def kernel_space():
    return ConfigurationSpace("k", (Directive("L", D.UNROLL, (1, 2, 4, 8)), Directive("a", D.PARTITION_FACTOR, (1, 2, 4, 8))))


def kernel_oracle(spec=SyntheticDesignSpec()):
    return SyntheticOracle(parse(KERNEL), kernel_space(), spec)


# hand evaluation with the default coefficients: 5 ops (two loads, mul, add, store), 1 multiply,
# only `a` carries a memory directive, the loop has no carried dependence
@pytest.mark.parametrize("unroll, factor, expected", [
    (1, 1, (342.0, round(150 + 32 * 5 + 40 * 3 * math.log(2)), round(300 + 45 * 5 + 70 * 3 * math.log(2)), 3)),
    (4, 8, (102.0, 933, 1451, 12)),
    (8, 2, (182.0, round(150 + 32 * 40 + 40 * (math.log(3) + 2 * math.log(2))),
            round(300 + 45 * 40 + 70 * (math.log(3) + 2 * math.log(2))), 24)),
])
def test_oracle_matches_hand_formula(unroll, factor, expected):
    assert kernel_oracle().evaluate((unroll, factor)) == expected


def test_identity_configuration_is_base_plus_work():
    spec = SyntheticDesignSpec()
    lat, *_ = kernel_oracle(spec).evaluate((1, 1))
    assert lat == spec.base_latency + 64 * 5 * spec.op_cycles + spec.loop_overhead


def test_doubling_unroll_with_ample_partitioning_halves_loop_term():
    spec = SyntheticDesignSpec()
    o = kernel_oracle(spec)
    term = lambda u: o.evaluate((u, 8))[0] - spec.base_latency - spec.loop_overhead
    assert term(2) == 2 * term(4) and term(4) == 2 * term(8)


def test_under_partitioning_saturates():
    o = kernel_oracle()
    assert o.evaluate((8, 2))[0] == o.evaluate((2, 2))[0]
    assert o.evaluate((8, 2))[1] > o.evaluate((2, 2))[1]   # more unrolled hardware, no speedup


def test_carried_dependence_caps_speedup():
    src = "void k(int a[64]) { L: for (int i = 1; i < 64; i++) { a[i] = a[i - 1] + 1; } }"
    space = ConfigurationSpace("k", (Directive("L", D.UNROLL, (1, 4, 8, 16)),))
    o = SyntheticOracle(parse(src), space, SyntheticDesignSpec())
    assert o.evaluate((8,))[0] == o.evaluate((16,))[0] == o.evaluate((4,))[0] < o.evaluate((1,))[0]


def test_constant_multiply_uses_no_dsp():
    src = "void k(int a[8]) { for (int i = 0; i < 8; i++) { a[i] = a[i] * 3; } }"
    o = SyntheticOracle(parse(src), ConfigurationSpace("k", ()), SyntheticDesignSpec())
    assert o.evaluate(())[3] == 0


def test_spec_rejects_nonpositive_coefficients():
    with pytest.raises(ValueError):
        SyntheticDesignSpec(op_cycles=0)
    with pytest.raises(ValueError):
        SyntheticDesignSpec(noise=-0.1)


def test_sampled_specs_differ_and_are_reproducible():
    assert SyntheticDesignSpec.sampled(1) == SyntheticDesignSpec.sampled(1) != SyntheticDesignSpec.sampled(2)


def test_generation_is_pure():
    a = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space())
    b = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space())
    assert a.records == b.records
    o = kernel_oracle()
    assert all(o.evaluate(c) == o.evaluate(c) for c in kernel_space())


def test_four_by_four_space_gives_sixteen_records_and_exact_front():
    d = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space())
    assert len(d.records) == 16 and len({r.config for r in d.records}) == 16
    points = [CostPoint(r.LAT, r.FF + r.LUT + r.DSP, i) for i, r in enumerate(d.records)]
    brute = [p for p in points if not any(dominates(q, p) for q in points)]
    assert sorted(p.index for p in pareto_front(points)) == sorted(p.index for p in brute)


def test_parallel_generation_matches_serial():
    serial = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space(), jobs=1)
    parallel = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space(), jobs=2)
    assert serial.records == parallel.records


def test_noise_is_deterministic_per_configuration():
    noisy = SyntheticDesignSpec(noise=0.05)
    a, b = kernel_oracle(noisy), kernel_oracle(noisy)
    assert [a.evaluate(c) for c in kernel_space()] == [b.evaluate(c) for c in kernel_space()]
    assert a.evaluate((1, 1)) != kernel_oracle().evaluate((1, 1))


# -- monotonicity over every bundled design ---------------------------------------

def _neighbours(space, kinds):
    """Pairs of configurations that differ by one step up in a directive of the given kinds."""
    for c in space:
        for j, d in enumerate(space.directives):
            if d.dtype not in kinds:
                continue
            pos = d.values.index(c[j])
            if pos + 1 < len(d.values) and d.values[pos + 1] > c[j]:
                yield c, c[:j] + (d.values[pos + 1],) + c[j + 1:]


@pytest.mark.parametrize("entry", corpus_entries("corpus"), ids=lambda e: e["design_id"])
def test_more_parallelism_never_slows_and_never_shrinks(entry):
    design = build_bundled("corpus", [entry["design_id"]]).design(entry["design_id"])
    by_config = {r.config: r for r in design.records}
    checked = 0
    for lo, hi in _neighbours(design.space, (D.UNROLL, D.PARTITION_FACTOR)):
        a, b = by_config[lo], by_config[hi]
        assert b.LAT <= a.LAT
        assert b.FF >= a.FF and b.LUT >= a.LUT and b.DSP >= a.DSP
        checked += 1
    assert checked > 0


@pytest.mark.parametrize("entry", corpus_entries("corpus"), ids=lambda e: e["design_id"])
def test_bundled_designs_have_a_real_tradeoff(entry):
    design = build_bundled("corpus", [entry["design_id"]]).design(entry["design_id"])
    lat = np.array([r.LAT for r in design.records])
    ff = np.array([r.FF for r in design.records])
    assert lat.max() / lat.min() > 2 and ff.max() / ff.min() > 1.5
    points = [CostPoint(r.LAT, r.FF + r.LUT, i) for i, r in enumerate(design.records)]
    assert len(pareto_front(points)) > 3


def test_bundled_sets():
    corpus = build_bundled("corpus")
    assert corpus.design_ids == ["vadd", "scan", "matvec", "stencil", "hist", "gemm"]
    assert holdout_design() == "gemm"
    assert all(len(d.records) == d.space.size >= 384 for d in corpus.designs)
    fixture = build_bundled("fixture")
    assert {d.design_id: d.space.size for d in fixture.designs} == {"vadd": 120, "scan": 96, "matvec": 96}
    assert fixture.totals()["configurations"] == 312


# -- records -------------------------------------------------------------------------

def test_record_validation():
    with pytest.raises(ValueError):
        SynthesisRecord("d", (1,), -1.0, 0, 0, 0)
    with pytest.raises(ValueError):
        SynthesisRecord("d", (1,), float("inf"), 0, 0, 0)


# -- dataset directories -------------------------------------------------------------

def test_ingest_roundtrip_is_idempotent(tmp_path):
    data = build_bundled("fixture")
    save_dataset(data, tmp_path / "a")
    back = ingest(tmp_path / "a")
    assert back.design_ids == data.design_ids
    for x, y in zip(back.designs, data.designs):
        assert x.records == y.records and x.space == y.space and x.graph == y.graph
    save_dataset(back, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_empty_directory_warns(tmp_path):
    with pytest.warns(UserWarning, match="empty"):
        data = ingest(tmp_path)
    assert data.designs == []


def test_out_of_space_value_names_directive(tmp_path):
    design = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space())
    path = tmp_path / "records.csv"
    write_records(path, design.space, design.records)
    lines = path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[1] = "3"                       # unroll 3 is not in {1, 2, 4, 8}
    lines[3] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r"records.csv:4: directive unroll@L"):
        read_records(path, design.space)


@pytest.mark.parametrize("mutate, needle", [
    (lambda l: l.replace("design_id", "design"), ":1: header"),
    (lambda l: l + ",9", "columns"),
    (lambda l: l.replace("k,", "q,", 1), "design_id"),
])
def test_malformed_record_files(tmp_path, mutate, needle):
    design = generate_synthetic(SyntheticDesignSpec(), KERNEL, kernel_space())
    path = tmp_path / "records.csv"
    write_records(path, design.space, design.records)
    lines = path.read_text().splitlines()
    idx = 0 if needle == ":1: header" else 2
    lines[idx] = mutate(lines[idx])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=needle):
        read_records(path, design.space)


def test_missing_manifest_rejected(tmp_path):
    (tmp_path / "junk.txt").write_text("x")
    with pytest.raises(DatasetError, match="manifest"):
        ingest(tmp_path)


def test_record_file_keeps_exact_floats(tmp_path):
    space = ConfigurationSpace("k", (Directive("L", D.UNROLL, (1, 2)),))
    recs = [SynthesisRecord("k", (1,), 0.1 + 0.2, 1, 2, 3), SynthesisRecord("k", (2,), 1e-300, 0, 0, 0)]
    write_records(tmp_path / "r.csv", space, recs)
    assert read_records(tmp_path / "r.csv", space) == recs


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["RAM_1P", "RAM_2P", "RAM_S2P", "RAM_T2P"]), min_size=1, max_size=4, unique=True),
       st.lists(st.integers(1, 64), min_size=1, max_size=4, unique=True))
def test_categorical_values_roundtrip_by_name(tmp_path_factory, resources, factors):
    from hlsgraph.directives import DEFAULT_SCHEMA
    space = ConfigurationSpace("k", (
        Directive("a", D.RESOURCE, tuple(DEFAULT_SCHEMA.resource_vocab.index(r) for r in resources)),
        Directive("a", D.PARTITION_FACTOR, tuple(factors)),
    ))
    recs = [SynthesisRecord("k", c, 1.5, 1, 1, 0) for c in space]
    path = tmp_path_factory.mktemp("r") / "r.csv"
    write_records(path, space, recs)
    assert read_records(path, space) == recs
    assert set(path.read_text().splitlines()[1].split(",")[1:2]) <= set(resources)
