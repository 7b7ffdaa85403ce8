import math

import numpy as np
import pytest
import torch

from hlsgraph.data import DesignData, make_samples
from hlsgraph.directives import DEFAULT_SCHEMA, ConfigurationSpace, Directive, DirectiveType as D
from hlsgraph.frontend import build_hcdfg
from hlsgraph.graph_ir import EdgeKind
from hlsgraph.model import (
    GraphSample, Hyperparams, Prediction, build_model, collate, load_checkpoint, log_targets, loss, predict,
    save_checkpoint, segment_sum,
)

TINY = Hyperparams(layers=2, node_hidden=3, global_hidden=4, attention_heads=2, attention_hidden=5,
                   set_hidden=6, set_layers=2)
SMALL = Hyperparams(layers=3, node_hidden=8, global_hidden=10, attention_heads=2, attention_hidden=12,
                    set_hidden=16, set_layers=3)


def random_sample(rng, n_min=2, n_max=14):
    n = int(rng.integers(n_min, n_max + 1))
    m = int(rng.integers(0, 3 * n))
    src, dst = rng.integers(0, n, m), rng.integers(0, n, m)
    ef = np.eye(3)[rng.integers(0, 3, m)]
    x = rng.normal(size=(n, DEFAULT_SCHEMA.node_width))
    u = rng.normal(size=DEFAULT_SCHEMA.global_width)
    return GraphSample(x, ef, src, dst, u, rng.normal(size=4))


def permuted(s: GraphSample, rng) -> GraphSample:
    perm = rng.permutation(len(s.x))      # new position -> old node
    where = np.argsort(perm)              # old node -> new position
    eperm = rng.permutation(len(s.src))
    return GraphSample(s.x[perm], s.edge_feats[eperm], where[s.src[eperm]], where[s.dst[eperm]], s.u, s.y)


def forward(model, samples):
    model.eval()
    with torch.no_grad():
        return model(collate(samples)).numpy()


# -- independent straight-line forward pass -----------------------------------

def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0)))


def _lin(w, name, z):
    return z @ w[name + ".weight"].T + w[name + ".bias"]


def _attn(w, prefix, u, vs, slope):
    logits = []
    for v in vs:
        hidden = _lin(w, prefix + ".net.0", np.concatenate([u, v]))
        hidden = np.where(hidden > 0, hidden, slope * hidden)
        logits.append(_lin(w, prefix + ".net.2", hidden))
    logits = np.array(logits)
    z = np.exp(logits - logits.max(axis=0))
    return z / z.sum(axis=0)


def reference_gnn(model, s: GraphSample) -> np.ndarray:
    """One graph at a time, node by node, straight from the state dict."""
    w = {k: t.numpy() for k, t in model.state_dict().items()}
    hp = model.hp
    n = len(s.x)
    v = [_elu(_lin(w, "encode_node.0", s.x[i])) for i in range(n)]
    e = [_elu(_lin(w, "encode_edge.0", s.edge_feats[j])) for j in range(len(s.src))]
    u = _elu(_lin(w, "encode_global.0", s.u))
    for t in range(hp.layers):
        p = f"layers.{t}"
        new_v = []
        for i in range(n):
            incoming = [j for j in range(len(s.dst)) if s.dst[j] == i]
            msgs = [_lin(w, p + ".message.2", _elu(_lin(w, p + ".message.0", np.concatenate([v[s.src[j]], e[j]]))))
                    for j in incoming]
            agg = np.mean(msgs, axis=0) if msgs else np.zeros(hp.node_hidden)
            new_v.append(_elu(_lin(w, p + ".node_update.0", np.concatenate([v[i], agg]))))
        alpha = _attn(w, p + ".attention", u, new_v, hp.leaky_slope)
        pooled = np.zeros(hp.attention_heads * hp.node_hidden)
        for i in range(n):
            gm = _elu(_lin(w, p + ".global_message.0", v[i])).reshape(hp.attention_heads, -1)
            pooled += (alpha[i][:, None] * gm).reshape(-1)
        u = _elu(_lin(w, p + ".global_update.0", np.concatenate([u, pooled])))
        v = new_v
    beta = _attn(w, "pool_attention", u, v, hp.leaky_slope)
    pooled = sum((beta[i][:, None] * v[i][None, :]).reshape(-1) for i in range(n))
    hidden = _elu(_lin(w, "head.0", np.concatenate([u, pooled])))
    return _lin(w, "head.2", hidden)


def reference_deepsets(model, s: GraphSample) -> np.ndarray:
    w = {k: t.numpy() for k, t in model.state_dict().items()}
    total = 0
    for row in s.x:
        h = row
        for i in range(model.hp.set_layers):
            h = np.maximum(_lin(w, f"node_net.{2 * i}", h), 0)
        total = total + h
    hidden = np.maximum(_lin(w, "head.0", np.concatenate([total, s.u])), 0)
    return _lin(w, "head.2", hidden)


@pytest.mark.parametrize("seed", range(5))
def test_gnn_matches_straight_line_reference(seed):
    rng = np.random.default_rng(seed)
    model = build_model("gnn", hp=SMALL, seed=seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.1 * torch.randn_like(p))   # non-zero biases too
    samples = [random_sample(rng) for _ in range(4)]
    got = forward(model, samples)
    ref = np.array([reference_gnn(model, s) for s in samples])
    np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_deepsets_matches_straight_line_reference(seed):
    rng = np.random.default_rng(seed)
    model = build_model("deepsets", hp=SMALL, seed=seed)
    samples = [random_sample(rng) for _ in range(4)]
    np.testing.assert_allclose(forward(model, samples), [reference_deepsets(model, s) for s in samples],
                               rtol=1e-10, atol=1e-12)


# -- invariances ----------------------------------------------------------------

def test_permutation_invariance_default_model():
    rng = np.random.default_rng(123)
    model = build_model("gnn", seed=1)
    graphs = [random_sample(rng) for _ in range(100)]
    a = forward(model, graphs)
    b = forward(model, [permuted(g, rng) for g in graphs])
    rel = np.abs(a - b) / np.maximum(np.abs(a), 1e-12)
    assert rel.max() < 1e-9


def test_deepsets_permutation_invariance():
    rng = np.random.default_rng(5)
    model = build_model("deepsets", seed=0)
    graphs = [random_sample(rng) for _ in range(20)]
    a, b = forward(model, graphs), forward(model, [permuted(g, rng) for g in graphs])
    assert (np.abs(a - b) / np.maximum(np.abs(a), 1e-12)).max() < 1e-9


def test_batching_does_not_mix_graphs():
    rng = np.random.default_rng(9)
    model = build_model("gnn", hp=SMALL)
    graphs = [random_sample(rng) for _ in range(6)]
    together = forward(model, graphs)
    alone = np.concatenate([forward(model, [g]) for g in graphs])
    np.testing.assert_allclose(together, alone, rtol=1e-12, atol=1e-13)


def test_attention_scores_sum_to_one_per_graph():
    rng = np.random.default_rng(0)
    model = build_model("gnn", hp=SMALL)
    batch = collate([random_sample(rng) for _ in range(10)])
    with torch.no_grad():
        v, e, u = model.encode(batch)
        for t in range(1, SMALL.layers + 1):
            v, u, scores = model.propagate_step(t, v, e, u, batch)
            sums = segment_sum(scores, batch.node_graph, batch.num_graphs)
            assert torch.all((sums - 1).abs() < 1e-12)
            assert torch.all(scores >= 0)
        _, pool = model.readout(v, u, batch)
        assert torch.all((segment_sum(pool, batch.node_graph, batch.num_graphs) - 1).abs() < 1e-12)


def test_node_without_in_edges_gets_zero_message():
    # with no edges the update sees [v, 0]
    rng = np.random.default_rng(1)
    s = random_sample(rng)
    s = GraphSample(s.x, np.zeros((0, 3)), np.zeros(0, int), np.zeros(0, int), s.u)
    model = build_model("gnn", hp=SMALL)
    batch = collate([s])
    with torch.no_grad():
        v, e, u = model.encode(batch)
        v1, _, _ = model.propagate_step(1, v, e, u, batch)
        layer = model.layers[0]
        expected = layer.node_update(torch.cat([v, torch.zeros_like(v)], dim=1))
    assert torch.equal(v1, expected)


def test_zero_encoder_weights_give_zero_codes():
    model = build_model("gnn", hp=SMALL)
    with torch.no_grad():
        for enc in (model.encode_node, model.encode_edge, model.encode_global):
            enc[0].weight.zero_()
            enc[0].bias.zero_()
        v, e, u = model.encode(collate([random_sample(np.random.default_rng(2))]))
    assert not v.any() and not e.any() and not u.any()


def test_edge_direction_matters():
    rng = np.random.default_rng(4)
    model = build_model("gnn", hp=SMALL, seed=3)
    s = random_sample(rng, 6, 10)
    while len(s.src) == 0:
        s = random_sample(rng, 6, 10)
    flipped = GraphSample(s.x, s.edge_feats, s.dst, s.src, s.u)
    assert not np.allclose(forward(model, [s]), forward(model, [flipped]))


def test_removing_absent_edge_kind_is_bit_identical():
    src = "void k(int a[8], int b[8]) { for (int i = 0; i < 8; i++) { b[i] = 3; } }"
    g = build_hcdfg(src, "k")
    assert g.edge_counts()[EdgeKind.DATA] == 0
    space = ConfigurationSpace("k", (Directive("b", D.PARTITION_FACTOR, (1, 2)),))
    design = DesignData(g, space, [])
    model = build_model("gnn", hp=SMALL)
    full = predict(model, make_samples(design, None, DEFAULT_SCHEMA, configs=list(space)))
    dropped = predict(model, make_samples(design, None, DEFAULT_SCHEMA, drop_edges=[EdgeKind.DATA], configs=list(space)))
    assert np.array_equal(full, dropped)


def test_width_mismatch_rejected():
    s = random_sample(np.random.default_rng(0))
    bad = GraphSample(s.x[:, :-1], s.edge_feats, s.src, s.dst, s.u)
    with pytest.raises(ValueError, match="node feature width"):
        forward(build_model("gnn", hp=TINY), [bad])


# -- gradient check ------------------------------------------------------------

def _objective(model, batch, weights):
    return (model(batch) * weights).sum()


@pytest.mark.parametrize("arch", ["gnn", "deepsets"])
@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_central_differences(arch, seed):
    rng = np.random.default_rng(seed)
    model = build_model(arch, hp=TINY, seed=seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.3 * torch.randn_like(p))
    batch = collate([random_sample(rng, 2, 5) for _ in range(2)])
    weights = torch.as_tensor(rng.normal(size=(2, 4)))
    model.zero_grad()
    _objective(model, batch, weights).backward()
    h = 1e-5
    worst = 0.0
    for name, p in model.named_parameters():
        numeric = torch.zeros_like(p)
        flat, nflat = p.data.view(-1), numeric.view(-1)
        for i in range(flat.numel()):
            keep = flat[i].item()
            with torch.no_grad():
                flat[i] = keep + h
                up = _objective(model, batch, weights).item()
                flat[i] = keep - h
                down = _objective(model, batch, weights).item()
                flat[i] = keep
            nflat[i] = (up - down) / (2 * h)
        if name.endswith("attention.net.2.bias"):
            # softmax ignores a shared shift, so the score bias has no gradient at all
            assert p.grad.norm() < 1e-12 and numeric.norm() < 1e-8
            continue
        scale = max(p.grad.norm().item(), numeric.norm().item(), 1e-8)
        worst = max(worst, (p.grad - numeric).norm().item() / scale)
    assert worst < 1e-4


# -- loss ------------------------------------------------------------------------

def test_loss_zero_for_exact_prediction():
    y = np.array([1200.0, 5000.0, 3000.0, 0.0])
    assert loss(Prediction(log_targets(y)), y) == 0.0


def test_loss_quarter_for_unit_error_on_one_target():
    y = np.array([1200.0, 5000.0, 3000.0, 0.0])
    assert loss(Prediction(log_targets(y) + np.array([1.0, 0, 0, 0])), y) == pytest.approx(0.25, abs=1e-15)


def test_negative_target_rejected():
    with pytest.raises(ValueError):
        log_targets([1.0, -2.0, 0.0, 0.0])


def test_prediction_values_clamp_at_zero():
    assert Prediction(np.array([-0.5, 0.0, math.log(3), 1.0])).values.tolist() == pytest.approx([0, 0, 2, math.e - 1])


# -- checkpoints -----------------------------------------------------------------

@pytest.mark.parametrize("arch", ["gnn", "deepsets"])
def test_checkpoint_roundtrip_is_exact(tmp_path, arch):
    rng = np.random.default_rng(0)
    model = build_model(arch, hp=SMALL, seed=7)
    save_checkpoint(model, tmp_path / "m.json", extra={"note": 1})
    back = load_checkpoint(tmp_path / "m.json")
    samples = [random_sample(rng) for _ in range(3)]
    assert np.array_equal(forward(model, samples), forward(back, samples))
    assert back.checkpoint_extra == {"note": 1} and back.hp == SMALL


def test_checkpoint_schema_mismatch_rejected(tmp_path):
    from hlsgraph.directives import FeatureSchema
    save_checkpoint(build_model("gnn", hp=TINY), tmp_path / "m.json")
    with pytest.raises(ValueError, match="differs"):
        load_checkpoint(tmp_path / "m.json", FeatureSchema(inline_vocab=("a", "b", "c")))


def test_seed_controls_initialization():
    a, b, c = (build_model("gnn", hp=TINY, seed=s) for s in (1, 1, 2))
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)
    assert any(not torch.equal(sa[k], sc[k]) for k in sa)
