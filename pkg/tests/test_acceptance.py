"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (collected in the terminal summary) and
then asserts.  Run alone with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``.
"""
import os
import time

import numpy as np
import pytest

from histgnn.analysis import (
    bound_case,
    expressiveness_check,
    gas_witness_outputs,
    gradient_case,
    prop3_counterexample_search,
    train_wl_gin,
    wl_corpus,
)
from histgnn.bench import runtime_benchmark
from histgnn.datasets import gen_clustered, gen_sbm
from histgnn.graph import Dataset, make_batch_plan
from histgnn.history import HistoryStore
from histgnn.io import load_dataset
from histgnn.layers import KINDS, Propagation
from histgnn.model import GNNModel, ModelSpec
from histgnn.nn import Adam, Tape, backward
from histgnn.partition import Partitioning, cluster_partition, inter_intra_ratio, random_partition
from histgnn.trainer import (
    Trainer,
    _loss,
    fixed_exchange,
    full_batch_epoch,
    full_forward,
    gas_epoch,
    gas_pass,
    memory_probe,
    prepare_batches,
)

from conftest import assert_grad_close, numeric_grad, random_graph, record

FOUR = ("gcn", "gin", "appnp", "gcnii")


def _spec(ds, **kw):
    base = dict(kind="gcn", in_dim=ds.features.shape[1], hidden=16, num_classes=ds.labels.num_classes,
                num_layers=2, dropout=0.5, l2=5e-4, lr=0.01, seed=0)
    base.update(kw)
    return ModelSpec(**base)


def test_c01_single_partition_is_full_batch():
    t0 = time.perf_counter()
    ds = gen_sbm(4, 250, 0.04, 0.002, seed=0)
    part = Partitioning.from_assignment(np.zeros(ds.graph.num_nodes, dtype=np.int64))
    same = {}
    for kind in FOUR:
        spec = _spec(ds, kind=kind, num_layers=3, lipschitz_weight=0.01, max_norm=2.0)
        a, b = GNNModel(spec), GNNModel(spec)
        oa, ob = Adam(a.parameters(), spec.lr), Adam(b.parameters(), spec.lr)
        store = HistoryStore(ds.graph.num_nodes, b.history_dims, dtype=b.dtype)
        props = prepare_batches(ds.graph, part, b.dtype)
        for e in range(10):
            full_batch_epoch(a, ds, oa, e)
            gas_epoch(b, ds, part, store, ob, e, props)
        same[kind] = all(np.array_equal(x, y) for x, y in zip(a.state_dict(), b.state_dict()))
    dt = time.perf_counter() - t0
    ok = all(same.values()) and dt < 60
    assert record(1, "single-partition bit identity", ok,
                  f"{same}, n={ds.graph.num_nodes}, 10 epochs, {dt:.1f}s (< 60s)")


def test_c02_frozen_weights_reach_full_batch():
    ds32 = gen_sbm(4, 30, 0.2, 0.03, seed=1)
    part = random_partition(ds32.graph, 4, 0)
    worst = {}
    for dtype in ("float32", "float64"):
        ds = Dataset(ds32.graph, ds32.features.astype(dtype), ds32.labels)
        props = prepare_batches(ds.graph, part, np.dtype(dtype))
        for kind in KINDS:
            for L in (2, 3, 4):
                model = GNNModel(_spec(ds, kind=kind, num_layers=L, dropout=0.0, lr=0.0, dtype=dtype))
                store = HistoryStore(ds.graph.num_nodes, model.history_dims, dtype=model.dtype)
                opt = Adam(model.parameters(), lr=0.0)
                # epochs 1..L-1 train (with zero step), epoch L is the evaluation pass
                for e in range(L - 1):
                    gas_epoch(model, ds, part, store, opt, e, props)
                exact, _ = full_forward(model, ds)
                err = float(np.abs(gas_pass(model, ds, props, store).astype(np.float64) - exact).max())
                worst[(dtype, kind, L)] = err
    m32 = max(v for k, v in worst.items() if k[0] == "float32")
    m64 = max(v for k, v in worst.items() if k[0] == "float64")
    ok = m32 < 1e-5 and m64 < 1e-5
    assert record(2, "frozen-weight fixed point after L epochs", ok,
                  f"max error float32 {m32:.2e}, float64 {m64:.2e} (< 1e-5), "
                  f"{len(KINDS)} kinds x L in 2,3,4, 4 parts")


def _bound_corpus(kind):
    holds, nontrivial, lemma = 0, 0, 0
    for seed in range(100):
        for L in (2, 3):
            rep = bound_case(seed, L, kind=kind)
            holds += rep.theorem1_holds
            lemma += rep.lemma1_holds
            nontrivial += rep.nontrivial and rep.measured > 0
    return holds, lemma, nontrivial


def test_c03_error_bound_on_random_graphs():
    t0 = time.perf_counter()
    holds, _, nontrivial = _bound_corpus("gcn")
    dt = time.perf_counter() - t0
    ok = holds == 200 and nontrivial >= 10 and dt < 300
    assert record(3, "layerwise error bound", ok,
                  f"{holds}/200 cases (100 graphs x L=2,3), {nontrivial} with nonzero staleness, {dt:.1f}s")


def test_c04_mean_aggregation_tightened_bound():
    holds, lemma, nontrivial = _bound_corpus("mean")
    ok = holds == 200 and lemma == 200
    assert record(4, "mean-aggregation bound without degree factor", ok,
                  f"closed form {holds}/200, per-layer {lemma}/200, {nontrivial} nontrivial")


def test_c05_partition_quality():
    cl, rd = [], []
    for s in range(20):
        ds = gen_sbm(8, 60, 0.15, 0.004, seed=s)
        cl.append(inter_intra_ratio(ds.graph, cluster_partition(ds.graph, 8, s)))
        rd.append(inter_intra_ratio(ds.graph, random_partition(ds.graph, 8, s)))
    mc, mr = float(np.mean(cl)), float(np.mean(rd))
    ok = mc <= mr / 4
    detail = f"SBM x20: cluster {mc:.3f} vs random {mr:.3f} (factor {mr / mc:.1f} >= 4)"
    cora = os.environ.get("GAS_CORA_DIR")
    if cora:
        g = load_dataset(cora).graph
        c, r = inter_intra_ratio(g, cluster_partition(g, 8, 0)), inter_intra_ratio(g, random_partition(g, 8, 0))
        ok &= c <= 0.5 and abs(r - 1.3) <= 0.2
        detail += f"; Cora: cluster {c:.3f} (<= 0.5), random {r:.3f} (1.3 +- 0.2)"
    else:
        detail += "; Cora not provided (GAS_CORA_DIR unset)"
    assert record(5, "partition quality", ok, detail)


# accuracy parity: Cora-like inter/intra ratio (about 0.17 clustered) and accuracy (low 80s)
PARITY_SEEDS = 20
PARITY_NOISE = 2.5
# regularizer weight picked by validation accuracy on seeds 100-105, not the evaluation seeds
PARITY_REG = 0.1


def _best_val_test(ds, kind, part, method, seed, **kw):
    spec = _spec(ds, kind=kind, hidden=32, epochs=150, seed=seed, **kw)
    tr = Trainer(GNNModel(spec), ds, part, method=method)
    tr.fit()
    val = np.array(tr.report.column("val_acc"))
    return 100.0 * tr.report.column("test_acc")[int(val.argmax())]


def _parity(kind):
    acc = []
    for s in range(PARITY_SEEDS):
        ds = gen_sbm(6, 150, 0.06, 0.002, seed=s, noise=PARITY_NOISE)
        acc.append([
            _best_val_test(ds, kind, None, "full", s),
            _best_val_test(ds, kind, cluster_partition(ds.graph, 6, s), "gas", s,
                           lipschitz_weight=PARITY_REG, delta=0.1),
            _best_val_test(ds, kind, random_partition(ds.graph, 6, s), "gas", s, l2=0.0),
        ])
    return np.array(acc).mean(axis=0)


def test_c06_accuracy_parity():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for kind in ("gcn", "gin"):
        full, gas, naive = _parity(kind)
        ok &= abs(gas - full) <= 1.0
        parts.append(f"{kind}: full {full:.2f}, GAS {gas:.2f} (|diff| {abs(gas - full):.2f} <= 1.0), "
                     f"naive {naive:.2f}{' (GAS >= naive)' if gas >= naive else ' (GAS < naive)'}")
    dt = time.perf_counter() - t0
    ok &= dt < 600
    assert record(6, "accuracy parity (SBM substitute for Cora)", ok,
                  "; ".join(parts) + f"; {PARITY_SEEDS} seeds, {dt:.0f}s")


def test_c07_expressiveness():
    wit = prop3_counterexample_search(max_nodes=6)
    ok_a = False
    detail = "no sampled-aggregation witness found"
    if wit is not None:
        sampled_gap = float(np.linalg.norm(wit.outputs[wit.v] - wit.outputs[wit.w]))
        out = gas_witness_outputs(wit)
        gas_gap = float(np.linalg.norm(out[wit.v] - out[wit.w]))
        ok_a = wit.graph.num_nodes <= 6 and sampled_gap > 0 and gas_gap <= 1e-9
        detail = (f"(a) witness n={wit.graph.num_nodes}, sampled gap {sampled_gap:.3f}, "
                  f"GAS gap {gas_gap:.1e}")
    g, _ = wl_corpus(6)
    model, store, props, x = train_wl_gin(g)
    v = expressiveness_check(model, store, g, x, rounds=3, props=props)
    ok_b = v.passed and v.pass_rate >= 0.99 and v.tau > 0
    detail += (f"; (b) {v.separated}/{v.num_pairs} WL-distinct pairs separated ({100 * v.pass_rate:.3f}%), "
               f"tau {v.tau:.4f}, delta {v.delta:.2e}")
    assert record(7, "expressiveness", ok_a and ok_b, detail)


def test_c08_memory_scaling():
    ds = gen_sbm(8, 25, 0.3, 0.03, seed=0, feature_dim=8)
    part = random_partition(ds.graph, 3, 0)
    peak = {}
    for L in (2, 4):
        model = GNNModel(ModelSpec(kind="gcn", in_dim=8, hidden=8, num_classes=8, num_layers=L,
                                   dropout=0.5, seed=0))
        peak[L] = max(memory_probe(model, ds, part))
    ratio = peak[4] / peak[2]
    sizes = {}
    for parts in (4, 16):
        # same widths for both sizes: 16 features and 16 output classes
        big = gen_clustered(parts, 100, 8, 20, 4, seed=0, feature_dim=16)
        model = GNNModel(ModelSpec(kind="gcn", in_dim=16, hidden=16, num_classes=16, num_layers=3, seed=0))
        sizes[parts] = max(memory_probe(model, big, cluster_partition(big.graph, parts, 0)))
    growth = sizes[16] / sizes[4]
    ok = 1.8 <= ratio <= 2.2 and abs(growth - 1.0) <= 0.1
    assert record(8, "memory scaling", ok,
                  f"peak L4/L2 {ratio:.3f} (in [1.8, 2.2]); 4x graph at fixed part size: "
                  f"{sizes[4]} -> {sizes[16]} floats (ratio {growth:.3f}, within 10%)")


def test_c09_prefetch_identical_and_no_slower():
    ds = gen_clustered(8, 500, 60, 200, 60, seed=0)
    part = Partitioning.from_assignment(ds.labels.labels)
    spec = ModelSpec(kind="gcn", in_dim=ds.features.shape[1], hidden=64, num_classes=8,
                     num_layers=3, seed=0)
    res = runtime_benchmark(ds, part, spec, epochs=3, repeats=5)
    ok = res.identical and res.ratio <= 1.05
    assert record(9, "prefetch bit identity and no regression", ok,
                  f"identical={res.identical}, median epoch prefetch/serial {res.ratio:.3f} (<= 1.05), "
                  f"serial median {np.median(res.serial):.3f}s")


def _model_grad_check(kind, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 7, 0.5)
    n = g.num_nodes
    labels = rng.integers(0, 3, n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    model = GNNModel(ModelSpec(kind=kind, in_dim=3, hidden=4, num_classes=3, num_layers=2, dropout=0.3,
                               l2=0.01, lipschitz_weight=0.5, delta=0.2, alpha=0.3, beta=0.6,
                               seed=seed, dtype="float64"))
    # zero biases put fully dropped rows exactly on the relu kink
    for p in model.parameters():
        p.value = p.value + 0.1 * rng.standard_normal(p.value.shape)
    prop = Propagation(make_batch_plan(g, np.sort(rng.choice(n, 4, replace=False))), np.float64)
    x = rng.standard_normal((prop.num_ext, 3))
    halo = [rng.standard_normal((n, d)) for d in model.history_dims]
    nodes = prop.plan.batch_nodes

    def run():
        res = model.forward(x, prop, fixed_exchange(prop, halo), training=True, key=(seed, 1),
                            reg_seed=(seed, 1, 0))
        return _loss(model, res, labels[nodes], mask[nodes])

    with Tape() as tape:
        loss = run()
    for p in model.parameters():
        p.grad = None
    backward(tape, loss)
    for p in model.parameters():
        analytic = np.zeros_like(p.value) if p.grad is None else p.grad
        assert_grad_close(analytic, numeric_grad(lambda: float(run().item()), p.value), rtol=1e-4)


def test_c10_gradient_correctness():
    fd_fail = []
    for kind in KINDS:
        for seed in range(20):
            try:
                _model_grad_check(kind, seed)
            except AssertionError:
                fd_fail.append((kind, seed))
    holds = sum(gradient_case(s).holds for s in range(20))
    ok = not fd_fail and holds >= 19
    assert record(10, "gradient correctness", ok,
                  f"finite differences (cross entropy + l2 + Lipschitz term, every layer kind) "
                  f"{len(KINDS) * 20 - len(fd_fail)}/{len(KINDS) * 20} at rtol 1e-4; "
                  f"history gradient bound {holds}/20 (>= 19)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
