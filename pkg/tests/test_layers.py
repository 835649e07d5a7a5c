import numpy as np
import pytest

from histgnn.analysis import wl_refine
from histgnn.exceptions import InputError
from histgnn.graph import build_graph, make_batch_plan
from histgnn.layers import (
    LayerConfig,
    LayerInput,
    Propagation,
    lipschitz_reg_loss,
    make_layer,
    sample_ball,
)
from histgnn.nn import Tape, Tensor, backward, matmul, mul, spectral_norm_estimate, sum_all

from conftest import assert_grad_close, numeric_grad, path3, random_graph, star

F64 = np.float64


def full_prop(g):
    return Propagation(make_batch_plan(g, np.arange(g.num_nodes)), F64)


def dense_norm_adj(g):
    a = g.adjacency().toarray() + np.eye(g.num_nodes)
    d = 1.0 / np.sqrt(g.degrees() + 1.0)
    return d[:, None] * a * d[None, :]


def layer(kind, din, dout, rng, **kw):
    return make_layer(LayerConfig(kind, din, dout, **kw), rng, F64)


def set_identity_mlp(gin, dim):
    gin.mlp.lin1.weight.value = np.eye(dim)
    gin.mlp.lin2.weight.value = np.eye(dim)
    gin.mlp.lin1.bias.value[:] = 0.0
    gin.mlp.lin2.bias.value[:] = 0.0


def run(lay, g, h, h0=None):
    return lay(LayerInput(Tensor(h), full_prop(g), None if h0 is None else Tensor(h0))).value


def test_gcn_worked_examples(rng):
    lay = layer("gcn", 1, 1, rng)
    lay.weight.value = np.eye(1)
    out = run(lay, path3(), np.ones((3, 1)))
    assert out[0, 0] == pytest.approx(0.5 + 1 / np.sqrt(6), abs=1e-4)
    out = run(lay, star(3), np.ones((4, 1)))
    assert out[0, 0] == pytest.approx(0.25 + 3 / (2 * np.sqrt(2)), abs=1e-4)


def test_gin_worked_examples(rng):
    lay = layer("gin", 1, 1, rng, gin_eps=0.0, mlp_hidden=1)
    set_identity_mlp(lay, 1)
    assert run(lay, path3(), np.ones((3, 1)))[1, 0] == pytest.approx(3.0)
    lay = layer("gin", 1, 1, rng, gin_eps=0.5, mlp_hidden=1)
    set_identity_mlp(lay, 1)
    assert run(lay, build_graph([], 1), np.full((1, 1), 2.0))[0, 0] == pytest.approx(3.0)


def test_appnp_degenerate_alphas(rng):
    g = random_graph(rng, 6)
    h = rng.standard_normal((6, 3))
    h0 = rng.standard_normal((6, 3))
    assert np.allclose(run(layer("appnp", 3, 3, rng, alpha=1.0), g, h, h0), h0)
    gcn = layer("gcn", 3, 3, rng)
    gcn.weight.value = np.eye(3)
    assert np.allclose(run(layer("appnp", 3, 3, rng, alpha=0.0), g, h, h0), run(gcn, g, h))


def test_gcnii_degenerate_parameters(rng):
    g = random_graph(rng, 6)
    h = rng.standard_normal((6, 3))
    h0 = rng.standard_normal((6, 3))
    a = run(layer("gcnii", 3, 3, rng, alpha=0.0, beta=0.0), g, h, h0)
    b = run(layer("appnp", 3, 3, rng, alpha=0.0), g, h, h0)
    assert np.allclose(a, b)
    lay = layer("gcnii", 3, 3, rng, alpha=0.3, beta=1.0)
    assert np.allclose(lay.effective_weight().value, lay.weight.value)


def test_h0_required_and_dims(rng):
    g = path3()
    with pytest.raises(InputError):
        run(layer("appnp", 2, 2, rng), g, np.ones((3, 2)))
    with pytest.raises(InputError):
        run(layer("gcn", 2, 2, rng), g, np.ones((3, 3)))
    with pytest.raises(InputError):
        LayerConfig("gcnii", 2, 3)
    with pytest.raises(InputError):
        LayerConfig("gat", 2, 2)
    with pytest.raises(InputError):
        LayerConfig("gcn", 2, 2, alpha=1.5)


@pytest.mark.parametrize("seed", range(50))
def test_dense_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    g = random_graph(rng, n, 0.45)
    a = g.adjacency().toarray()
    p = dense_norm_adj(g)
    h = rng.standard_normal((n, 3))
    h0 = rng.standard_normal((n, 3))

    gcn = layer("gcn", 3, 2, rng)
    assert np.abs(run(gcn, g, h) - p @ h @ gcn.weight.value).max() < 1e-5

    mean = layer("mean", 3, 2, rng)
    m = (a + np.eye(n)) / (g.degrees() + 1.0)[:, None]
    assert np.abs(run(mean, g, h) - m @ h @ mean.weight.value).max() < 1e-5

    eps = float(rng.uniform(-0.5, 0.5))
    gin = layer("gin", 3, 2, rng, gin_eps=eps, mlp_hidden=4)
    l1, l2 = gin.mlp.lin1, gin.mlp.lin2
    z = (a + (1 + eps) * np.eye(n)) @ h
    ref = np.maximum(z @ l1.weight.value + l1.bias.value, 0) @ l2.weight.value + l2.bias.value
    assert np.abs(run(gin, g, h) - ref).max() < 1e-5

    alpha, beta = rng.uniform(0, 1, 2)
    gcnii = layer("gcnii", 3, 3, rng, alpha=alpha, beta=beta)
    wt = (1 - beta) * np.eye(3) + beta * gcnii.weight.value
    ref = (alpha * h0 + (1 - alpha) * p @ h) @ wt
    assert np.abs(run(gcnii, g, h, h0) - ref).max() < 1e-5


def test_appnp_power_iteration_oracle():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 6, 0.5)
    p = dense_norm_adj(g)
    alpha = 0.2
    h0 = rng.standard_normal((6, 2))
    lay = layer("appnp", 2, 2, rng, alpha=alpha)
    h, ref = h0.copy(), h0.copy()
    for _ in range(10):
        h = run(lay, g, h, h0)
        ref = alpha * h0 + (1 - alpha) * p @ ref
    assert np.abs(h - ref).max() < 1e-5


@pytest.mark.parametrize("kind", ["gcn", "gin", "appnp", "gcnii", "mean"])
def test_batch_without_halo_matches_full(kind):
    rng = np.random.default_rng(0)
    # two components: batch = first component has no halo
    g = build_graph([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5)], 6)
    lay = layer(kind, 3, 3, rng)
    h = rng.standard_normal((6, 3))
    h0 = rng.standard_normal((6, 3))
    prop = Propagation(make_batch_plan(g, [0, 1, 2]), F64)
    assert prop.plan.num_halo == 0
    part = lay(LayerInput(Tensor(h[:3]), prop, Tensor(h0[:3]))).value
    full = run(lay, g, h, h0)
    assert np.array_equal(part, full[:3])


@pytest.mark.parametrize("kind", ["gcn", "gin", "appnp", "gcnii", "mean"])
@pytest.mark.parametrize("seed", range(5))
def test_permutation_equivariance(kind, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 8, 0.4)
    perm = rng.permutation(8)
    e = g.edges()
    gp = build_graph(perm[e], 8, symmetrize=False)
    lay = layer(kind, 3, 3, rng)
    h = rng.standard_normal((8, 3))
    h0 = rng.standard_normal((8, 3))
    hp = np.empty_like(h)
    hp[perm] = h
    h0p = np.empty_like(h0)
    h0p[perm] = h0
    out = run(lay, g, h, h0)
    outp = run(lay, gp, hp, h0p)
    assert np.allclose(outp[perm], out, rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", ["gcn", "gin", "appnp", "gcnii", "mean"])
@pytest.mark.parametrize("seed", range(20))
def test_layer_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, 0.5)
    lay = layer(kind, 3, 3, rng, gin_eps=0.2, alpha=0.3, beta=0.6)
    batch = np.sort(rng.choice(6, 3, replace=False))
    prop = Propagation(make_batch_plan(g, batch), F64)
    m = prop.num_ext
    h = Tensor(rng.standard_normal((m, 3)), requires_grad=True)
    h0 = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    r = rng.standard_normal((3, 3))
    leaves = [h, h0] + lay.parameters()

    def value():
        return float(np.sum(r * lay(LayerInput(h, prop, h0)).value))

    with Tape() as tape:
        loss = sum_all(mul(lay(LayerInput(h, prop, h0)), Tensor(r)))
    backward(tape, loss)
    for t in leaves:
        analytic = np.zeros_like(t.value) if t.grad is None else t.grad
        assert_grad_close(analytic, numeric_grad(value, t.value))


def test_lipschitz_reg_zero_noise(rng):
    g = random_graph(rng, 5)
    lay = layer("gcn", 2, 2, rng)
    inp = LayerInput(Tensor(rng.standard_normal((5, 2))), full_prop(g))
    assert lipschitz_reg_loss(lay, inp, 0.1, noise=np.zeros((5, 2))).item() == 0.0
    with pytest.raises(InputError):
        lipschitz_reg_loss(lay, inp, 0.0)


def test_lipschitz_reg_identity_and_linear(rng):
    g = random_graph(rng, 6)
    prop = full_prop(g)
    delta = 0.3
    ident = lambda inp: inp.h  # noqa: E731
    for seed in range(20):
        r = np.random.default_rng(seed)
        inp = LayerInput(Tensor(r.standard_normal((6, 4))), prop)
        e = sample_ball(6, 4, delta, np.random.default_rng(seed))
        loss = lipschitz_reg_loss(ident, inp, delta, seed=seed).item()
        assert loss == pytest.approx(np.linalg.norm(e))
        assert loss <= delta * np.sqrt(6)
        w = Tensor(r.standard_normal((4, 3)))
        lin = lambda inp: matmul(inp.h, w)  # noqa: E731
        loss = lipschitz_reg_loss(lin, inp, delta, seed=seed).item()
        assert loss <= spectral_norm_estimate(w.value) * np.linalg.norm(e) * (1 + 1e-9)


def test_lipschitz_reg_differentiable(rng):
    g = random_graph(rng, 5)
    lay = layer("gcn", 2, 2, rng)
    inp = LayerInput(Tensor(rng.standard_normal((5, 2))), full_prop(g))
    with Tape() as tape:
        loss = lipschitz_reg_loss(lay, inp, 0.5, seed=1)
    backward(tape, loss)
    assert np.any(lay.weight.grad)


def test_sample_ball_inside():
    e = sample_ball(2000, 3, 0.5, np.random.default_rng(0))
    norms = np.linalg.norm(e, axis=1)
    assert norms.max() <= 0.5
    # uniform in the ball: P(|e| <= r/2) = 1/8 in 3-D
    assert abs(np.mean(norms <= 0.25) - 0.125) < 0.03


def test_gin_separates_wl_multisets():
    """A randomly initialised wide GIN layer maps distinct one-hop multisets apart."""
    from histgnn.analysis import wl_corpus

    g, _ = wl_corpus(5)
    c0 = wl_refine(g, None, 1).colors[1]
    c1 = wl_refine(g, c0, 1).colors[1]
    k = int(c0.max()) + 1
    x = np.eye(k)[c0]
    lay = layer("gin", k, 16, np.random.default_rng(0), gin_eps=np.sqrt(2) - 1, mlp_hidden=64)
    out = run(lay, g, x)
    reps = {}
    for v in range(g.num_nodes):
        key = np.round(out[v], 9).tobytes()
        reps.setdefault(key, set()).add(int(c1[v]))
    assert all(len(s) == 1 for s in reps.values())
    assert len(reps) == len(np.unique(c1))


def test_propagation_operators_use_global_degrees():
    g = star(3)
    prop = Propagation(make_batch_plan(g, [1]), F64)
    op, _ = prop.gcn_op
    dense = op.toarray()
    # batch {1}: self 1/2, centre 1/(sqrt 2 * sqrt 4)
    centre = prop.plan.global_to_local([0])[0]
    assert dense[0, prop.batch_pos[0]] == pytest.approx(0.5)
    assert dense[0, centre] == pytest.approx(1 / (np.sqrt(2) * 2))
