import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from histgnn.datasets import gen_sbm
from histgnn.exceptions import InputError
from histgnn.partition import (
    Partitioning,
    cluster_partition,
    edge_cut,
    inter_intra_ratio,
    random_partition,
    read_partition,
    write_partition,
)

from conftest import random_graph, two_cliques


def _check_cover(p, n):
    allnodes = np.concatenate(p.parts)
    assert sorted(allnodes.tolist()) == list(range(n))
    for b, part in enumerate(p.parts):
        assert len(part) > 0
        assert np.all(np.diff(part) > 0)
        assert np.all(p.assignment[part] == b)


def test_random_balance():
    g = random_graph(np.random.default_rng(0), 4)
    for seed in range(5):
        p = random_partition(g, 2, seed)
        assert sorted(p.sizes().tolist()) == [2, 2]


def test_single_part():
    g = two_cliques()
    for fn in (random_partition, cluster_partition):
        p = fn(g, 1, 0)
        assert p.num_parts == 1
        assert inter_intra_ratio(g, p) == 0.0
        assert edge_cut(g, p) == 0


def test_determinism():
    g = gen_sbm(4, 30, 0.3, 0.02, seed=1).graph
    assert np.array_equal(random_partition(g, 4, 7).assignment, random_partition(g, 4, 7).assignment)
    assert np.array_equal(cluster_partition(g, 4, 7).assignment, cluster_partition(g, 4, 7).assignment)


def test_errors():
    g = two_cliques(3)
    with pytest.raises(InputError):
        random_partition(g, 0)
    with pytest.raises(InputError):
        cluster_partition(g, 7)


def test_two_cliques_split_at_bridge():
    g = two_cliques(10)
    p = cluster_partition(g, 2, 0)
    assert edge_cut(g, p) == 1
    assert set(p.parts[0].tolist()) in ({*range(10)}, {*range(10, 20)})
    # 1 bridge edge against 2 * 45 clique edges
    assert inter_intra_ratio(g, p) == pytest.approx(1 / 90)


def test_planted_blocks_recovered():
    ds = gen_sbm(4, 50, 0.3, 0.01, seed=0)
    p = cluster_partition(ds.graph, 4, 0)
    truth = ds.labels.labels
    agree = 0
    for part in p.parts:
        agree += np.bincount(truth[part], minlength=4).max()
    assert agree / ds.graph.num_nodes >= 0.95


def test_cluster_balance():
    ds = gen_sbm(5, 37, 0.2, 0.03, seed=2)
    n = ds.graph.num_nodes
    p = cluster_partition(ds.graph, 5, 0)
    assert p.sizes().max() <= 1.1 * np.ceil(n / 5)


def test_cluster_beats_random_cut():
    ds = gen_sbm(4, 40, 0.25, 0.02, seed=3)
    g = ds.graph
    assert edge_cut(g, cluster_partition(g, 4, 0)) < edge_cut(g, random_partition(g, 4, 0))


def test_infinite_ratio_marker():
    g = two_cliques(2)  # 0-1, 1-2, 2-3
    p = Partitioning.from_assignment(np.array([0, 1, 0, 1]))
    assert inter_intra_ratio(g, p) == float("inf")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 10_000), st.booleans())
def test_partition_cover_property(n, k, seed, cluster):
    k = min(k, n)
    g = random_graph(np.random.default_rng(seed), n, 0.3)
    p = (cluster_partition if cluster else random_partition)(g, k, seed)
    _check_cover(p, n)
    assert p.num_parts == k
    if not cluster:
        assert p.sizes().max() - p.sizes().min() <= 1
    # inter + intra = all undirected edges
    e = g.edges()
    und = e[e[:, 0] < e[:, 1]]
    same = p.assignment[und[:, 0]] == p.assignment[und[:, 1]]
    assert edge_cut(g, p) == int((~same).sum())


def test_partition_file_round_trip(tmp_path):
    g = random_graph(np.random.default_rng(0), 20)
    p = random_partition(g, 3, 1)
    write_partition(tmp_path / "p.txt", p)
    q = read_partition(tmp_path / "p.txt", 20)
    assert np.array_equal(p.assignment, q.assignment)
