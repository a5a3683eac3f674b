import networkx as nx
import pytest

from kgtrade import bench, partition
from kgtrade.graph import KnowledgeGraph, Statement, iri
from kgtrade.test_graph import EX, load_sample


def path_graph(length):
    """s0 -> s1 -> ... -> s<length>"""
    p = iri(EX + 'next')
    return KnowledgeGraph(Statement(iri('%ss%d' % (EX, i)), p,
                                    iri('%ss%d' % (EX, i + 1)))
                          for i in range(length))


def star_graph(leaves):
    p = iri(EX + 'link')
    hub = iri(EX + 'hub')
    return KnowledgeGraph(Statement(hub, p, iri('%sleaf%d' % (EX, i)))
                          for i in range(leaves))


def _is_connected(part):
    g = nx.Graph()
    for s in part:
        g.add_edge(s.subject, s.object)
    return nx.is_connected(g)


def _check_cover(g, result, n):
    assert len(result) == n
    union = set()
    for part in result.parts:
        assert not union & part
        union |= part
    assert union == set(g)
    assert max(result.sizes()) - min(result.sizes()) <= 1


@pytest.mark.parametrize('strategy', [partition.RANDOM, partition.CLUSTERED])
def test_parts_cover_and_balance(strategy):
    g = load_sample('seller.nt')
    for n in (1, 3, 5, 24):
        _check_cover(g, partition.make_partition(g, n, 42, strategy), n)


def test_path_split_into_connected_halves():
    g = path_graph(100)
    result = partition.partition_balanced_clustered(g, 2, 0)
    assert result.sizes() == [50, 50]
    assert all(_is_connected(part) for part in result.parts)


def test_path_parts_mostly_connected():
    g = path_graph(99)
    result = partition.partition_balanced_clustered(g, 3, 5)
    _check_cover(g, result, 3)
    assert sum(_is_connected(part) for part in result.parts) >= 2


def test_star_is_balanced():
    g = star_graph(10)
    result = partition.partition_balanced_clustered(g, 3, 1)
    assert sorted(result.sizes()) == [3, 3, 4]


def test_deterministic_given_seed():
    g, _ = bench.generate_pair(300, seed=2)
    for strategy in partition.STRATEGIES:
        a = partition.make_partition(g, 7, 9, strategy)
        b = partition.make_partition(g, 7, 9, strategy)
        assert a == b


def test_random_strategy_depends_on_seed():
    g, _ = bench.generate_pair(300, seed=2)
    a = partition.partition_random(g, 4, 1)
    b = partition.partition_random(g, 4, 2)
    assert a.parts != b.parts


def test_clustered_keeps_clusters_together():
    g, _ = bench.generate_pair(400, seed=4)
    result = partition.partition_balanced_clustered(g, 4, 0)
    _check_cover(g, result, 4)
    assert _is_connected(result.parts[0])


def test_too_many_parts():
    with pytest.raises(partition.PartitionError):
        partition.make_partition(load_sample('two.nt'), 3, 0)
    with pytest.raises(partition.PartitionError):
        partition.make_partition(load_sample('two.nt'), 0, 0)


def test_unknown_strategy():
    with pytest.raises(partition.PartitionError):
        partition.make_partition(load_sample('two.nt'), 1, 0, 'metis')


def test_self_loops():
    p = iri(EX + 'sameAs')
    g = KnowledgeGraph(Statement(iri('%sn%d' % (EX, i)), p,
                                 iri('%sn%d' % (EX, i))) for i in range(6))
    result = partition.partition_balanced_clustered(g, 2, 0)
    _check_cover(g, result, 2)
