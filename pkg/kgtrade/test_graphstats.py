from kgtrade import graphstats
from kgtrade.graph import KnowledgeGraph
from kgtrade.test_graph import EX, load_sample


def test_catalog_size_and_order():
    assert len(graphstats.CATALOG) == 33
    assert len(set(graphstats.CATALOG)) == 33
    assert graphstats.CATALOG[0] == 'statements'


def test_two_statement_graph():
    stats = graphstats.compute_statistics(load_sample('two.nt'))
    assert stats['statements'] == 2
    assert stats['distinct_subjects'] == 1
    assert stats['distinct_predicates'] == 2
    assert stats['distinct_literals'] == 1
    assert stats['literal_object_statements'] == 1
    assert stats['iri_object_statements'] == 1
    assert stats['out_degree_max'] == 2
    assert stats['in_degree_min'] == 0
    assert stats['distinct_languages'] == 1
    assert stats['literal_length_max'] == len('Insulin')


def test_typed_subjects():
    stats = graphstats.compute_statistics(load_sample('seller.nt'))
    assert stats['typed_subjects'] == 3
    assert stats['distinct_classes'] == 1
    assert stats['distinct_datatypes'] == 1


def test_empty_graph():
    stats = graphstats.compute_statistics(KnowledgeGraph())
    assert stats['statements'] == 0
    assert stats['density'] == 0
    assert stats['out_degree_avg'] == 0


def test_dict_round_trip_keeps_order():
    stats = graphstats.compute_statistics(load_sample('seller.nt'))
    doc = stats.as_dict()
    assert list(doc) == list(graphstats.CATALOG)
    assert graphstats.GraphStatistics.from_dict(doc) == stats


def test_vocabulary():
    vocab = graphstats.vocabulary(load_sample('two.nt'))
    assert vocab == [EX, EX + 'condition/', EX + 'drug/']
