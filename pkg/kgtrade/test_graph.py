import os

import pytest
from unittest import mock

from kgtrade import graph
from kgtrade.graph import (KnowledgeGraph, Statement, apply_exclusions,
                           canonical_bytes, iri, literal, parse_ntriples,
                           serialize)

EX = 'http://example.org/med/'


def sample_path(name):
    return os.path.join(os.path.dirname(__file__), 'samples', name)


def load_sample(name):
    with open(sample_path(name), 'rb') as _fin:
        return parse_ntriples(_fin.read())


def test_parse_two_statements():
    g = load_sample('two.nt')
    assert len(g) == 2
    assert Statement(iri(EX + 'drug/insulin'), iri(EX + 'label'),
                     literal('Insulin', language='en')) in g


def test_blank_node_lines_dropped():
    warnings = {}
    with open(sample_path('blank_nodes.nt'), 'rb') as _fin:
        g = parse_ntriples(_fin.read(), warnings=warnings)
    assert len(g) == 4
    assert warnings['blank_node_lines'] == 1


def test_literal_forms_survive():
    g = load_sample('blank_nodes.nt')
    objects = {s.object for s in g}
    assert literal('line one\nline two') in objects
    assert literal('Ana "the first"', language='pt-br') in objects
    assert literal('61.5', datatype='http://www.w3.org/2001/XMLSchema#'
                                    'decimal') in objects


def test_malformed_line_number():
    with pytest.raises(graph.NTriplesError) as err:
        load_sample('malformed.nt')
    assert err.value.line_number == 2


def test_serialize_is_canonical_and_reparses():
    g = load_sample('blank_nodes.nt')
    text = serialize(g)
    assert parse_ntriples(text) == g
    lines = text.decode('utf-8').splitlines()
    assert lines == sorted(lines, key=lambda l: l.encode('utf-8'))
    assert serialize(KnowledgeGraph(reversed(list(g)))) == text


def test_canonical_bytes_escapes():
    stmt = Statement(iri(EX + 's'), iri(EX + 'p'), literal('a "b"\nc'))
    assert canonical_bytes(stmt) == (
        b'<http://example.org/med/s> <http://example.org/med/p> '
        b'"a \\"b\\"\\nc"')


def test_term_validation():
    with pytest.raises(ValueError):
        iri('has space')
    with pytest.raises(ValueError):
        literal('x', datatype=EX + 'dt', language='en')
    with pytest.raises(ValueError):
        Statement(literal('x'), iri(EX + 'p'), iri(EX + 'o'))


def test_language_tag_is_case_insensitive():
    assert literal('x', language='EN') == literal('x', language='en')


def test_exclude_predicates():
    g = load_sample('seller.nt')
    kept = apply_exclusions(g, exclude_predicates=[EX + 'age'])
    assert len(kept) == len(g) - 2
    assert all(s.predicate.value != EX + 'age' for s in kept)


def test_anonymize_namespace_is_salted_and_consistent():
    g = load_sample('seller.nt')
    a = apply_exclusions(g, anonymize_namespaces=[EX + 'patient/'],
                         salt='pepper')
    b = apply_exclusions(g, anonymize_namespaces=[EX + 'patient/'],
                         salt='pepper')
    c = apply_exclusions(g, anonymize_namespaces=[EX + 'patient/'],
                         salt='salt')
    assert a == b
    assert a != c
    assert len(a) == len(g)
    assert not any(s.subject.value == EX + 'patient/1' for s in a)
    assert any(s.subject.value.startswith(EX + 'patient/') for s in a)


def test_no_rules_returns_same_graph():
    g = load_sample('two.nt')
    assert apply_exclusions(g) is g


def test_graph_difference():
    seller = load_sample('seller.nt')
    buyer = load_sample('buyer.nt')
    diff = graph.graph_difference(buyer, seller)
    assert isinstance(diff, KnowledgeGraph)
    assert len(diff) == len(buyer) - 6


def test_namespace():
    assert graph.namespace(EX + 'drug/insulin') == EX + 'drug/'
    assert graph.namespace('http://x.org/a#b') == 'http://x.org/a#'


def test_load_graph_from_url():
    resp = mock.MagicMock(status_code=200,
                          content=open(sample_path('two.nt'), 'rb').read())
    with mock.patch.object(graph.requests, 'get', return_value=resp) as get:
        g = graph.load_graph('https://example.org/two.nt')
    assert len(g) == 2
    get.assert_called_once()


def test_load_graph_http_error():
    resp = mock.MagicMock(status_code=404)
    with mock.patch.object(graph.requests, 'get', return_value=resp):
        with pytest.raises(RuntimeError):
            graph.load_graph('https://example.org/missing.nt')


XSD_INTEGER = 'http://www.w3.org/2001/XMLSchema#integer'


def test_lexical_forms_are_kept_apart():
    g = parse_ntriples('<%sa> <%sp> "01"^^<%s> .\n'
                       '<%sa> <%sp> "1"^^<%s> .\n'
                       % (EX, EX, XSD_INTEGER, EX, EX, XSD_INTEGER))
    assert len(g) == 2
    assert {s.object.value for s in g} == {'01', '1'}
    assert b'"01"^^' in serialize(g)


def test_only_line_feeds_end_lines():
    text = ('<%sa> <%sp> "x y\u0085z\x0cw" .\r\n<%sb> <%sp> "v" .'
            % (EX, EX, EX, EX))
    g = parse_ntriples(text.encode('utf-8'))
    assert len(g) == 2
    assert literal('x y\u0085z\x0cw') in {s.object for s in g}


def test_invalid_utf8_reports_line():
    doc = (b'<http://ex/a> <http://ex/p> "ok" .\n'
           b'<http://ex/a> <http://ex/p> "\xff" .\n')
    with pytest.raises(graph.NTriplesError) as err:
        parse_ntriples(doc)
    assert err.value.line_number == 2
