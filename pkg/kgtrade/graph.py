"""Knowledge graph data model

A knowledge graph here is a set of (subject, predicate, object)
statements whose terms are IRIs or literals. Blank nodes and named
graphs are not representable: lines that use blank nodes are dropped
when a document is read.

Documents are read with rdflib's N-Triples parser, one line at a time,
so that a malformed line can be reported with its line number.
"""
import contextlib
import enum
import hashlib
import logging
import threading
from dataclasses import dataclass

import rdflib
import requests
from rdflib import BNode, Literal, URIRef
from rdflib.plugins.parsers.ntriples import ParseError, W3CNTriplesParser

from kgtrade import config

log = logging.getLogger(__name__)

RDF_TYPE = 'http://www.w3.org/1999/02/22-rdf-syntax-ns#type'

_ESCAPES = {'\\': '\\\\', '"': '\\"', '\n': '\\n', '\r': '\\r'}


class NTriplesError(ValueError):
    """A line of an N-Triples document could not be parsed"""
    def __init__(self, line_number, message):
        super().__init__('line %d: %s' % (line_number, message))
        self.line_number = line_number


class TermKind(enum.Enum):
    IRI = 'iri'
    LITERAL = 'literal'


@dataclass(frozen=True)
class Term:
    """An IRI or a literal

    IRIs are stored without angle brackets. A literal's datatype and
    language tag are part of its identity.
    """
    kind: TermKind
    value: str
    datatype: str = None
    language: str = None

    def __post_init__(self):
        if self.kind is TermKind.IRI:
            if not self.value or any(c.isspace() for c in self.value):
                raise ValueError('Invalid IRI: %r' % self.value)
            if self.datatype or self.language:
                raise ValueError('IRIs carry no datatype or language')
        elif self.language and self.datatype:
            raise ValueError('A literal has a datatype or a language, '
                             'not both')

    @property
    def is_iri(self):
        return self.kind is TermKind.IRI

    def n3(self):
        """The N-Triples form of this term"""
        if self.is_iri:
            return '<%s>' % self.value
        text = '"%s"' % ''.join(_ESCAPES.get(c, c) for c in self.value)
        if self.language:
            return '%s@%s' % (text, self.language)
        if self.datatype:
            return '%s^^<%s>' % (text, self.datatype)
        return text

    def __str__(self):
        return self.n3()


def iri(value):
    return Term(TermKind.IRI, value)


def literal(value, datatype=None, language=None):
    return Term(TermKind.LITERAL, value, datatype,
                language.lower() if language else None)


@dataclass(frozen=True)
class Statement:
    subject: Term
    predicate: Term
    object: Term

    def __post_init__(self):
        if not (self.subject.is_iri and self.predicate.is_iri):
            raise ValueError('Subject and predicate must be IRIs')

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))


class KnowledgeGraph(frozenset):
    """An immutable set of Statements"""

    def __new__(cls, statements=()):
        return super().__new__(cls, statements)

    def __repr__(self):
        return 'KnowledgeGraph(%d statements)' % len(self)

    def sorted(self):
        """Statements in canonical byte order"""
        return sorted(self, key=canonical_bytes)


def canonical_bytes(stmt):
    """Deterministic encoding of a single statement

    N-Triples term syntax separated by single spaces, without the
    trailing dot, encoded as UTF-8.
    """
    return ' '.join(t.n3() for t in stmt).encode('utf-8')


def serialize(g):
    """Serialize a graph as an N-Triples document in canonical order"""
    return b''.join(canonical_bytes(s) + b' .\n' for s in g.sorted())


def _from_rdflib(node):
    if isinstance(node, URIRef):
        return iri(str(node))
    elif isinstance(node, Literal):
        return literal(str(node),
                       datatype=str(node.datatype) if node.datatype else None,
                       language=node.language)
    raise TypeError('Unsupported term %r' % node)


class _Sink:
    """Collects triples handed over by the rdflib parser"""
    def __init__(self):
        self.statements = set()
        self.blank_lines = 0
        self._line_has_blank = False

    def triple(self, s, p, o):
        if any(isinstance(t, BNode) for t in (s, p, o)):
            self._line_has_blank = True
            return
        self.statements.add(Statement(_from_rdflib(s), _from_rdflib(p),
                                      _from_rdflib(o)))


_literal_lock = threading.Lock()


@contextlib.contextmanager
def _verbatim_literals():
    """Keep literals in their source lexical form while parsing"""
    with _literal_lock:
        saved = rdflib.NORMALIZE_LITERALS
        rdflib.NORMALIZE_LITERALS = False
        try:
            yield
        finally:
            rdflib.NORMALIZE_LITERALS = saved


def _lines(text):
    """Yield (line number, line) split on LF only

    Other line separators such as U+2028 may appear raw inside
    literals.
    """
    sep = b'\n' if isinstance(text, bytes) else '\n'
    for line_number, line in enumerate(text.split(sep), start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode('utf-8')
            except UnicodeDecodeError as err:
                raise NTriplesError(line_number,
                                    'invalid UTF-8: %s' % err) from err
        yield line_number, line.rstrip('\r')


def parse_ntriples(text, warnings=None):
    """Parse an N-Triples document

    Parameters
    ----------
    text : str or bytes
        An N-Triples document (UTF-8 if bytes).
    warnings : dict, optional
        If provided, the number of dropped blank-node lines is stored
        under the 'blank_node_lines' key.

    Returns
    -------
    KnowledgeGraph

    Raises
    ------
    NTriplesError if a line is malformed or is not valid UTF-8
    """
    sink = _Sink()
    parser = W3CNTriplesParser(sink=sink)
    with _verbatim_literals():
        for line_number, line in _lines(text):
            if not line.strip() or line.lstrip().startswith('#'):
                continue
            sink._line_has_blank = False
            try:
                parser.parsestring(line)
            except (ParseError, ValueError) as err:
                raise NTriplesError(line_number, str(err)) from err
            if sink._line_has_blank:
                sink.blank_lines += 1

    if sink.blank_lines:
        log.warning('Dropped %d lines containing blank nodes',
                    sink.blank_lines)
    if warnings is not None:
        warnings['blank_node_lines'] = sink.blank_lines
    return KnowledgeGraph(sink.statements)


def load_graph(source, warnings=None):
    """Read a graph from a file path or an http(s) URL"""
    if source.startswith(('http://', 'https://')):
        resp = requests.get(source,
                            timeout=getattr(config, 'fetch_timeout', 60))
        if resp.status_code != 200:
            raise RuntimeError('Error fetching graph from %s: %s' %
                               (source, resp.status_code))
        text = resp.content
    else:
        with open(source, 'rb') as _fin:
            text = _fin.read()
    g = parse_ntriples(text, warnings=warnings)
    log.info('Loaded %d statements from %s', len(g), source)
    return g


def graph_difference(a, b):
    """Statements in `a` which are not in `b`"""
    return KnowledgeGraph(frozenset.difference(a, b))


def namespace(iri_value):
    """IRI prefix up to and including the last '/' or '#'"""
    cut = max(iri_value.rfind('/'), iri_value.rfind('#'))
    return iri_value[:cut + 1] if cut >= 0 else iri_value


def apply_exclusions(g, exclude_predicates=(), anonymize_namespaces=(),
                     salt=''):
    """Strip and anonymize statements as agreed during initial contact

    Statements whose predicate is listed in `exclude_predicates` are
    removed. Any IRI under one of `anonymize_namespaces` is replaced
    with the namespace followed by a salted SHA-256 token, so both
    parties still produce equal statements for equal inputs.
    """
    exclude = set(exclude_predicates)
    prefixes = tuple(anonymize_namespaces)
    if not exclude and not prefixes:
        return g

    def _anon(term):
        if prefixes and term.is_iri:
            for prefix in prefixes:
                if term.value.startswith(prefix):
                    token = hashlib.sha256(
                        (salt + term.value).encode('utf-8')).hexdigest()
                    return iri(prefix + token[:32])
        return term

    kept = set()
    for s in g:
        if s.predicate.value in exclude:
            continue
        kept.add(Statement(_anon(s.subject), _anon(s.predicate),
                           _anon(s.object)))
    log.info('Exclusion rules kept %d of %d statements', len(kept), len(g))
    return KnowledgeGraph(kept)
