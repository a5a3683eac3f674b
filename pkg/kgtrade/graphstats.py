"""Simple graph statistics shared during initial contact

The catalog is fixed and ordered. Changing it (adding, removing or
reordering measures) requires bumping CATALOG_VERSION, since both
parties and the verifier compare statistics by position.
"""
from collections import Counter
from dataclasses import dataclass

from kgtrade.graph import RDF_TYPE, namespace

CATALOG_VERSION = 1

CATALOG = (
    'statements',
    'distinct_subjects',
    'distinct_predicates',
    'distinct_objects',
    'distinct_resources',
    'distinct_literals',
    'distinct_iris',
    'literal_object_statements',
    'iri_object_statements',
    'out_degree_avg',
    'out_degree_min',
    'out_degree_max',
    'in_degree_avg',
    'in_degree_min',
    'in_degree_max',
    'predicate_frequency_avg',
    'predicate_frequency_min',
    'predicate_frequency_max',
    'distinct_subject_predicate_pairs',
    'distinct_predicate_object_pairs',
    'distinct_subject_object_pairs',
    'subject_and_object_nodes',
    'distinct_classes',
    'typed_subjects',
    'literal_length_avg',
    'literal_length_max',
    'distinct_datatypes',
    'distinct_languages',
    'self_loops',
    'density',
    'distinct_namespaces',
    'statements_per_subject_avg',
    'statements_per_object_avg',
)


@dataclass(frozen=True)
class GraphStatistics:
    """The statistics catalog evaluated on one graph"""
    values: tuple
    version: int = CATALOG_VERSION

    def __getitem__(self, name):
        return self.values[CATALOG.index(name)]

    def as_dict(self):
        """Measures keyed by name, in catalog order"""
        return dict(zip(CATALOG, self.values))

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data[name] for name in CATALOG))


def _avg(total, count):
    return total / count if count else 0


def _degree_summary(counts, nodes):
    """avg/min/max of a per-node count, over all nodes"""
    if not nodes:
        return 0, 0, 0
    per_node = [counts.get(n, 0) for n in nodes]
    return _avg(sum(per_node), len(per_node)), min(per_node), max(per_node)


def compute_statistics(g):
    """Evaluate every measure in CATALOG on a graph

    Degrees are taken over all nodes (subjects and objects, literals
    included), so a node which is only ever an object has out-degree 0.
    Averages over an empty graph are 0.

    Parameters
    ----------
    g : KnowledgeGraph

    Returns
    -------
    GraphStatistics
    """
    subjects = Counter(s.subject for s in g)
    predicates = Counter(s.predicate for s in g)
    objects = Counter(s.object for s in g)
    nodes = set(subjects) | set(objects)

    literals = {o for o in objects if not o.is_iri}
    resources = set(subjects) | {o for o in objects if o.is_iri}
    iris = resources | set(predicates)
    literal_objects = sum(c for o, c in objects.items() if not o.is_iri)

    out_avg, out_min, out_max = _degree_summary(subjects, nodes)
    in_avg, in_min, in_max = _degree_summary(objects, nodes)
    freq = list(predicates.values())
    literal_lengths = [len(lit.value.encode('utf-8')) for lit in literals]

    typed = [s for s in g if s.predicate.value == RDF_TYPE]

    values = (
        len(g),
        len(subjects),
        len(predicates),
        len(objects),
        len(resources),
        len(literals),
        len(iris),
        literal_objects,
        len(g) - literal_objects,
        out_avg, out_min, out_max,
        in_avg, in_min, in_max,
        _avg(sum(freq), len(freq)),
        min(freq, default=0),
        max(freq, default=0),
        len({(s.subject, s.predicate) for s in g}),
        len({(s.predicate, s.object) for s in g}),
        len({(s.subject, s.object) for s in g}),
        len(set(subjects) & set(objects)),
        len({s.object for s in typed}),
        len({s.subject for s in typed}),
        _avg(sum(literal_lengths), len(literal_lengths)),
        max(literal_lengths, default=0),
        len({lit.datatype for lit in literals if lit.datatype}),
        len({lit.language for lit in literals if lit.language}),
        sum(1 for s in g if s.subject == s.object),
        _avg(len(g), len(resources) ** 2),
        len({namespace(t.value) for t in iris}),
        _avg(len(g), len(subjects)),
        _avg(len(g), len(objects)),
    )
    return GraphStatistics(values)


def vocabulary(g):
    """Sorted namespaces used by the IRIs in a graph"""
    return sorted({namespace(t.value) for s in g for t in s if t.is_iri})
