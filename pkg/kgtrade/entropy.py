"""Step 3: entropy gain metrics over merged multisets

Each metric derives a multiset from a graph (one or more elements per
statement). The Seller sends a counting Bloom filter holding his
multiset, keyed by signed digests as in Step 2. The Buyer adds the
counts of his own multiset, minus the statements already known to be in
the intersection, and computes the entropy of the combined counter
array. The gain is that entropy minus the entropy of his own multiset.
"""
import enum
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from kgtrade import blindsig, bloom, psi
from kgtrade.graph import graph_difference

log = logging.getLogger(__name__)


class EntropyMetric(enum.Enum):
    """Multiset choices; the value is the wire tag"""
    SUBJECTS = 1
    PREDICATES = 2
    OBJECTS = 3
    RESOURCES = 4
    SUBJ_PRED = 5
    PRED_OBJ_DESC = 6
    SUBJ_OBJ = 7
    STATEMENTS = 8
    LITERALS = 9


# Number of statement parts in one element, and which positions they are.
PROJECTIONS = {
    EntropyMetric.SUBJECTS: ('subject',),
    EntropyMetric.PREDICATES: ('predicate',),
    EntropyMetric.OBJECTS: ('object',),
    EntropyMetric.RESOURCES: (),
    EntropyMetric.SUBJ_PRED: ('subject', 'predicate'),
    EntropyMetric.PRED_OBJ_DESC: ('predicate', 'object'),
    EntropyMetric.SUBJ_OBJ: ('subject', 'object'),
    EntropyMetric.STATEMENTS: ('subject', 'predicate', 'object'),
    EntropyMetric.LITERALS: ('object',),
}


def arity(metric):
    return max(1, len(PROJECTIONS[metric]))


def metric_by_name(name):
    try:
        return EntropyMetric[name.strip().upper()]
    except KeyError:
        raise ValueError('Unknown entropy metric %r' % name) from None


class Multiset(Counter):
    """Elements (tuples of Terms) mapped to positive counts"""

    @property
    def cardinality(self):
        return sum(self.values())

    @property
    def distinct(self):
        return len(self)


@dataclass
class EntropyResult:
    metric: EntropyMetric
    h_buyer: float
    h_merged_estimate: float
    gain: float
    uncorrected: bool = False
    # What the filter revealed, used for leak accounting.
    seller_total: int = 0
    seller_cells: int = 0
    matched: list = field(default_factory=list, repr=False)
    matched_seller_count: int = 0

    def as_dict(self):
        return {'metric': self.metric.name,
                'h_buyer': self.h_buyer,
                'h_merged_estimate': self.h_merged_estimate,
                'gain': self.gain,
                'uncorrected': self.uncorrected}


def _elements(stmt, metric):
    s, p, o = stmt
    if metric is EntropyMetric.SUBJECTS:
        return [(s,)]
    elif metric is EntropyMetric.PREDICATES:
        return [(p,)]
    elif metric is EntropyMetric.OBJECTS:
        return [(o,)]
    elif metric is EntropyMetric.RESOURCES:
        return [(t,) for t in stmt if t.is_iri]
    elif metric is EntropyMetric.SUBJ_PRED:
        return [(s, p)]
    elif metric is EntropyMetric.PRED_OBJ_DESC:
        return [(p, o)]
    elif metric is EntropyMetric.SUBJ_OBJ:
        return [(s, o)]
    elif metric is EntropyMetric.STATEMENTS:
        return [(s, p, o)]
    elif metric is EntropyMetric.LITERALS:
        return [] if o.is_iri else [(o,)]
    raise ValueError('Unknown entropy metric %r' % metric)


def element_bytes(element):
    """Canonical encoding of a multiset element"""
    return ' '.join(t.n3() for t in element).encode('utf-8')


def derive_multiset(g, metric):
    """The multiset for `metric` of a graph"""
    ms = Multiset()
    for stmt in g:
        ms.update(_elements(stmt, metric))
    return ms


def _entropy(counts):
    counts = np.asarray(counts, dtype=np.float64)
    counts = counts[counts > 0]
    if not counts.size:
        return 0.0
    probs = counts / counts.sum()
    return float(-(probs * np.log2(probs)).sum())


def shannon_entropy(ms):
    """Entropy in bits of a multiset; 0 for the empty multiset"""
    return _entropy(list(ms.values()))


def entropy_from_counters(counters, k=1):
    """Entropy of the distribution held in a counter array

    Each element is counted in k cells, which adds log2(k) bits to the
    plain entropy of the nonzero counters. Exact when no two elements
    share a cell.
    """
    if k < 1:
        raise ValueError('k must be positive')
    h = _entropy(counters)
    if h == 0.0:
        return 0.0
    return h - float(np.log2(k))


def sorted_elements(ms):
    return sorted(ms, key=element_bytes)


def seller_build_counting_filter(ms, keys, p, seed=bytes(bloom.SEED_BYTES),
                                 expected_buyer=0, parallelism=None):
    """Counting filter of a multiset, keyed by signed digests

    Parameters
    ----------
    ms : Multiset
    keys : blindsig.BlindKeyPair
    p : float
        Target false-positive rate; also sets the cell count.
    seed : bytes, optional
    expected_buyer : int, optional
        Number of elements the Buyer will add. The filter is sized for
        both multisets so that his elements rarely share a cell.

    Returns
    -------
    bloom.CountingBloomFilter
    """
    params = bloom.counting_params(ms.distinct + expected_buyer, p, seed)
    f = bloom.CountingBloomFilter(params)
    elements = sorted_elements(ms)
    messages = [element_bytes(e) for e in elements]
    pub = keys.public
    sigs = psi.sign_messages(messages, keys, parallelism)
    for elem, msg, sig in zip(elements, messages, sigs):
        bloom.counting_insert(f, blindsig.signed_digest(msg, sig, pub),
                              ms[elem])
    log.info('Counting filter: %d elements, %d total, m=%d', ms.distinct,
             ms.cardinality, f.params.m)
    return f


def _merge_single_hash(f, residual, cells_of):
    """Entropy of the merged counts for a k=1 filter

    The Seller's count in a cell is added to the first of the Buyer's
    elements landing there. Further Buyer elements in the same cell are
    known to be distinct and keep their own counts.
    """
    touched = {}
    for elem in sorted_elements(residual):
        touched.setdefault(cells_of(elem)[0], []).append(residual[elem])

    counts = []
    for cell, own_counts in touched.items():
        counts.append(own_counts[0] + int(f.counters[cell]))
        counts.extend(own_counts[1:])
    seller_only = f.counters > 0
    seller_only[np.fromiter(touched, dtype=np.intp,
                            count=len(touched))] = False
    counts.extend(f.counters[seller_only].tolist())
    return _entropy(counts)


def buyer_merged_entropy(buyer_graph, intersection, metric, f, signatures,
                         pub):
    """Estimate the entropy gain of merging the Seller's multiset

    Parameters
    ----------
    buyer_graph : KnowledgeGraph
    intersection : psi.IntersectionResult or None
        Statements found in Step 2. Without it, or when only a sample
        of the Buyer's statements was tested, shared statements are
        counted twice and the result is flagged `uncorrected`.
    metric : EntropyMetric
    f : bloom.CountingBloomFilter
        The Seller's filter for this metric.
    signatures : dict
        Element bytes mapped to verified, unblinded signatures, for
        every element of the Buyer's multiset.
    pub : blindsig.PublicKey

    Returns
    -------
    EntropyResult
    """
    own = derive_multiset(buyer_graph, metric)
    if intersection is None:
        residual = own
    else:
        residual = derive_multiset(
            graph_difference(buyer_graph, intersection.statements), metric)

    def _cells(elem):
        msg = element_bytes(elem)
        sig = signatures.get(msg)
        if sig is None:
            raise psi.SignatureMismatchError(-1, 'no signature for element '
                                             '%s' % msg.decode('utf-8'))
        return bloom.positions(f.params, blindsig.signed_digest(msg, sig,
                                                                pub))

    if f.params.k == 1:
        h_merged = _merge_single_hash(f, residual, _cells)
    else:
        combined = f.counters.astype(np.int64)
        for elem, count in residual.items():
            for cell in _cells(elem):
                combined[cell] += count
        h_merged = entropy_from_counters(combined, f.params.k)

    matched = []
    matched_count = 0
    for elem in sorted_elements(own):
        seen = int(f.counters[_cells(elem)].min())
        if seen:
            matched.append(elem)
            matched_count += seen

    h_buyer = shannon_entropy(own)
    log.info('%s: H(buyer)=%.4f H(merged)=%.4f', metric.name, h_buyer,
             h_merged)
    return EntropyResult(metric, h_buyer, h_merged, h_merged - h_buyer,
                         uncorrected=(intersection is None
                                      or intersection.tested is not None),
                         seller_total=f.total,
                         seller_cells=int(np.count_nonzero(f.counters)),
                         matched=matched,
                         matched_seller_count=matched_count)


def exact_merged_entropy(seller_graph, buyer_graph, metric):
    """Entropy of the merged multiset computed on plain sets"""
    return shannon_entropy(derive_multiset(seller_graph | buyer_graph,
                                           metric))
