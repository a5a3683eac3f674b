"""Information leak accounting

Counts what each party learns about the other's graph, per protocol
step and direction:

  ILStatements   parts of statements (subject, predicate or object)
  ILResources    distinct terms
  ILSubjects     distinct subjects
  ILPredicates   distinct predicates
  ILObjects      distinct objects
  ILStructural   pieces of structural information (sizes, counts)
  ILAmount       everything above, one unit per disclosed item

Each entry stores the count realized in this run and the ceiling the
adversary model allows, so that `realized <= ceiling` can be checked.
For entropy metrics other than Desc, the Desc ceilings are generalized
by the number of statement parts in one multiset element.
"""
import enum
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

from kgtrade.entropy import PROJECTIONS, EntropyMetric, arity

log = logging.getLogger(__name__)

METRICS = ('ILStatements', 'ILResources', 'ILSubjects', 'ILPredicates',
           'ILObjects', 'ILStructural', 'ILAmount')
_POSITION_METRICS = {'subject': 'ILSubjects',
                     'predicate': 'ILPredicates',
                     'object': 'ILObjects'}


class UnknownMetricError(KeyError):
    pass


class Direction(enum.Enum):
    S_TO_B = 'S->B'
    B_TO_S = 'B->S'


class AdversaryModel(enum.Enum):
    FAIR = 'fair'
    CURIOUS = 'curious'
    MALICIOUS = 'malicious'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class LeakEntry:
    step: str
    direction: Direction
    metric: str
    realized: int
    ceiling: int


@dataclass
class LeakLedger:
    model: AdversaryModel = AdversaryModel.FAIR
    entries: list = field(default_factory=list)

    def add(self, step, direction, realized, ceilings=None):
        """Record one disclosure

        `realized` maps metric names to counts. ILAmount is derived
        unless given: the sum of statement parts, structural pieces and
        `elements` (sketch elements matched), which callers pass as an
        extra key.
        """
        realized = dict(realized)
        ceilings = dict(ceilings or {})
        elements = realized.pop('elements', 0)
        elements_ceiling = ceilings.pop('elements', elements)
        if 'ILAmount' not in realized:
            realized['ILAmount'] = (realized.get('ILStatements', 0)
                                    + realized.get('ILStructural', 0)
                                    + elements)
        if 'ILAmount' not in ceilings:
            ceilings['ILAmount'] = (
                ceilings.get('ILStatements', realized.get('ILStatements', 0))
                + ceilings.get('ILStructural', realized.get('ILStructural', 0))
                + elements_ceiling)
        for metric in METRICS:
            value = realized.get(metric, 0)
            ceiling = ceilings.get(metric, value)
            if value or ceiling:
                self.entries.append(LeakEntry(step, direction, metric,
                                              int(value), int(ceiling)))
        return self

    def total(self, direction, metric):
        return sum(e.realized for e in self.entries
                   if e.direction is direction and e.metric == metric)

    def ceiling(self, direction, metric):
        return sum(e.ceiling for e in self.entries
                   if e.direction is direction and e.metric == metric)

    def step_entries(self, step):
        return [e for e in self.entries if e.step == step]

    def violations(self):
        return [e for e in self.entries if e.realized > e.ceiling]


def term_tallies(statements):
    """Distinct subjects, predicates, objects and terms of statements"""
    subjects = {s.subject for s in statements}
    predicates = {s.predicate for s in statements}
    objects = {s.object for s in statements}
    return {'ILSubjects': len(subjects),
            'ILPredicates': len(predicates),
            'ILObjects': len(objects),
            'ILResources': len(subjects | predicates | objects)}


def record_statistics_shared(ledger, count, step='step1'):
    """Each shared statistic is one structural piece for the Buyer"""
    if count:
        ledger.add(step, Direction.S_TO_B, {'ILStructural': count})
    return ledger


def record_intersection(ledger, n, subjects=0, predicates=0, objects=0,
                        resources=0, model=None, step='step2'):
    """Leaks of the private set intersection

    The Buyer learns the n shared statements in full. A curious Buyer
    also estimates the Seller's graph size from the filter. The Seller
    learns how many signatures were requested.
    """
    model = AdversaryModel.parse(model or ledger.model)
    structural = 0 if model is AdversaryModel.FAIR else 1
    ledger.add(step, Direction.S_TO_B,
               {'ILStatements': 3 * n,
                'ILResources': resources,
                'ILSubjects': subjects,
                'ILPredicates': predicates,
                'ILObjects': objects,
                'ILStructural': structural},
               {'ILStatements': 3 * n,
                'ILResources': 3 * n,
                'ILSubjects': n,
                'ILPredicates': n,
                'ILObjects': n,
                'ILStructural': structural})
    ledger.add(step, Direction.B_TO_S, {'ILStructural': 1})
    return ledger


def _metric(metric):
    if isinstance(metric, EntropyMetric):
        return metric
    try:
        if isinstance(metric, int):
            return EntropyMetric(metric)
        return EntropyMetric[str(metric).upper()]
    except (KeyError, ValueError):
        raise UnknownMetricError(metric) from None


def record_entropy_metric(ledger, metric, model=None, i_s=0, e_s=0, e_b=0,
                          matched=(), matched_seller_count=0,
                          step='step3'):
    """Leaks of one entropy metric computed over a counting filter

    Parameters
    ----------
    ledger : LeakLedger
    metric : EntropyMetric, int or str
    model : AdversaryModel, optional
        Defaults to the ledger's model.
    i_s : int
        Cardinality of the Seller's multiset (the filter total).
    e_s, e_b : int
        Distinct elements of the Seller's and the Buyer's multisets.
    matched : sequence of tuples of Terms
        Buyer elements found in the filter.
    matched_seller_count : int
        Sum of the Seller counts read for `matched`.
    """
    metric = _metric(metric)
    model = AdversaryModel.parse(model or ledger.model)
    if model is AdversaryModel.FAIR:
        ledger.add(step, Direction.S_TO_B, {'ILStructural': 2},
                   {'ILStructural': 2})
        return ledger

    a = arity(metric)
    terms = {t for elem in matched for t in elem}
    realized = {'ILStatements': a * matched_seller_count,
                'ILResources': len(terms),
                'ILStructural': 3,
                'elements': len(matched)}
    ceilings = {'ILStatements': a * i_s,
                'ILResources': min(a * e_s, a * e_b),
                'ILStructural': 3,
                'elements': e_b}
    for position, name in _POSITION_METRICS.items():
        if position in PROJECTIONS[metric]:
            idx = PROJECTIONS[metric].index(position)
            realized[name] = len({elem[idx] for elem in matched})
            ceilings[name] = min(e_s, e_b)
        else:
            realized[name] = 0
            ceilings[name] = 0
    ledger.add('%s.%s' % (step, metric.name), Direction.S_TO_B, realized,
               ceilings)
    ledger.add('%s.%s' % (step, metric.name), Direction.B_TO_S,
               {'ILStructural': 1})
    return ledger


def record_ot(ledger, parts, step='step4'):
    """The Buyer learns the received parts in full, the Seller nothing"""
    statements = [s for part in parts for s in part]
    if not statements:
        return ledger
    realized = {'ILStatements': 3 * len(statements)}
    realized.update(term_tallies(statements))
    ledger.add(step, Direction.S_TO_B, realized)
    return ledger


def record_vocabulary_shared(ledger, step='step1'):
    ledger.add(step, Direction.S_TO_B, {'ILStructural': 1})
    return ledger


def record_requests_served(ledger, step, model=None):
    """Seller-side view of a blind-signature batch: its size"""
    model = AdversaryModel.parse(model or ledger.model)
    if step == 'step2' or model is not AdversaryModel.FAIR:
        ledger.add(step, Direction.B_TO_S, {'ILStructural': 1})
    return ledger


def report(ledger):
    """Deterministic summary: totals, ceilings and per-step entries"""
    out = OrderedDict()
    out['model'] = ledger.model.value
    for key, func in (('totals', ledger.total), ('ceilings', ledger.ceiling)):
        out[key] = OrderedDict(
            (d.value, OrderedDict((m, func(d, m)) for m in METRICS))
            for d in Direction)
    out['entries'] = [OrderedDict([('step', e.step),
                                   ('direction', e.direction.value),
                                   ('metric', e.metric),
                                   ('realized', e.realized),
                                   ('ceiling', e.ceiling)])
                      for e in ledger.entries]
    violations = ledger.violations()
    if violations:
        log.warning('%d leak counts exceed their ceiling', len(violations))
    return out
