"""Scaling benchmark over synthetic graph pairs

Graphs are built from balanced clusters of subjects which describe
each other and carry a few literal attributes. The Buyer's graph
shares a chosen fraction of its statements with the Seller's and fills
the rest from clusters the Seller does not have.

Each size of the schedule runs full loopback sessions and records wall
time and payload traffic per direction. A least-squares line through
the measurements gives the cost per statement and how well a linear
model explains it.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from kgtrade import blindsig, protocol
from kgtrade.graph import KnowledgeGraph, Statement, iri, literal
from kgtrade.leakledger import Direction

log = logging.getLogger(__name__)

DEFAULT_SIZES = (1000, 2000, 4000, 8000, 16000)
CLUSTER_SIZE = 25
N_PREDICATES = 12
BASE = 'http://example.org/bench/'


def _cluster(rng, prefix, c, n_statements):
    """Statements of one cluster, `n_statements` of them, all distinct"""
    subjects = [iri('%s%s/c%d/s%d' % (BASE, prefix, c, i))
                for i in range(CLUSTER_SIZE)]
    predicates = [iri('%sp%d' % (BASE, i)) for i in range(N_PREDICATES)]
    out = set()
    counter = 0
    while len(out) < n_statements:
        s = subjects[rng.integers(len(subjects))]
        p = predicates[rng.integers(len(predicates))]
        if rng.random() < 0.6:
            o = subjects[rng.integers(len(subjects))]
        else:
            o = literal('v%d' % rng.integers(50 + counter))
        counter += 1
        out.add(Statement(s, p, o))
    return out


def _statements(rng, prefix, n):
    out = set()
    c = 0
    while len(out) < n:
        out |= _cluster(rng, prefix, c, min(4 * CLUSTER_SIZE, n - len(out)))
        c += 1
    return sorted(out, key=lambda s: (s.subject.value, s.predicate.value,
                                      s.object.n3()))[:n]


def generate_pair(n_statements, overlap=0.25, seed=0):
    """A (seller, buyer) pair of synthetic graphs

    Parameters
    ----------
    n_statements : int
        Size of each graph.
    overlap : float
        Fraction of the Buyer's statements that the Seller also holds.
    seed : int

    Returns
    -------
    (KnowledgeGraph, KnowledgeGraph)
    """
    if not 0 <= overlap <= 1:
        raise ValueError('overlap must be in [0, 1], got %r' % overlap)
    rng = np.random.default_rng(seed)
    seller = _statements(rng, 'seller', n_statements)
    n_shared = int(round(overlap * n_statements))
    shared = [seller[i] for i in sorted(
        rng.choice(len(seller), size=n_shared, replace=False))]
    own = _statements(rng, 'buyer', n_statements - n_shared)
    return KnowledgeGraph(seller), KnowledgeGraph(shared + own)


def linear_fit(x, y):
    """Slope, intercept and coefficient of determination of y ~ x"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (residual ** 2).sum() / total if total else 1.0
    return float(slope), float(intercept), float(r2)


@dataclass
class BenchRow:
    statements: int
    trial: int
    seconds: float
    seller_to_buyer: int
    buyer_to_seller: int
    outcome: str
    plain_bytes: int = None

    def as_dict(self):
        return {'statements': self.statements, 'trial': self.trial,
                'seconds': round(self.seconds, 6),
                'S->B': self.seller_to_buyer, 'B->S': self.buyer_to_seller,
                'outcome': self.outcome, 'plain_bytes': self.plain_bytes}


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def fits(self):
        if len({r.statements for r in self.rows}) < 2:
            return {}
        x = [r.statements for r in self.rows]
        out = {}
        for name, y in (
                ('seconds', [r.seconds for r in self.rows]),
                ('S->B', [r.seller_to_buyer for r in self.rows]),
                ('B->S', [r.buyer_to_seller for r in self.rows])):
            slope, intercept, r2 = linear_fit(x, y)
            out[name] = {'slope': slope, 'intercept': intercept, 'r2': r2}
            if name != 'seconds':
                out[name]['kb_per_statement'] = slope / 1024
        return out

    def overhead_ratio(self):
        ratios = [(r.seller_to_buyer + r.buyer_to_seller) / r.plain_bytes
                  for r in self.rows if r.plain_bytes]
        return float(np.mean(ratios)) if ratios else None

    def as_dict(self):
        doc = {'rows': [r.as_dict() for r in self.rows], 'fits': self.fits()}
        ratio = self.overhead_ratio()
        if ratio is not None:
            doc['plain_overhead_ratio'] = ratio
        return doc

    def table(self):
        lines = ['%10s %6s %10s %12s %12s  %s' % (
            'statements', 'trial', 'seconds', 'S->B', 'B->S', 'outcome')]
        for r in self.rows:
            lines.append('%10d %6d %10.3f %12d %12d  %s' % (
                r.statements, r.trial, r.seconds, r.seller_to_buyer,
                r.buyer_to_seller, r.outcome))
        for name, fit in sorted(self.fits().items()):
            lines.append('%s: slope %.6g per statement, R^2 %.4f'
                         % (name, fit['slope'], fit['r2']))
        return '\n'.join(lines)


def run_bench(cfg, sizes=DEFAULT_SIZES, trials=1, overlap=0.25,
              plain_baseline=False, keys=None, ot_keys=None):
    """Run loopback sessions over a schedule of graph sizes

    Keys are generated once and reused, so key generation is not part
    of the measured time.

    Returns
    -------
    BenchReport
    """
    keys = keys or blindsig.keygen(cfg.rsa_bits)
    ot_keys = ot_keys or blindsig.keygen(cfg.rsa_bits)
    cfg = cfg.with_overrides(verify='none')
    report = BenchReport()
    for size in sizes:
        for trial in range(trials):
            seller_g, buyer_g = generate_pair(size, overlap, seed=trial)
            start = time.perf_counter()
            _, buyer = protocol.run_loopback(cfg, seller_g, cfg, buyer_g,
                                             keys, ot_keys)
            elapsed = time.perf_counter() - start
            plain = None
            if plain_baseline:
                plain = protocol.run_plain_baseline(
                    buyer.config, seller_g, buyer_g).total()
            row = BenchRow(size, trial, elapsed,
                           buyer.traffic.total(Direction.S_TO_B),
                           buyer.traffic.total(Direction.B_TO_S),
                           str(buyer.outcome), plain)
            log.info('Benchmark %d statements (trial %d): %.2fs, %s',
                     size, trial, elapsed, row.outcome)
            report.rows.append(row)
    return report
