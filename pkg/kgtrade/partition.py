"""Step 4 preprocessing: split the Seller's statements into n parts

Parts should be comparable: similar in size and, for the clustered
strategy, each a connected piece of the graph so that what the Buyer
receives reads as coherent knowledge rather than scattered statements.
Both strategies are deterministic given the seed, which lets the Buyer
repeat the partitioning during verification.
"""
import collections
import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from kgtrade.graph import KnowledgeGraph

log = logging.getLogger(__name__)

RANDOM = 'random'
CLUSTERED = 'clustered'


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    parts: tuple
    strategy: str
    seed: int

    def __len__(self):
        return len(self.parts)

    def sizes(self):
        return [len(p) for p in self.parts]


def _check(g, n):
    if n < 1:
        raise PartitionError('Number of parts must be positive, got %d' % n)
    if n > len(g):
        raise PartitionError('Cannot split %d statements into %d parts'
                             % (len(g), n))


def _targets(total, n):
    """Part sizes differing by at most one"""
    base, extra = divmod(total, n)
    return [base + 1 if i < extra else base for i in range(n)]


def partition_random(g, n, seed):
    """Shuffle the statements and deal them out into n parts"""
    _check(g, n)
    statements = g.sorted()
    order = np.random.default_rng(seed).permutation(len(statements))
    parts = [set() for _ in range(n)]
    for rank, idx in enumerate(order):
        parts[rank % n].add(statements[idx])
    return Partition(tuple(KnowledgeGraph(p) for p in parts), RANDOM, seed)


def partition_balanced_clustered(g, n, seed):
    """Grow n connected parts of nearly equal size

    Statements are edges between their subject and object. Each part is
    grown breadth-first from a peripheral node (the node with the fewest
    unassigned statements, ties broken by a seeded ranking) until it
    reaches its share of the graph. A part only jumps to a new seed
    when its current component is used up.

    Parameters
    ----------
    g : KnowledgeGraph
    n : int
    seed : int

    Returns
    -------
    Partition
    """
    _check(g, n)
    statements = g.sorted()
    graph = nx.MultiGraph()
    for idx, stmt in enumerate(statements):
        graph.add_edge(stmt.subject, stmt.object, key=idx)

    nodes = sorted(graph.nodes, key=lambda t: t.n3())
    order = np.random.default_rng(seed).permutation(len(nodes))
    rank = {nodes[i]: r for r, i in enumerate(order)}
    remaining = {node: graph.degree(node) for node in nodes}
    assigned = [None] * len(statements)

    def _pick_seed():
        open_nodes = [v for v, deg in remaining.items() if deg > 0]
        return min(open_nodes, key=lambda v: (remaining[v], rank[v]))

    parts = []
    for target in _targets(len(statements), n):
        part = len(parts)
        size = 0
        queue = collections.deque()
        while size < target:
            if not queue:
                queue.append(_pick_seed())
            node = queue.popleft()
            incident = sorted(graph.edges(node, keys=True),
                              key=lambda e: e[2])
            for _, neighbor, idx in incident:
                if size == target:
                    break
                if assigned[idx] is not None:
                    continue
                assigned[idx] = part
                size += 1
                # A self-loop counts twice towards the degree.
                remaining[node] -= 1
                remaining[neighbor] -= 1
                if neighbor != node:
                    queue.append(neighbor)
        parts.append(part)

    buckets = [set() for _ in range(n)]
    for idx, part in enumerate(assigned):
        buckets[part].add(statements[idx])
    result = Partition(tuple(KnowledgeGraph(b) for b in buckets), CLUSTERED,
                       seed)
    log.info('Clustered partition sizes: %s', result.sizes())
    return result


STRATEGIES = {
    RANDOM: partition_random,
    CLUSTERED: partition_balanced_clustered,
}


def make_partition(g, n, seed, strategy=CLUSTERED):
    try:
        func = STRATEGIES[strategy]
    except KeyError:
        raise PartitionError('Unknown partition strategy %r' % strategy) \
            from None
    return func(g, n, seed)
