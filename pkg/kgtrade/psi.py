"""Step 2: private set intersection

The Seller inserts signed_digest(statement, signature) for each of his
statements into a Bloom filter. The Buyer obtains the same signatures
on his own statements through blind signing, so he can test them
against the filter, while the Seller never sees which statements were
signed and the Buyer cannot test statements the Seller did not sign.
"""
import logging
import secrets
from dataclasses import dataclass

from kgtrade import blindsig, bloom
from kgtrade.graph import KnowledgeGraph, canonical_bytes

log = logging.getLogger(__name__)


class SignatureMismatchError(ValueError):
    """The Seller returned a signature which does not verify

    This is unambiguous evidence that the Seller deviated from the
    protocol. `index` is the position in the signed batch.
    """
    def __init__(self, index, message):
        super().__init__('Signature %d does not verify: %s' % (index, message))
        self.index = index


@dataclass
class BlindRequests:
    """Blinded values sent to the Seller and the secrets kept by the Buyer

    `messages[i]` is None for a decoy value.
    """
    values: list
    messages: list
    factors: list

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class IntersectionResult:
    statements: KnowledgeGraph
    filter_cardinality_estimate: float = None
    # Statements the Buyer had signed, when only a sample was.
    tested: KnowledgeGraph = None

    def __len__(self):
        return len(self.statements)


def sign_messages(messages, priv, parallelism=None):
    """Direct signatures on a sequence of messages, in order"""
    return blindsig.sign_batch([blindsig.fdh(m, priv.n) for m in messages],
                               priv, parallelism)


def seller_build_filter(g, keys, p, seed=bytes(bloom.SEED_BYTES),
                        noise_fraction=0, noise_seed=None, parallelism=None):
    """Bloom filter over the signed digests of the Seller's statements

    Parameters
    ----------
    g : KnowledgeGraph
    keys : blindsig.BlindKeyPair
    p : float
        Target false-positive rate.
    seed : bytes, optional
        Hash seed of the filter.
    noise_fraction : float, optional
        If positive, add this fraction of random ones to the filter.
    noise_seed : bytes, optional
        Seed for the noise bits; required with `noise_fraction`.

    Returns
    -------
    bloom.BloomFilter
    """
    f = bloom.BloomFilter(bloom.optimal_params(len(g), p, seed))
    messages = [canonical_bytes(s) for s in g.sorted()]
    pub = keys.public
    for msg, sig in zip(messages, sign_messages(messages, keys, parallelism)):
        bloom.insert(f, blindsig.signed_digest(msg, sig, pub))
    if noise_fraction:
        bloom.add_noise(f, noise_fraction, noise_seed)
    log.info('PSI filter: %d statements, m=%d, k=%d', len(g), f.params.m,
             f.params.k)
    return f


def prepare_blind_requests(messages, pub, rng=None, decoy_count=0):
    """Blind each message and pad with decoys, in a shuffled order

    Parameters
    ----------
    messages : sequence of bytes
    pub : blindsig.PublicKey
    rng : random.Random, optional
        Source of blinding factors and of the shuffle. Defaults to
        the system CSPRNG.
    decoy_count : int, optional
        Number of random values to add, hiding the real batch size.

    Returns
    -------
    BlindRequests
    """
    rng = rng or secrets.SystemRandom()
    entries = []
    for msg in messages:
        r = blindsig.random_blinding_factor(pub, rng)
        entries.append((blindsig.blind(msg, r, pub), msg, r))
    for _ in range(decoy_count):
        # A uniform unit mod N looks exactly like a blinded value.
        entries.append((blindsig.random_blinding_factor(pub, rng), None, None))
    rng.shuffle(entries)
    return BlindRequests([e[0] for e in entries], [e[1] for e in entries],
                         [e[2] for e in entries])


def sample_statements(g, fraction, rng=None):
    """A random subset of round(fraction * |g|) statements, at least one

    Getting fewer statements signed hides the size of the Buyer's
    graph, at the cost of learning only part of the intersection.
    """
    if not 0 < fraction <= 1:
        raise ValueError('Sign fraction must be in (0, 1], got %r' % fraction)
    if fraction == 1 or not g:
        return g
    rng = rng or secrets.SystemRandom()
    count = max(1, round(fraction * len(g)))
    return KnowledgeGraph(rng.sample(g.sorted(), count))


def buyer_prepare_requests(g, pub, rng=None, decoy_count=0):
    """Blinded requests for every statement of the Buyer's graph"""
    return prepare_blind_requests([canonical_bytes(s) for s in g.sorted()],
                                  pub, rng, decoy_count)


def unblind_responses(requests, signed, pub):
    """Unblind and verify the Seller's answers

    Returns
    -------
    dict
        Message bytes mapped to the unblinded signature. Decoys are
        dropped.

    Raises
    ------
    SignatureMismatchError
    """
    if len(signed) != len(requests):
        raise SignatureMismatchError(min(len(signed), len(requests)),
                                     'expected %d signatures, got %d'
                                     % (len(requests), len(signed)))
    sigs = {}
    for i, (msg, r, s) in enumerate(zip(requests.messages, requests.factors,
                                        signed)):
        if msg is None:
            continue
        sig = blindsig.unblind(s, r, pub)
        if not blindsig.verify(msg, sig, pub):
            raise SignatureMismatchError(i, 'blinded value %d' %
                                         requests.values[i])
        sigs[msg] = sig
    return sigs


def buyer_compute_intersection(g, signatures, f, pub):
    """Statements of the Buyer's graph which test positive in the filter

    Parameters
    ----------
    g : KnowledgeGraph
        The Buyer's graph.
    signatures : dict
        Canonical statement bytes mapped to unblinded signatures.
    f : bloom.BloomFilter
        The Seller's PSI filter.
    pub : blindsig.PublicKey

    Returns
    -------
    IntersectionResult
    """
    found = set()
    for i, stmt in enumerate(g.sorted()):
        msg = canonical_bytes(stmt)
        sig = signatures.get(msg)
        if sig is None or not blindsig.verify(msg, sig, pub):
            raise SignatureMismatchError(i, 'no valid signature for %s'
                                         % msg.decode('utf-8'))
        if bloom.contains(f, blindsig.signed_digest(msg, sig, pub)):
            found.add(stmt)
    try:
        estimate = bloom.estimate_cardinality(f)
    except bloom.SaturatedFilterError:
        log.warning('PSI filter is saturated; no size estimate')
        estimate = None
    log.info('Intersection holds %d of %d statements', len(found), len(g))
    return IntersectionResult(KnowledgeGraph(found), estimate)
