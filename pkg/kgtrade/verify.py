"""Step 5: check the Seller's conduct from his disclosure

Everything the Seller computed is deterministic given the disclosed
graph, keys and seeds. In exact mode the Buyer repeats the Seller's side
of Steps 1-4 and compares every payload in the transcript byte for
byte. Fast mode needs no private key: it recomputes the intersection
and the entropies on plain sets and multisets and compares the values
the protocol produced, within the sketches' tolerance.
"""
import logging
import math
from dataclasses import dataclass, field

from kgtrade import (blindsig, bloom, entropy, graphstats, ot, partition,
                     protocol, psi, wire)
from kgtrade.graph import NTriplesError, graph_difference, parse_ntriples
from kgtrade.leakledger import Direction
from kgtrade.net import MessageType

log = logging.getLogger(__name__)

ENTROPY_TOLERANCE = 0.02
EXACT = 'exact'
FAST = 'fast'

_KEY_FIELDS = ('key', 'ot_key', 'ot_seed', 'partition_seed',
               'partition_strategy', 'filter_seed')


class DisclosureError(ValueError):
    """The Seller's disclosure cannot be checked"""
    pass


class IncompleteDisclosureError(DisclosureError):
    def __init__(self, missing):
        super().__init__('Disclosure lacks %s' % ', '.join(missing))
        self.missing = missing


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    evidence: str = ''


@dataclass
class VerificationReport:
    mode: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, evidence=''):
        passed = bool(passed)
        self.checks.append(Check(name, passed, evidence))
        if not passed:
            log.warning('Verification check %s failed: %s', name, evidence)
        return passed

    def as_dict(self):
        return {'mode': self.mode,
                'passed': self.passed,
                'checks': [{'name': c.name, 'passed': c.passed,
                            'evidence': c.evidence} for c in self.checks]}


def _key(doc):
    return blindsig.BlindKeyPair(*(int(doc[name], 16)
                                   for name in ('n', 'e', 'd', 'p', 'q')))


def load_disclosure(doc, require_keys=True):
    """Build a Disclosure from its wire document

    Raises
    ------
    DisclosureError
        If a field is missing or malformed.
    """
    needed = ('graph',) + (_KEY_FIELDS if require_keys else ())
    missing = [name for name in needed if doc.get(name) is None]
    if missing:
        raise IncompleteDisclosureError(missing)

    def _opt(name, convert):
        value = doc.get(name)
        if value is None:
            return None
        try:
            return convert(value)
        except (KeyError, TypeError, ValueError) as err:
            raise DisclosureError('Malformed %s in disclosure: %r'
                                  % (name, err)) from err

    if not isinstance(doc.get('graph'), str):
        raise DisclosureError('Disclosed graph is not text')
    return protocol.Disclosure(
        doc['graph'].encode('utf-8'),
        _opt('key', _key),
        _opt('ot_key', _key),
        _opt('ot_seed', bytes.fromhex),
        _opt('partition_seed', int),
        doc.get('partition_strategy'),
        _opt('filter_seed', bytes.fromhex),
        _opt('noise_seed', bytes.fromhex))


def rejected(mode, err):
    """A failed report for a disclosure that could not be checked"""
    report = VerificationReport(mode)
    report.add('disclosure_complete', False, str(err))
    return report


def _one(transcript, tag, direction=None):
    frames = transcript.frames(tag, direction)
    return frames[0].payload if frames else None


def _check_order(report, transcript):
    tags = [r.tag for r in transcript]
    signed = [i for i, t in enumerate(tags) if t is MessageType.SIGNED_BATCH]
    filters = [i for i, t in enumerate(tags)
               if t in (MessageType.PSI_FILTER, MessageType.COUNTING_FILTER)]
    ok = not signed or not filters or max(signed) < min(filters)
    report.add('ordering', ok,
               '' if ok else 'filter frame %d precedes signed batch %d'
               % (min(filters), max(signed)))


def _check_statistics(report, transcript, g):
    payload = _one(transcript, MessageType.STATS)
    if payload is None:
        return
    doc = wire.read_document(payload)
    claimed = doc['statistics']
    actual = graphstats.compute_statistics(g).as_dict()
    wrong = [name for name in graphstats.CATALOG
             if not math.isclose(claimed.get(name, -1), actual[name],
                                 rel_tol=1e-9, abs_tol=1e-12)]
    report.add('statistics', not wrong,
               'mismatch in %s' % ', '.join(wrong) if wrong else '')
    if 'vocabulary' in doc:
        ok = doc['vocabulary'] == graphstats.vocabulary(g)
        report.add('vocabulary', ok, '' if ok else 'namespace list differs')


def _batches(transcript):
    """(kind, blinded values, signed values) for every served batch"""
    asked = transcript.frames(MessageType.BLIND_BATCH, Direction.B_TO_S)
    signed = transcript.frames(MessageType.SIGNED_BATCH, Direction.S_TO_B)
    out = []
    for req, resp in zip(asked, signed):
        kind, values = protocol.decode_batch(req.payload)
        _, sigs = protocol.decode_batch(resp.payload)
        out.append((kind, values, sigs))
    return out


def _verify_exact(report, disclosure, transcript, cfg, g, findings,
                  parallelism):
    keys, ot_keys = disclosure.keys, disclosure.ot_keys
    hello = _one(transcript, MessageType.HELLO, Direction.S_TO_B)
    pub = protocol.read_hello(hello, 'seller') if hello else None
    ok = blindsig.check_keypair(keys) and pub == keys.public
    report.add('signing_key', ok, '' if ok else
               'disclosed key does not match the announced public key')
    if not ok:
        return

    batches = _batches(transcript)
    for kind, values, sigs in batches:
        expected = blindsig.sign_batch(values, keys, parallelism)
        bad = [i for i, (a, b) in enumerate(zip(expected, sigs)) if a != b]
        if len(expected) != len(sigs):
            bad.append(min(len(expected), len(sigs)))
        report.add('signed_batch.%d' % kind, not bad,
                   'first wrong signature at %d' % bad[0] if bad else '')

    payload = _one(transcript, MessageType.PSI_FILTER)
    if payload is not None:
        if cfg.psi_noise_fraction and disclosure.noise_seed is None:
            raise IncompleteDisclosureError(['noise_seed'])
        f = psi.seller_build_filter(g, keys, cfg.psi_fpr, cfg.psi_seed(),
                                    cfg.psi_noise_fraction,
                                    disclosure.noise_seed, parallelism)
        ok = bloom.encode_filter(f) == payload
        report.add('psi_filter', ok, '' if ok else
                   'rebuilt filter differs from the one sent')

    sizes = {kind: len(values) for kind, values, _ in batches}
    for frame in transcript.frames(MessageType.COUNTING_FILTER):
        metric, _ = protocol.decode_counting_payload(frame.payload)
        f = entropy.seller_build_counting_filter(
            entropy.derive_multiset(g, metric), keys, cfg.counting_fpr,
            cfg.counting_seed(metric), sizes.get(metric.value, 0),
            parallelism)
        ok = protocol.counting_payload(metric, f) == frame.payload
        report.add('counting_filter.%s' % metric.name, ok, '' if ok else
                   'rebuilt counting filter differs from the one sent')

    payload = _one(transcript, MessageType.OT_SETUP)
    if payload is None:
        return
    ok = (blindsig.check_keypair(ot_keys)
          and ot.decode_setup(payload).pub == ot_keys.public)
    report.add('transfer_key', ok, '' if ok else
               'disclosed transfer key does not match the setup')
    if not ok:
        return
    parts = partition.make_partition(g, cfg.parts, disclosure.partition_seed,
                                     disclosure.partition_strategy)
    setup, ot_secrets = ot.seller_prepare(parts, ot_keys, disclosure.ot_seed)
    ok = ot.encode_setup(setup) == payload
    report.add('ot_setup', ok, '' if ok else
               'rebuilt envelopes or nonces differ from the setup sent')

    request = _one(transcript, MessageType.OT_REQUEST)
    response = _one(transcript, MessageType.OT_RESPONSE)
    if request is not None and response is not None:
        replay = ot.seller_respond(ot.decode_request(request), setup,
                                   ot_secrets, ot_keys, parallelism)
        ok = ot.encode_response(replay) == response
        report.add('ot_response', ok, '' if ok else
                   'masked keys differ from the replayed transfer')

    if findings is not None and findings.parts:
        expected = set(parts.parts)
        bad = [p.index for p in findings.parts
               if p.statements not in expected]
        report.add('parts', not bad, 'parts %s are not partition parts'
                   % bad if bad else '')


def _verify_fast(report, transcript, cfg, g, g_b, findings):
    if findings is None:
        return
    tested = g_b
    if findings.intersection is not None:
        if findings.intersection.tested is not None:
            tested = findings.intersection.tested
        true = g & tested
        found = findings.intersection.statements
        missing = true - found
        extra = found - true
        allowance = 1.0
        payload = _one(transcript, MessageType.PSI_FILTER)
        if payload is not None:
            f = bloom.decode_filter(payload)
            fpr = (f.popcount / f.params.m) ** f.params.k
            expected = fpr * len(tested - true)
            allowance = expected + 3 * math.sqrt(expected) + 1
        ok = not missing and len(extra) <= allowance
        report.add('intersection', ok,
                   '%d missing, %d unexpected' % (len(missing), len(extra)))

    for res in findings.entropy:
        if res.uncorrected:
            # Only the statements found in the tested sample were removed.
            residual = g_b
            if tested is not g_b:
                residual = graph_difference(g_b, g & tested)
            merged = entropy.derive_multiset(g, res.metric) \
                + entropy.derive_multiset(residual, res.metric)
            exact = entropy.shannon_entropy(entropy.Multiset(merged))
        else:
            exact = entropy.exact_merged_entropy(g, g_b, res.metric)
        diff = abs(res.h_merged_estimate - exact)
        report.add('entropy.%s' % res.metric.name, diff <= ENTROPY_TOLERANCE,
                   'estimate %.4f, exact %.4f' % (res.h_merged_estimate,
                                                  exact))


def verify_disclosure(disclosure, transcript, own_graph, mode=EXACT,
                      findings=None, parallelism=None):
    """Check a finished session against the Seller's disclosure

    Parameters
    ----------
    disclosure : protocol.Disclosure
    transcript : protocol.Transcript
        The Buyer's transcript, with payloads.
    own_graph : KnowledgeGraph
        The Buyer's graph, before exclusion rules.
    mode : {'exact', 'fast'}
    findings : protocol.Findings, optional
        What the Buyer computed; needed for the plain-set comparisons
        and for checking the received parts.

    Returns
    -------
    VerificationReport

    Raises
    ------
    DisclosureError
        If exact mode lacks the keys or seeds it needs to replay, or the
        disclosed graph is malformed.
    """
    if mode not in (EXACT, FAST):
        raise ValueError('Unknown verification mode %r' % mode)
    if mode == EXACT:
        missing = [name for name, value in (
            ('key', disclosure.keys), ('ot_key', disclosure.ot_keys),
            ('ot_seed', disclosure.ot_seed),
            ('partition_seed', disclosure.partition_seed),
            ('filter_seed', disclosure.filter_seed)) if value is None]
        if missing:
            raise IncompleteDisclosureError(missing)

    config_frames = transcript.frames(MessageType.CONFIG, Direction.S_TO_B)
    if not config_frames:
        raise IncompleteDisclosureError(['agreed configuration'])
    cfg = protocol.SessionConfig.from_document(
        wire.read_document(config_frames[0].payload))
    try:
        disclosed = parse_ntriples(disclosure.graph_text)
    except NTriplesError as err:
        raise DisclosureError('Disclosed graph is malformed: %s'
                              % err) from err
    g = protocol.prepared_graph(disclosed, cfg)
    g_b = protocol.prepared_graph(own_graph, cfg)

    report = VerificationReport(mode)
    _check_order(report, transcript)
    _check_statistics(report, transcript, g)
    if mode == EXACT:
        _verify_exact(report, disclosure, transcript, cfg, g, findings,
                      parallelism)
    else:
        _verify_fast(report, transcript, cfg, g, g_b, findings)
    if findings is not None and findings.parts:
        bad = [p.index for p in findings.parts if not p.statements <= g]
        report.add('parts_in_graph', not bad,
                   'parts %s hold statements outside the graph' % bad
                   if bad else '')
    log.info('Verification (%s): %d checks, %d failed', mode,
             len(report.checks), len(report.failures()))
    return report
