"""The trading session for both roles

A session runs through five steps:

  1. initial contact: HELLO, CONFIG (Buyer proposes, Seller accepts)
     and the Seller's graph statistics
  2. private set intersection: blind signatures, then a Bloom filter
  3. entropy metrics: blind signatures, then one counting filter each
  4. oblivious transfer of k of the n parts of the Seller's graph
  5. disclosure of everything the Seller used, for verification

Every blind batch of Steps 2 and 3 is served before the Seller sends
any filter. After each step the Buyer sends CONTINUE or ABORT; either
party may abort at any point with an ABORT frame carrying the step and
the reason.
"""
import base64
import configparser
import contextlib
import dataclasses
import enum
import hashlib
import logging
import secrets
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from kgtrade import (blindsig, bloom, config, entropy, graphstats, leakledger,
                     net, ot, partition, psi, verify, wire)
from kgtrade.graph import (KnowledgeGraph, apply_exclusions, canonical_bytes,
                           parse_ntriples, serialize)
from kgtrade.leakledger import Direction
from kgtrade.net import MessageType

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 'kgtrade/1'
PSI_BATCH = 0

# Abort reasons
USER_DECLINE = 'user-decline'
CONFIG_MISMATCH = 'config-mismatch'
SIGNATURE_BUDGET = 'signature-budget'
PROTOCOL_VIOLATION = 'protocol-violation'
SIGNATURE_MISMATCH = 'signature-mismatch'
INTEGRITY_FAILURE = 'integrity-failure'
PARTITION_ERROR = 'partition-error'
TRANSPORT_FAILURE = 'transport-failure'
INTERNAL_ERROR = 'internal-error'


class ConfigError(ValueError):
    pass


class ProtocolViolation(ValueError):
    """The peer sent something the protocol does not allow here"""
    pass


@contextlib.contextmanager
def peer_document(what):
    """Treat a malformed document from the peer as a protocol violation"""
    try:
        yield
    except (KeyError, TypeError, ValueError, AttributeError) as err:
        if isinstance(err, ProtocolViolation):
            raise
        raise ProtocolViolation('Malformed %s: %r' % (what, err)) from err


class SessionAborted(RuntimeError):
    def __init__(self, step, reason):
        super().__init__('Aborted(%s, %s)' % (step, reason))
        self.step = step
        self.reason = reason


# Fields which only affect the local party and are never negotiated.
LOCAL_FIELDS = ('continue_after_step1', 'continue_after_step2',
                'continue_after_step3', 'continue_after_step4', 'verify',
                'workers', 'sign_fraction')

_BOOLEANS = {'1': True, 'yes': True, 'true': True, 'on': True,
             '0': False, 'no': False, 'false': False, 'off': False}


@dataclass(frozen=True)
class SessionConfig:
    psi_fpr: float = 1e-6
    counting_fpr: float = 1e-6
    metrics: tuple = ('PRED_OBJ_DESC',)
    parts: int = 10
    buy: int = 1
    signature_budget: int = 10_000_000
    exclude_predicates: tuple = ()
    anonymize_namespaces: tuple = ()
    anonymization_salt: str = ''
    decoy_count: int = 0
    rsa_bits: int = 2048
    filter_seed: str = ''
    partition_strategy: str = partition.CLUSTERED
    run_intersection: bool = True
    stats_after_signing: bool = False
    share_vocabulary: bool = False
    psi_noise_fraction: float = 0.0
    adversary_model: str = 'fair'

    continue_after_step1: bool = True
    continue_after_step2: bool = True
    continue_after_step3: bool = True
    continue_after_step4: bool = True
    verify: str = 'exact'
    workers: int = None
    sign_fraction: float = 1.0

    def __post_init__(self):
        for name in ('metrics', 'exclude_predicates', 'anonymize_namespaces'):
            value = getattr(self, name)
            if isinstance(value, str):
                value = [v for v in value.split(',')]
            value = tuple(v.strip() for v in value if v.strip())
            if name == 'metrics':
                value = tuple(v.upper() for v in value)
            object.__setattr__(self, name, value)

    def validate(self):
        if not 1 <= self.buy <= self.parts:
            raise ConfigError('Need 1 <= buy <= parts, got buy=%d parts=%d'
                              % (self.buy, self.parts))
        for name in ('psi_fpr', 'counting_fpr'):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError('%s must be in (0, 1)' % name)
        if not 0 <= self.psi_noise_fraction < 1:
            raise ConfigError('psi_noise_fraction must be in [0, 1)')
        try:
            self.entropy_metrics
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.partition_strategy not in partition.STRATEGIES:
            raise ConfigError('Unknown partition strategy %r'
                              % self.partition_strategy)
        try:
            leakledger.AdversaryModel.parse(self.adversary_model)
        except ValueError:
            raise ConfigError('Unknown adversary model %r'
                              % self.adversary_model) from None
        if self.filter_seed and len(self._seed_bytes()) != bloom.SEED_BYTES:
            raise ConfigError('filter_seed must be %d hex-encoded bytes'
                              % bloom.SEED_BYTES)
        if self.verify not in ('exact', 'fast', 'none'):
            raise ConfigError("verify must be 'exact', 'fast' or 'none'")
        if self.signature_budget < 0 or self.decoy_count < 0:
            raise ConfigError('Budgets and counts must not be negative')
        if not 0 < self.sign_fraction <= 1:
            raise ConfigError('sign_fraction must be in (0, 1]')
        return self

    @property
    def entropy_metrics(self):
        return tuple(entropy.metric_by_name(m) for m in self.metrics)

    @property
    def model(self):
        return leakledger.AdversaryModel.parse(self.adversary_model)

    def _seed_bytes(self):
        try:
            return bytes.fromhex(self.filter_seed)
        except ValueError:
            raise ConfigError('filter_seed is not hex') from None

    def psi_seed(self):
        return self._seed_bytes()

    def counting_seed(self, metric):
        digest = hashlib.sha256(self._seed_bytes()
                                + wire.u8(metric.value)).digest()
        return digest[:bloom.SEED_BYTES]

    def negotiable(self):
        doc = {}
        for f in dataclasses.fields(self):
            if f.name in LOCAL_FIELDS:
                continue
            value = getattr(self, f.name)
            doc[f.name] = list(value) if isinstance(value, tuple) else value
        return doc

    def with_overrides(self, **overrides):
        return dataclasses.replace(
            self, **{k: v for k, v in overrides.items() if v is not None})

    def accept(self, proposal):
        """The configuration a Seller with this config agrees to

        Every negotiable field must match, except that the Buyer may
        pick a subset of the offered metrics and choose the filter seed
        when the Seller left it empty.

        Raises
        ------
        ConfigError
        """
        mine, theirs = self.negotiable(), proposal.negotiable()
        differ = []
        for name, value in theirs.items():
            if name == 'metrics':
                if not set(value) <= set(mine[name]):
                    differ.append(name)
            elif name == 'filter_seed' and not mine[name]:
                continue
            elif mine[name] != value:
                differ.append(name)
        if differ:
            raise ConfigError('Proposal differs in %s' % ', '.join(differ))
        local = {name: getattr(self, name) for name in LOCAL_FIELDS}
        return dataclasses.replace(proposal, **local)

    @classmethod
    def from_document(cls, doc):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError('Unknown config keys: %s'
                              % ', '.join(sorted(unknown)))
        return cls(**{k: tuple(v) if isinstance(v, list) else v
                      for k, v in doc.items()}).validate()

    @classmethod
    def from_file(cls, path, **overrides):
        """Read a flat key = value file

        Values are coerced to the type of each field's default. Lists
        are comma separated.
        """
        parser = configparser.ConfigParser()
        with open(path) as _fin:
            parser.read_string('[session]\n' + _fin.read())
        values = {key: cls.coerce(key, text)
                  for key, text in parser['session'].items()}
        return cls(**values).with_overrides(**overrides).validate()

    @classmethod
    def coerce(cls, key, text):
        """Convert the text form of one field to its type

        Raises
        ------
        ConfigError
        """
        defaults = cls()
        if not hasattr(defaults, key):
            raise ConfigError('Unknown config key %r' % key)
        default = getattr(defaults, key)
        text = text.strip()
        try:
            if isinstance(default, bool):
                if text.lower() not in _BOOLEANS:
                    raise ValueError(text)
                return _BOOLEANS[text.lower()]
            if isinstance(default, int) or key == 'workers':
                return int(text)
            if isinstance(default, float):
                return float(text)
        except ValueError:
            raise ConfigError('Bad value %r for %s' % (text, key)) from None
        return text


class SessionState(enum.Enum):
    INIT = 'Init'
    STEP1_DONE = 'Step1Done'
    SIGNATURES_SERVED = 'SignaturesServed'
    FILTERS_SENT = 'FiltersSent'
    STEP3_DONE = 'Step3Done'
    STEP4_DONE = 'Step4Done'
    CLOSED = 'Closed'
    ABORTED = 'Aborted'


_ORDER = list(SessionState)


@dataclass
class Outcome:
    state: SessionState = SessionState.INIT
    step: str = None
    reason: str = None

    @property
    def aborted(self):
        return self.state is SessionState.ABORTED

    def advance(self, state):
        if self.aborted:
            raise ProtocolViolation('Session already aborted')
        if _ORDER.index(state) <= _ORDER.index(self.state):
            raise ProtocolViolation('Cannot move from %s to %s'
                                    % (self.state.value, state.value))
        log.info('Session state %s -> %s', self.state.value, state.value)
        self.state = state

    def abort(self, step, reason):
        self.state = SessionState.ABORTED
        self.step, self.reason = step, reason

    def __str__(self):
        if self.aborted:
            return 'Aborted(%s, %s)' % (self.step, self.reason)
        return self.state.value


@dataclass(frozen=True)
class TranscriptRecord:
    step: str
    direction: Direction
    tag: MessageType
    length: int
    digest: str
    payload: bytes = field(repr=False, default=b'')


class Transcript:
    """Append-only record of every frame sent or received"""

    def __init__(self, records=None):
        self.records = list(records or [])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, step, direction, frame):
        self.records.append(TranscriptRecord(
            step, direction, frame.tag, len(frame.payload),
            hashlib.sha256(frame.payload).hexdigest(), frame.payload))

    def frames(self, tag, direction=None):
        return [r for r in self.records if r.tag is tag
                and (direction is None or r.direction is direction)]

    def bytes_by_direction(self):
        return {d: sum(r.length for r in self.records if r.direction is d)
                for d in Direction}

    def to_document(self):
        return [{'step': r.step, 'direction': r.direction.value,
                 'tag': r.tag.name, 'length': r.length, 'digest': r.digest,
                 'payload': base64.b64encode(r.payload).decode('ascii')}
                for r in self.records]

    @classmethod
    def from_document(cls, doc):
        return cls(TranscriptRecord(r['step'], Direction(r['direction']),
                                    MessageType[r['tag']], r['length'],
                                    r['digest'],
                                    base64.b64decode(r['payload']))
                   for r in doc)


@dataclass
class Disclosure:
    """Everything the Seller used, released after the deal"""
    graph_text: bytes
    keys: blindsig.BlindKeyPair
    ot_keys: blindsig.BlindKeyPair
    ot_seed: bytes
    partition_seed: int
    partition_strategy: str
    filter_seed: bytes
    noise_seed: bytes = None

    def to_document(self):
        def _key(k):
            return {name: '%x' % getattr(k, name)
                    for name in ('n', 'e', 'd', 'p', 'q')}
        return {'graph': self.graph_text.decode('utf-8'),
                'key': _key(self.keys),
                'ot_key': _key(self.ot_keys),
                'ot_seed': self.ot_seed.hex(),
                'partition_seed': self.partition_seed,
                'partition_strategy': self.partition_strategy,
                'filter_seed': self.filter_seed.hex(),
                'noise_seed': self.noise_seed.hex() if self.noise_seed
                else None}


@dataclass
class Findings:
    """What the Buyer learned, kept for verification"""
    intersection: psi.IntersectionResult = None
    entropy: list = field(default_factory=list)
    parts: list = field(default_factory=list)

    def to_document(self):
        doc = {'intersection': None, 'entropy': [], 'parts': []}
        if self.intersection is not None:
            doc['intersection'] = serialize(
                self.intersection.statements).decode('utf-8')
            if self.intersection.tested is not None:
                doc['tested'] = serialize(
                    self.intersection.tested).decode('utf-8')
        doc['entropy'] = [r.as_dict() for r in self.entropy]
        doc['parts'] = [{'index': p.index,
                         'statements': serialize(p.statements).decode('utf-8')}
                        for p in self.parts]
        return doc

    @classmethod
    def from_document(cls, doc):
        intersection = None
        if doc.get('intersection') is not None:
            tested = doc.get('tested')
            intersection = psi.IntersectionResult(
                parse_ntriples(doc['intersection']),
                tested=parse_ntriples(tested) if tested is not None else None)
        results = [entropy.EntropyResult(entropy.metric_by_name(r['metric']),
                                         r['h_buyer'], r['h_merged_estimate'],
                                         r['gain'], r['uncorrected'])
                   for r in doc.get('entropy', [])]
        parts = [ot.RecoveredPart(p['index'], parse_ntriples(p['statements']))
                 for p in doc.get('parts', [])]
        return cls(intersection, results, parts)


@dataclass
class SessionResult:
    role: str
    config: SessionConfig
    transcript: Transcript
    ledger: leakledger.LeakLedger
    outcome: Outcome
    timings: OrderedDict
    traffic: net.TrafficMeter
    statistics: graphstats.GraphStatistics = None
    findings: Findings = None
    disclosure: Disclosure = None
    verification: object = None
    seller_graph: KnowledgeGraph = None


class _Endpoint:
    """A channel plus the transcript and timing of one party"""

    def __init__(self, channel, role):
        channel.role = role
        self.channel = channel
        self.role = role
        self.transcript = Transcript()
        self.timings = OrderedDict()
        self.outcome = Outcome()
        self._step_start = None

    @property
    def step(self):
        return self.channel.step

    def enter(self, step):
        now = time.perf_counter()
        if self._step_start is not None:
            prev = self.channel.step
            self.timings[prev] = (self.timings.get(prev, 0.0)
                                  + now - self._step_start)
        self.channel.step = step
        self._step_start = now

    def finish(self):
        self.enter(self.channel.step)
        self._step_start = None

    def send(self, tag, payload=b''):
        frame = net.send_frame(self.channel, tag, payload)
        self.transcript.append(self.step, self.channel.outbound, frame)
        return frame

    def recv(self, *expected):
        frame = net.recv_frame(self.channel)
        self.transcript.append(self.step, self.channel.inbound, frame)
        if frame.tag is MessageType.ABORT:
            doc = wire.read_document(frame.payload)
            raise SessionAborted(doc.get('step', self.step),
                                 doc.get('reason', 'unknown'))
        if expected and frame.tag not in expected:
            raise ProtocolViolation('Expected %s in %s, got %s'
                                    % ('/'.join(t.name for t in expected),
                                       self.step, frame.tag.name))
        return frame

    def abort(self, reason, notify=True):
        step = self.step
        log.warning('%s aborting in %s: %s', self.role, step, reason)
        if notify:
            try:
                self.send(MessageType.ABORT,
                          wire.document({'step': step, 'reason': reason}))
            except (net.ChannelClosedError, net.TransportError):
                pass
        self.outcome.abort(step, reason)


def _batch(kind, values, pub):
    return wire.u8(kind) + wire.bigints(values, pub.size_bytes)


def decode_batch(payload):
    reader = wire.Reader(payload)
    kind = reader.u8()
    values = reader.bigints()
    reader.done()
    return kind, values


def counting_payload(metric, f):
    return wire.u8(metric.value) + bloom.encode_counting_filter(f)


def decode_counting_payload(payload):
    try:
        metric = entropy.EntropyMetric(payload[0])
    except (IndexError, ValueError):
        raise wire.WireError('Bad metric tag in counting filter') from None
    return metric, bloom.decode_counting_filter(payload[1:])


def _hello(role, pub=None):
    doc = {'protocol': PROTOCOL_VERSION, 'role': role}
    if pub is not None:
        doc['n'] = '%x' % pub.n
        doc['e'] = pub.e
    return wire.document(doc)


def read_hello(payload, role):
    doc = wire.read_document(payload)
    if doc.get('protocol') != PROTOCOL_VERSION or doc.get('role') != role:
        raise ProtocolViolation('Unexpected HELLO %r' % doc)
    if 'n' in doc:
        with peer_document('HELLO'):
            return blindsig.PublicKey(int(doc['n'], 16), int(doc['e']))
    return None


def stats_payload(stats, vocab=None):
    doc = {'version': stats.version, 'statistics': stats.as_dict()}
    if vocab is not None:
        doc['vocabulary'] = vocab
    return wire.document(doc)


def prepared_graph(g, cfg):
    return apply_exclusions(g, cfg.exclude_predicates,
                            cfg.anonymize_namespaces, cfg.anonymization_salt)


def run_seller(cfg, graph, channel, keys=None, ot_keys=None):
    """Run the Seller's side of a session

    Parameters
    ----------
    cfg : SessionConfig
        What this Seller offers; the accepted config is the Buyer's
        proposal if it is compatible.
    graph : KnowledgeGraph
    channel : net.Channel
    keys, ot_keys : blindsig.BlindKeyPair, optional
        Signing and transfer keys; fresh ones are generated if absent.

    Returns
    -------
    SessionResult
    """
    ep = _Endpoint(channel, 'seller')
    ledger = leakledger.LeakLedger(cfg.model)
    result = SessionResult('seller', cfg, ep.transcript, ledger, ep.outcome,
                           ep.timings, channel.meter)
    try:
        _seller_session(cfg, graph, ep, ledger, result, keys, ot_keys)
    except SessionAborted as err:
        log.info('Buyer aborted in %s: %s', err.step, err.reason)
        ep.outcome.abort(err.step, err.reason)
    except ConfigError as err:
        log.warning('Rejecting proposal: %s', err)
        ep.abort(CONFIG_MISMATCH)
    except partition.PartitionError as err:
        log.warning('%s', err)
        ep.abort(PARTITION_ERROR)
    except _BudgetExceeded:
        ep.abort(SIGNATURE_BUDGET)
    except (ProtocolViolation, wire.WireError, net.FramingError,
            ot.OTProtocolError) as err:
        log.warning('Protocol violation: %s', err)
        ep.abort(PROTOCOL_VIOLATION)
    except (net.ChannelClosedError, net.TransportError) as err:
        log.warning('Transport failure: %s', err)
        ep.abort(TRANSPORT_FAILURE, notify=False)
    except Exception:  # NOQA
        log.exception('Unhandled error in the Seller session')
        ep.abort(INTERNAL_ERROR)
        raise
    finally:
        ep.finish()
    return result


class _BudgetExceeded(Exception):
    pass


def _seller_session(offer, graph, ep, ledger, result, keys, ot_keys):
    workers = offer.workers
    ep.enter('step1')
    ep.recv(MessageType.HELLO)
    keys = keys or blindsig.keygen(offer.rsa_bits)
    ep.send(MessageType.HELLO, _hello('seller', keys.public))

    proposal = SessionConfig.from_document(
        wire.read_document(ep.recv(MessageType.CONFIG).payload))
    cfg = offer.accept(proposal)
    result.config = cfg
    ledger.model = cfg.model
    ep.send(MessageType.CONFIG, wire.document(cfg.negotiable()))

    g = prepared_graph(graph, cfg)
    result.seller_graph = g
    stats = graphstats.compute_statistics(g)
    result.statistics = stats
    vocab = graphstats.vocabulary(g) if cfg.share_vocabulary else None

    def _send_stats():
        ep.send(MessageType.STATS, stats_payload(stats, vocab))
        leakledger.record_statistics_shared(ledger, len(graphstats.CATALOG))
        if vocab is not None:
            leakledger.record_vocabulary_shared(ledger)

    if not cfg.stats_after_signing:
        _send_stats()
    selection = wire.read_document(ep.recv(MessageType.CONTINUE).payload)
    with peer_document('metric selection'):
        metrics = tuple(entropy.metric_by_name(m)
                        for m in selection.get('metrics', cfg.metrics))
    if not set(m.name for m in metrics) <= set(cfg.metrics):
        raise ProtocolViolation('Buyer selected metrics outside the config')
    if not cfg.stats_after_signing:
        ep.outcome.advance(SessionState.STEP1_DONE)

    # All blind batches, before any filter.
    kinds = ([PSI_BATCH] if cfg.run_intersection else []) \
        + [m.value for m in metrics]
    served = 0
    batch_sizes = {}
    for kind in kinds:
        ep.enter('step2' if kind == PSI_BATCH else 'step3')
        got, values = decode_batch(ep.recv(MessageType.BLIND_BATCH).payload)
        if got != kind:
            raise ProtocolViolation('Expected batch %d, got %d' % (kind, got))
        served += len(values)
        if served > cfg.signature_budget:
            log.warning('Signature budget of %d exceeded',
                        cfg.signature_budget)
            raise _BudgetExceeded()
        for v in values:
            if not 0 <= v < keys.n:
                raise ProtocolViolation('Blinded value out of range')
        signed = blindsig.sign_batch(values, keys, workers)
        ep.send(MessageType.SIGNED_BATCH, _batch(kind, signed, keys.public))
        batch_sizes[kind] = len(values)
        leakledger.record_requests_served(ledger, ep.step)
    ep.recv(MessageType.CONTINUE)
    if cfg.stats_after_signing:
        ep.enter('step1')
        _send_stats()
        ep.recv(MessageType.CONTINUE)
        ep.outcome.advance(SessionState.STEP1_DONE)
    ep.outcome.advance(SessionState.SIGNATURES_SERVED)

    noise_seed = None
    ep.enter('step2')
    if cfg.run_intersection:
        if cfg.psi_noise_fraction:
            noise_seed = secrets.token_bytes(bloom.SEED_BYTES)
        f = psi.seller_build_filter(g, keys, cfg.psi_fpr, cfg.psi_seed(),
                                    cfg.psi_noise_fraction, noise_seed,
                                    workers)
        ep.send(MessageType.PSI_FILTER, bloom.encode_filter(f))
    ep.outcome.advance(SessionState.FILTERS_SENT)
    ep.recv(MessageType.CONTINUE)

    ep.enter('step3')
    for metric in metrics:
        ms = entropy.derive_multiset(g, metric)
        f = entropy.seller_build_counting_filter(
            ms, keys, cfg.counting_fpr, cfg.counting_seed(metric),
            batch_sizes[metric.value], workers)
        ep.send(MessageType.COUNTING_FILTER, counting_payload(metric, f))
    ep.outcome.advance(SessionState.STEP3_DONE)
    ep.recv(MessageType.CONTINUE)

    ep.enter('step4')
    ot_keys = ot_keys or blindsig.keygen(cfg.rsa_bits)
    part_seed = secrets.randbits(63)
    parts = partition.make_partition(g, cfg.parts, part_seed,
                                     cfg.partition_strategy)
    ot_seed = ot.new_seed()
    setup, ot_secrets = ot.seller_prepare(parts, ot_keys, ot_seed)
    ep.send(MessageType.OT_SETUP, ot.encode_setup(setup))
    values = ot.decode_request(ep.recv(MessageType.OT_REQUEST).payload)
    if len(values) != cfg.buy:
        raise ProtocolViolation('Buyer requested %d parts, agreed on %d'
                                % (len(values), cfg.buy))
    response = ot.seller_respond(values, setup, ot_secrets, ot_keys, workers)
    ep.send(MessageType.OT_RESPONSE, ot.encode_response(response))
    ep.outcome.advance(SessionState.STEP4_DONE)
    ep.recv(MessageType.CONTINUE)

    ep.enter('step5')
    disclosure = Disclosure(serialize(graph), keys, ot_keys, ot_seed,
                            part_seed, cfg.partition_strategy, cfg.psi_seed(),
                            noise_seed)
    ep.send(MessageType.DISCLOSURE, wire.document(disclosure.to_document()))
    result.disclosure = disclosure
    ep.outcome.advance(SessionState.CLOSED)


def _default_decide(cfg):
    def decide(step, info):
        return getattr(cfg, 'continue_after_%s' % step, True)
    return decide


def run_buyer(cfg, graph, channel, decide=None, choose_metrics=None,
              rng=None):
    """Run the Buyer's side of a session

    Parameters
    ----------
    cfg : SessionConfig
        The proposal sent to the Seller.
    graph : KnowledgeGraph
    channel : net.Channel
    decide : callable, optional
        decide(step, info) -> bool, asked after each of Steps 1-4.
        Defaults to the config's `continue_after_*` fields.
    choose_metrics : callable, optional
        choose_metrics(metrics, statistics) -> subset of metric names
        to compute, asked once the statistics are known.
    rng : random.Random, optional
        Source of blinding factors and part choices.

    Returns
    -------
    SessionResult
    """
    ep = _Endpoint(channel, 'buyer')
    if not cfg.filter_seed:
        cfg = cfg.with_overrides(
            filter_seed=secrets.token_hex(bloom.SEED_BYTES))
    cfg.validate()
    decide = decide or _default_decide(cfg)
    ledger = leakledger.LeakLedger(cfg.model)
    findings = Findings()
    result = SessionResult('buyer', cfg, ep.transcript, ledger, ep.outcome,
                           ep.timings, channel.meter, findings=findings)
    try:
        _buyer_session(cfg, graph, ep, ledger, result, decide,
                       choose_metrics, rng)
    except SessionAborted as err:
        log.info('Seller aborted in %s: %s', err.step, err.reason)
        ep.outcome.abort(err.step, err.reason)
    except _Declined:
        ep.abort(USER_DECLINE)
    except psi.SignatureMismatchError as err:
        log.warning('Seller misbehaved: %s', err)
        ep.abort(SIGNATURE_MISMATCH)
    except ot.IntegrityError as err:
        log.warning('Seller misbehaved: %s', err)
        ep.abort(INTEGRITY_FAILURE)
    except (ProtocolViolation, ConfigError, wire.WireError, net.FramingError,
            ot.OTProtocolError, bloom.FilterParamsError) as err:
        log.warning('Protocol violation: %s', err)
        ep.abort(PROTOCOL_VIOLATION)
    except (net.ChannelClosedError, net.TransportError) as err:
        log.warning('Transport failure: %s', err)
        ep.abort(TRANSPORT_FAILURE, notify=False)
    except Exception:  # NOQA
        log.exception('Unhandled error in the Buyer session')
        ep.abort(INTERNAL_ERROR)
        raise
    finally:
        ep.finish()
    return result


class _Declined(Exception):
    pass


def _ask(ep, decide, step, info, state=None):
    if not decide(step, info):
        raise _Declined()
    ep.send(MessageType.CONTINUE)
    if state is not None:
        ep.outcome.advance(state)


def _buyer_session(cfg, graph, ep, ledger, result, decide, choose_metrics,
                   rng):
    findings = result.findings
    ep.enter('step1')
    ep.send(MessageType.HELLO, _hello('buyer'))
    pub = read_hello(ep.recv(MessageType.HELLO).payload, 'seller')
    if pub is None:
        raise ProtocolViolation('Seller HELLO carries no public key')
    ep.send(MessageType.CONFIG, wire.document(cfg.negotiable()))
    echoed = SessionConfig.from_document(
        wire.read_document(ep.recv(MessageType.CONFIG).payload))
    if echoed.negotiable() != cfg.negotiable():
        raise ProtocolViolation('Seller changed the configuration')
    g = prepared_graph(graph, cfg)

    def _read_stats():
        doc = wire.read_document(ep.recv(MessageType.STATS).payload)
        with peer_document('STATS'):
            stats = graphstats.GraphStatistics.from_dict(doc['statistics'])
        result.statistics = stats
        leakledger.record_statistics_shared(ledger, len(graphstats.CATALOG))
        if 'vocabulary' in doc:
            leakledger.record_vocabulary_shared(ledger)
        return stats, doc.get('vocabulary')

    metrics = cfg.entropy_metrics
    info = {}
    if not cfg.stats_after_signing:
        stats, vocab = _read_stats()
        info = {'statistics': stats, 'vocabulary': vocab}
        if not decide('step1', info):
            raise _Declined()
        if choose_metrics is not None:
            chosen = choose_metrics([m.name for m in metrics], stats)
            metrics = tuple(entropy.metric_by_name(m) for m in chosen)
    ep.send(MessageType.CONTINUE,
            wire.document({'metrics': [m.name for m in metrics]}))
    if not cfg.stats_after_signing:
        ep.outcome.advance(SessionState.STEP1_DONE)

    # Ask for every signature before any filter arrives.
    batches = []
    tested = g
    if cfg.run_intersection:
        tested = psi.sample_statements(g, cfg.sign_fraction, rng)
        batches.append((PSI_BATCH, psi.buyer_prepare_requests(
            tested, pub, rng, cfg.decoy_count)))
    own = {}
    for metric in metrics:
        own[metric] = entropy.derive_multiset(g, metric)
        messages = [entropy.element_bytes(e)
                    for e in entropy.sorted_elements(own[metric])]
        batches.append((metric.value, psi.prepare_blind_requests(
            messages, pub, rng, cfg.decoy_count)))

    signatures = {}
    for kind, requests in batches:
        ep.enter('step2' if kind == PSI_BATCH else 'step3')
        ep.send(MessageType.BLIND_BATCH, _batch(kind, requests.values, pub))
        got, signed = decode_batch(ep.recv(MessageType.SIGNED_BATCH).payload)
        if got != kind:
            raise ProtocolViolation('Signed batch %d answers batch %d'
                                    % (got, kind))
        signatures[kind] = psi.unblind_responses(requests, signed, pub)
    ep.send(MessageType.CONTINUE)
    if cfg.stats_after_signing:
        ep.enter('step1')
        stats, vocab = _read_stats()
        info = {'statistics': stats, 'vocabulary': vocab}
        _ask(ep, decide, 'step1', info, SessionState.STEP1_DONE)
    ep.outcome.advance(SessionState.SIGNATURES_SERVED)

    intersection = None
    ep.enter('step2')
    if cfg.run_intersection:
        f = bloom.decode_filter(ep.recv(MessageType.PSI_FILTER).payload)
        intersection = psi.buyer_compute_intersection(
            tested, signatures[PSI_BATCH], f, pub)
        if tested is not g:
            intersection = dataclasses.replace(intersection, tested=tested)
        findings.intersection = intersection
        tallies = leakledger.term_tallies(intersection.statements)
        leakledger.record_intersection(
            ledger, len(intersection), tallies['ILSubjects'],
            tallies['ILPredicates'], tallies['ILObjects'],
            tallies['ILResources'], cfg.model)
    ep.outcome.advance(SessionState.FILTERS_SENT)
    _ask(ep, decide, 'step2', {'intersection': intersection})

    ep.enter('step3')
    for metric in metrics:
        got, f = decode_counting_payload(
            ep.recv(MessageType.COUNTING_FILTER).payload)
        if got is not metric:
            raise ProtocolViolation('Counting filter for %s, expected %s'
                                    % (got.name, metric.name))
        res = entropy.buyer_merged_entropy(g, intersection, metric, f,
                                           signatures[metric.value], pub)
        findings.entropy.append(res)
        leakledger.record_entropy_metric(
            ledger, metric, cfg.model, i_s=res.seller_total,
            e_s=res.seller_cells, e_b=own[metric].distinct,
            matched=res.matched, matched_seller_count=res.matched_seller_count)
    ep.outcome.advance(SessionState.STEP3_DONE)
    _ask(ep, decide, 'step3', {'entropy': findings.entropy})

    ep.enter('step4')
    setup = ot.decode_setup(ep.recv(MessageType.OT_SETUP).payload)
    if len(setup) != cfg.parts:
        raise ProtocolViolation('Seller offered %d parts, agreed on %d'
                                % (len(setup), cfg.parts))
    indices = ot.buyer_choose(cfg.buy, cfg.parts, rng)
    request = ot.buyer_request(indices, setup, rng)
    ep.send(MessageType.OT_REQUEST, ot.encode_request(request, setup.pub))
    response = ot.decode_response(ep.recv(MessageType.OT_RESPONSE).payload)
    findings.parts = ot.buyer_recover(response, request, setup)
    leakledger.record_ot(ledger, [p.statements for p in findings.parts])
    ep.outcome.advance(SessionState.STEP4_DONE)
    _ask(ep, decide, 'step4', {'parts': findings.parts})

    ep.enter('step5')
    frame = ep.recv(MessageType.DISCLOSURE)
    doc = wire.read_document(frame.payload)
    ep.outcome.advance(SessionState.CLOSED)
    try:
        result.disclosure = verify.load_disclosure(doc)
        if cfg.verify != 'none':
            ep.enter('verification')
            result.verification = verify.verify_disclosure(
                result.disclosure, ep.transcript, graph, cfg.verify,
                findings, cfg.workers)
    except verify.DisclosureError as err:
        log.warning('Seller disclosure rejected: %s', err)
        result.verification = verify.rejected(cfg.verify, err)


def run_loopback(seller_cfg, seller_graph, buyer_cfg, buyer_graph,
                 keys=None, ot_keys=None, **buyer_kwargs):
    """Run both roles in this process over a loopback channel

    Returns
    -------
    (SessionResult, SessionResult)
        The Seller's and the Buyer's results.
    """
    seller_end, buyer_end = net.loopback_pair()
    with ThreadPoolExecutor(max_workers=1) as pool:
        future = pool.submit(run_seller, seller_cfg, seller_graph,
                             seller_end, keys, ot_keys)
        try:
            buyer = run_buyer(buyer_cfg, buyer_graph, buyer_end,
                              **buyer_kwargs)
        finally:
            buyer_end.close()
        seller = future.result()
    seller_end.close()
    return seller, buyer


def run_plain_baseline(cfg, seller_graph, buyer_graph):
    """Traffic of the same exchange without any cryptography

    The Buyer sends plain statement and element hashes, the Seller
    answers with filters over plain hashes and sends k parts in the
    clear. Used to report the overhead of the private protocol.

    Returns
    -------
    net.TrafficMeter
    """
    seller_end, buyer_end = net.loopback_pair()
    seller_end.role, buyer_end.role = 'seller', 'buyer'
    g_s = prepared_graph(seller_graph, cfg)
    g_b = prepared_graph(buyer_graph, cfg)
    seed = cfg.psi_seed() if cfg.filter_seed else bytes(bloom.SEED_BYTES)

    def _exchange(step, sender, tag, payload):
        for ch in (seller_end, buyer_end):
            ch.step = step
        net.send_frame(sender, tag, payload)
        net.recv_frame(buyer_end if sender is seller_end else seller_end)

    _exchange('step1', buyer_end, MessageType.HELLO, _hello('buyer'))
    _exchange('step1', seller_end, MessageType.HELLO, _hello('seller'))
    _exchange('step1', buyer_end, MessageType.CONFIG,
              wire.document(cfg.negotiable()))
    _exchange('step1', seller_end, MessageType.CONFIG,
              wire.document(cfg.negotiable()))
    _exchange('step1', seller_end, MessageType.STATS,
              stats_payload(graphstats.compute_statistics(g_s)))
    if cfg.run_intersection:
        hashes = [hashlib.sha256(s).digest()
                  for s in map(canonical_bytes, g_b.sorted())]
        _exchange('step2', buyer_end, MessageType.BLIND_BATCH,
                  wire.u32(len(hashes)) + b''.join(hashes))
        f = bloom.BloomFilter(bloom.optimal_params(len(g_s), cfg.psi_fpr,
                                                   seed))
        for stmt in g_s:
            bloom.insert(f, canonical_bytes(stmt))
        _exchange('step2', seller_end, MessageType.PSI_FILTER,
                  bloom.encode_filter(f))
    for metric in cfg.entropy_metrics:
        ms = entropy.derive_multiset(g_s, metric)
        mb = entropy.derive_multiset(g_b, metric)
        f = bloom.CountingBloomFilter(bloom.counting_params(
            ms.distinct + mb.distinct, cfg.counting_fpr, seed))
        for elem, count in ms.items():
            bloom.counting_insert(f, entropy.element_bytes(elem), count)
        _exchange('step3', seller_end, MessageType.COUNTING_FILTER,
                  counting_payload(metric, f))
    parts = partition.make_partition(g_s, min(cfg.parts, len(g_s)), 0,
                                     cfg.partition_strategy)
    chosen = b''.join(serialize(p) for p in parts.parts[:cfg.buy])
    _exchange('step4', seller_end, MessageType.OT_RESPONSE, chosen)
    seller_end.close()
    buyer_end.close()
    return buyer_end.meter
