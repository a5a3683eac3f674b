"""Bloom filters and counting Bloom filters

Cell positions come from double hashing over a keyed BLAKE2b digest
of the item: position_i = (h1 + i * h2) mod m. Both parties (and the
verifier) must derive identical positions, so the construction depends
only on the item bytes and FilterParams.

Counters are unsigned 32-bit and never saturate; an overflow is an
error because a saturated counter could not be reproduced during
verification.
"""
import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from kgtrade import wire

log = logging.getLogger(__name__)

SEED_BYTES = 16
COUNTER_MAX = np.iinfo(np.uint32).max


class FilterParamsError(ValueError):
    """Filter parameters are out of range"""
    pass


class CounterOverflowError(OverflowError):
    """A counting filter cell exceeded 32 bits; the filter is undersized"""
    pass


class SaturatedFilterError(ValueError):
    """Every bit is set, so the cardinality cannot be estimated"""
    pass


@dataclass(frozen=True)
class FilterParams:
    m: int
    k: int
    seed: bytes = bytes(SEED_BYTES)

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise FilterParamsError('m and k must be positive, got m=%d k=%d'
                                    % (self.m, self.k))
        if len(self.seed) != SEED_BYTES:
            raise FilterParamsError('Seed must be %d bytes' % SEED_BYTES)


def optimal_params(n, p, seed=bytes(SEED_BYTES)):
    """Filter size and hash count for `n` items at false-positive rate `p`

    m = ceil(-n ln p / (ln 2)^2), k = max(1, round((m / n) ln 2))
    """
    if not 0 < p < 1:
        raise FilterParamsError('False positive rate must be in (0, 1), '
                                'got %r' % p)
    n = max(1, n)
    m = math.ceil(-n * math.log(p) / math.log(2) ** 2)
    k = max(1, round((m / n) * math.log(2)))
    return FilterParams(m, k, seed)


def counting_params(n, p, seed=bytes(SEED_BYTES)):
    """Single-hash counting filter sized at m_opt * k_opt cells"""
    opt = optimal_params(n, p)
    return FilterParams(opt.m * opt.k, 1, seed)


def positions(params, item):
    """The k cell indices for an item"""
    digest = hashlib.blake2b(item, key=params.seed, digest_size=16).digest()
    h1 = int.from_bytes(digest[:8], 'little')
    h2 = int.from_bytes(digest[8:], 'little')
    return [(h1 + i * h2) % params.m for i in range(params.k)]


class BloomFilter:
    def __init__(self, params, bits=None, inserted=0):
        self.params = params
        if bits is None:
            bits = np.zeros(params.m, dtype=bool)
        self.bits = bits
        self.inserted = inserted

    def __eq__(self, other):
        return (isinstance(other, BloomFilter)
                and self.params == other.params
                and np.array_equal(self.bits, other.bits))

    def __contains__(self, item):
        return contains(self, item)

    @property
    def popcount(self):
        return int(np.count_nonzero(self.bits))


def insert(f, item):
    f.bits[positions(f.params, item)] = True
    f.inserted += 1
    return f


def contains(f, item):
    return bool(f.bits[positions(f.params, item)].all())


def add_noise(f, fraction, seed):
    """Set ceil(fraction * m) additional, uniformly chosen bits

    Bits which are already set may be chosen again, so the number of
    newly set bits can be smaller. The choice is reproducible from
    `seed`.
    """
    if not 0 <= fraction < 1:
        raise FilterParamsError('Noise fraction must be in [0, 1)')
    extra = math.ceil(fraction * f.params.m)
    if extra:
        rng = np.random.default_rng(int.from_bytes(seed, 'big'))
        f.bits[rng.integers(0, f.params.m, size=extra)] = True
        log.debug('Added %d noise bits', extra)
    return f


def estimate_cardinality(f):
    """Estimate the number of distinct inserted items from the popcount

    n = -(m / k) ln(1 - popcount / m)
    """
    m, k = f.params.m, f.params.k
    ones = f.popcount
    if ones >= m:
        raise SaturatedFilterError('All %d bits are set' % m)
    return -(m / k) * math.log(1 - ones / m)


class CountingBloomFilter:
    def __init__(self, params, counters=None, total=0):
        self.params = params
        if counters is None:
            counters = np.zeros(params.m, dtype=np.uint32)
        self.counters = counters
        self.total = total

    def __eq__(self, other):
        return (isinstance(other, CountingBloomFilter)
                and self.params == other.params
                and self.total == other.total
                and np.array_equal(self.counters, other.counters))

    def __add__(self, other):
        """Pointwise sum of two filters built with the same parameters"""
        if self.params != other.params:
            raise FilterParamsError('Filters must have the same parameters')
        summed = self.counters.astype(np.uint64) + other.counters
        if summed.max(initial=0) > COUNTER_MAX:
            raise CounterOverflowError('Counter overflow while merging')
        return CountingBloomFilter(self.params, summed.astype(np.uint32),
                                   self.total + other.total)


def counting_insert(f, item, multiplicity=1):
    if multiplicity < 1:
        raise ValueError('Multiplicity must be positive')
    cells = positions(f.params, item)
    for cell in cells:
        if int(f.counters[cell]) + multiplicity > COUNTER_MAX:
            raise CounterOverflowError('Counter %d would exceed 32 bits'
                                       % cell)
    for cell in cells:
        f.counters[cell] += multiplicity
    f.total += multiplicity
    return f


def count_query(f, item):
    """Upper bound on the multiplicity of `item` (minimum over its cells)"""
    return int(f.counters[positions(f.params, item)].min())


def _encode_params(params):
    return wire.u64(params.m) + wire.u32(params.k) + params.seed


def _decode_params(reader):
    m, k = reader.u64(), reader.u32()
    return FilterParams(m, k, reader.raw(SEED_BYTES))


def encode_filter(f):
    """Wire form: params, insert count, packed bits (little-endian bit order)"""
    packed = np.packbits(f.bits, bitorder='little').tobytes()
    return _encode_params(f.params) + wire.u64(f.inserted) + wire.blob(packed)


def decode_filter(data):
    reader = wire.Reader(data)
    params = _decode_params(reader)
    inserted = reader.u64()
    packed = np.frombuffer(reader.blob(), dtype=np.uint8)
    reader.done()
    if len(packed) != (params.m + 7) // 8:
        raise wire.WireError('Bit array length does not match m')
    bits = np.unpackbits(packed, count=params.m, bitorder='little')
    return BloomFilter(params, bits.astype(bool), inserted)


def encode_counting_filter(f):
    """Wire form: params, total, counters as little-endian uint32"""
    counters = f.counters.astype('<u4').tobytes()
    return _encode_params(f.params) + wire.u64(f.total) + wire.blob(counters)


def decode_counting_filter(data):
    reader = wire.Reader(data)
    params = _decode_params(reader)
    total = reader.u64()
    raw = reader.blob()
    reader.done()
    if len(raw) != 4 * params.m:
        raise wire.WireError('Counter array length does not match m')
    counters = np.frombuffer(raw, dtype='<u4').astype(np.uint32)
    return CountingBloomFilter(params, counters, total)
