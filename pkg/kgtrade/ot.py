"""Step 4: k-out-of-n oblivious transfer of graph parts

The Seller encrypts each part of his partition under its own AES key and
sends all n envelopes, in a shuffled order, together with n random
nonces x_t. The keys themselves travel through k runs of an RSA-based
1-out-of-n transfer:

    v_j   = x_i + r_j^e mod N                         (Buyer, chose i)
    y_j,t = K_t XOR H((v_j - x_t)^d mod N || t || j)  (Seller, all t)
    K_i   = y_j,i XOR H(r_j || i || j)                (Buyer)

Only for t = i does (v_j - x_t)^d equal r_j, so the Buyer learns one key
per run and the Seller cannot tell which nonce was used to build v_j.

Every random value on the Seller's side is expanded from a seed which
is disclosed after the deal, so the Buyer can rebuild the setup and the
masks byte for byte.
"""
import hashlib
import logging
import secrets
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.backends import default_backend
from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from kgtrade import blindsig, wire
from kgtrade.graph import parse_ntriples, serialize

log = logging.getLogger(__name__)

KEY_BYTES = 32
IV_BYTES = 16
DIGEST_BYTES = 32
SEED_BYTES = 32


class IntegrityError(ValueError):
    """An envelope did not decrypt to a well-formed part"""
    pass


class OTProtocolError(ValueError):
    """An oblivious transfer message has the wrong shape"""
    pass


@dataclass(frozen=True)
class PartEnvelope:
    iv: bytes
    ciphertext: bytes


@dataclass(frozen=True)
class OTSetup:
    """What the Seller publishes before the transfer"""
    pub: blindsig.PublicKey
    nonces: tuple
    envelopes: tuple

    def __len__(self):
        return len(self.envelopes)


@dataclass(frozen=True)
class OTSecrets:
    """Seller-side secrets; `permutation[t]` is the part in envelope t"""
    keys: tuple
    permutation: tuple


@dataclass
class OTRequest:
    values: list
    # Kept by the Buyer, never sent.
    indices: list
    factors: list

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class OTResponse:
    masks: tuple  # k rows of n masked keys

    def __len__(self):
        return len(self.masks)


@dataclass(frozen=True)
class RecoveredPart:
    index: int
    statements: object


def _expand(seed, label, index, nbytes):
    """Deterministic bytes for one labeled Seller value"""
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        out += hashlib.sha256(seed + label + wire.u32(index)
                              + wire.u32(counter)).digest()
        counter += 1
    return bytes(out[:nbytes])


def _mask(value, t, j, pub):
    return hashlib.sha256(value.to_bytes(pub.size_bytes, 'big')
                          + wire.u32(t) + wire.u32(j)).digest()


def _xor(a, b):
    return bytes(x ^ y for x, y in zip(a, b))


def _encrypt(key, iv, plaintext):
    padder = padding.PKCS7(algorithms.AES.block_size).padder()
    data = padder.update(plaintext) + padder.finalize()
    encryptor = Cipher(algorithms.AES(key), modes.CBC(iv),
                       backend=default_backend()).encryptor()
    return encryptor.update(data) + encryptor.finalize()


def seal_part(text, key, iv, length):
    """Envelope for one serialized part, zero-padded to `length` bytes"""
    plaintext = (hashlib.sha256(text).digest() + wire.u64(len(text)) + text
                 + bytes(length - len(text)))
    return PartEnvelope(iv, _encrypt(key, iv, plaintext))


def open_envelope(envelope, key):
    """Decrypt an envelope and check its digest

    Returns
    -------
    bytes
        The serialized part.

    Raises
    ------
    IntegrityError
        If the key is wrong or the envelope was modified.
    """
    if len(envelope.ciphertext) % 16 or not envelope.ciphertext:
        raise IntegrityError('Ciphertext is not a whole number of blocks')
    decryptor = Cipher(algorithms.AES(key), modes.CBC(envelope.iv),
                       backend=default_backend()).decryptor()
    data = decryptor.update(envelope.ciphertext) + decryptor.finalize()
    unpadder = padding.PKCS7(algorithms.AES.block_size).unpadder()
    try:
        plaintext = unpadder.update(data) + unpadder.finalize()
    except ValueError as err:
        raise IntegrityError('Bad padding') from err
    if len(plaintext) < DIGEST_BYTES + 8:
        raise IntegrityError('Plaintext too short')
    reader = wire.Reader(plaintext)
    digest = reader.raw(DIGEST_BYTES)
    size = reader.u64()
    body = reader.rest()
    if size > len(body) or any(body[size:]):
        raise IntegrityError('Bad length field')
    text = body[:size]
    if hashlib.sha256(text).digest() != digest:
        raise IntegrityError('Digest mismatch')
    return text


def new_seed():
    return secrets.token_bytes(SEED_BYTES)


def seller_prepare(partition, keys, seed):
    """Encrypt every part and shuffle the envelopes

    Parameters
    ----------
    partition : partition.Partition
    keys : blindsig.BlindKeyPair
        The key used for the transfer.
    seed : bytes
        Source of the part keys, IVs, nonces and shuffle.

    Returns
    -------
    (OTSetup, OTSecrets)
    """
    n = len(partition)
    if n < 1:
        raise OTProtocolError('Nothing to transfer')
    pub = keys.public
    texts = [serialize(part) for part in partition.parts]
    length = max(len(t) for t in texts)
    part_keys = tuple(_expand(seed, b'key', i, KEY_BYTES) for i in range(n))
    rng = np.random.default_rng(int.from_bytes(seed, 'big'))
    permutation = tuple(int(i) for i in rng.permutation(n))

    envelopes = []
    for t, part in enumerate(permutation):
        iv = _expand(seed, b'iv', t, IV_BYTES)
        envelopes.append(seal_part(texts[part], part_keys[part], iv, length))

    width = pub.size_bytes + 16
    nonces = []
    for t in range(n):
        attempt = 0
        while True:
            x = int.from_bytes(_expand(seed, b'nonce%d' % attempt, t, width),
                               'big') % pub.n
            if x not in nonces:
                break
            attempt += 1
        nonces.append(x)

    setup = OTSetup(pub, tuple(nonces), tuple(envelopes))
    log.info('Prepared %d envelopes of %d bytes', n,
             len(envelopes[0].ciphertext))
    # Envelope t is opened with the key of the part it holds.
    ordered_keys = tuple(part_keys[p] for p in permutation)
    return setup, OTSecrets(ordered_keys, permutation)


def buyer_choose(k, n, rng=None):
    """k distinct envelope positions drawn uniformly from range(n)"""
    if not 1 <= k <= n:
        raise OTProtocolError('Cannot choose %d of %d parts' % (k, n))
    rng = rng or secrets.SystemRandom()
    return sorted(rng.sample(range(n), k))


def buyer_request(indices, setup, rng=None):
    rng = rng or secrets.SystemRandom()
    n = len(setup)
    if len(set(indices)) != len(indices) or not all(0 <= i < n
                                                    for i in indices):
        raise OTProtocolError('Indices must be distinct positions below %d'
                              % n)
    pub = setup.pub
    values, factors = [], []
    for i in indices:
        r = blindsig.random_blinding_factor(pub, rng)
        values.append((setup.nonces[i] + pow(r, pub.e, pub.n)) % pub.n)
        factors.append(r)
    return OTRequest(values, list(indices), factors)


def seller_respond(values, setup, ot_secrets, keys, parallelism=None):
    """Masked keys for every (request, envelope) pair

    Takes only the request values: nothing the Seller computes depends
    on which envelopes the Buyer chose.
    """
    n = len(setup)
    pub = keys.public
    for v in values:
        if not 0 <= v < pub.n:
            raise OTProtocolError('Request value out of range')
    grid = [(v - x) % pub.n for v in values for x in setup.nonces]
    decrypted = blindsig.sign_batch(grid, keys, parallelism)
    rows = []
    for j in range(len(values)):
        row = decrypted[j * n:(j + 1) * n]
        rows.append(tuple(_xor(ot_secrets.keys[t], _mask(w, t, j, pub))
                          for t, w in enumerate(row)))
    return OTResponse(tuple(rows))


def unmask_key(response, request, j, t, pub):
    """The key the Buyer derives from row j at envelope t"""
    return _xor(response.masks[j][t], _mask(request.factors[j], t, j, pub))


def buyer_recover(response, request, setup):
    """Decrypt the chosen envelopes

    Raises
    ------
    OTProtocolError
        If the response does not have k rows of n keys.
    IntegrityError
        If a chosen envelope fails to decrypt, which means the Seller
        sent a wrong key or a bad envelope.
    """
    n = len(setup)
    if len(response) != len(request) or any(len(row) != n
                                             for row in response.masks):
        raise OTProtocolError('Expected %d rows of %d keys'
                              % (len(request), n))
    recovered = []
    for j, i in enumerate(request.indices):
        key = unmask_key(response, request, j, i, setup.pub)
        try:
            text = open_envelope(setup.envelopes[i], key)
        except IntegrityError as err:
            raise IntegrityError('Envelope %d: %s' % (i, err)) from err
        recovered.append(RecoveredPart(i, parse_ntriples(text)))
    log.info('Recovered %d parts, %d statements', len(recovered),
             sum(len(p.statements) for p in recovered))
    return recovered


def encode_setup(setup):
    pub = setup.pub
    out = [wire.bigint(pub.n), wire.bigint(pub.e),
           wire.bigints(list(setup.nonces), pub.size_bytes),
           wire.u32(len(setup.envelopes))]
    for env in setup.envelopes:
        out.append(env.iv + wire.blob(env.ciphertext))
    return b''.join(out)


def decode_setup(data):
    reader = wire.Reader(data)
    pub = blindsig.PublicKey(reader.bigint(), reader.bigint())
    nonces = tuple(reader.bigints())
    count = reader.u32()
    envelopes = tuple(PartEnvelope(reader.raw(IV_BYTES), reader.blob())
                      for _ in range(count))
    reader.done()
    if count != len(nonces):
        raise OTProtocolError('%d nonces for %d envelopes'
                              % (len(nonces), count))
    if len({len(e.ciphertext) for e in envelopes}) > 1:
        raise OTProtocolError('Envelopes differ in length')
    return OTSetup(pub, nonces, envelopes)


def encode_request(request, pub):
    return wire.bigints(request.values, pub.size_bytes)


def decode_request(data):
    reader = wire.Reader(data)
    values = reader.bigints()
    reader.done()
    return values


def encode_response(response):
    rows = response.masks
    cols = len(rows[0]) if rows else 0
    return (wire.u32(len(rows)) + wire.u32(cols)
            + b''.join(m for row in rows for m in row))


def decode_response(data):
    reader = wire.Reader(data)
    k, n = reader.u32(), reader.u32()
    try:
        rows = tuple(tuple(reader.raw(KEY_BYTES) for _ in range(n))
                     for _ in range(k))
        reader.done()
    except wire.WireError as err:
        raise OTProtocolError('Malformed response: %s' % err) from err
    return OTResponse(rows)
