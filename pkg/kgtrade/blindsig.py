"""RSA blind signatures with a full-domain hash

The Seller signs the Buyer's statements without seeing them:

    blinded = fdh(m) * r^e mod N        (Buyer)
    s'      = blinded^d mod N           (Seller)
    s       = s' * r^-1 mod N           (Buyer)

and s equals the signature fdh(m)^d mod N which the Seller would have
produced on m directly. Everything the Seller computes is deterministic
given the key, which is what makes Step 5 replay possible.
"""
import functools
import hashlib
import logging
import math
import secrets
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from cryptography.hazmat.backends import default_backend
from cryptography.hazmat.primitives.asymmetric import rsa

from kgtrade import config

log = logging.getLogger(__name__)

FDH_TAG = b'kgtrade-fdh'


class BlindingError(ValueError):
    """Blinding factor or key material is unusable"""
    pass


@dataclass(frozen=True)
class PublicKey:
    n: int
    e: int

    @property
    def size_bytes(self):
        """Fixed width of signatures and blinded values"""
        return (self.n.bit_length() + 7) // 8


@dataclass(frozen=True)
class BlindKeyPair:
    n: int
    e: int
    d: int
    p: int
    q: int

    @property
    def public(self):
        return PublicKey(self.n, self.e)

    @functools.cached_property
    def _crt(self):
        return (self.d % (self.p - 1), self.d % (self.q - 1),
                pow(self.q, -1, self.p))


def keygen(bits=None):
    """Generate a fresh RSA key pair

    Parameters
    ----------
    bits : int, optional
        Modulus size. Defaults to `config.rsa_bits`; must not be below
        `config.min_rsa_bits`.

    Returns
    -------
    BlindKeyPair
    """
    bits = bits or getattr(config, 'rsa_bits', 2048)
    if bits < getattr(config, 'min_rsa_bits', 2048):
        raise BlindingError('Modulus of %d bits is below the %d-bit minimum'
                            % (bits, config.min_rsa_bits))
    key = rsa.generate_private_key(public_exponent=65537, key_size=bits,
                                   backend=default_backend())
    nums = key.private_numbers()
    log.debug('Generated %d-bit RSA key', bits)
    return BlindKeyPair(nums.public_numbers.n, nums.public_numbers.e,
                        nums.d, nums.p, nums.q)


def check_keypair(keys):
    """True if the disclosed values form a consistent RSA key"""
    if keys.p * keys.q != keys.n or keys.p == keys.q:
        return False
    lam = math.lcm(keys.p - 1, keys.q - 1)
    return keys.e * keys.d % lam == 1


def fdh(msg, n):
    """Hash a message onto [0, n)

    SHA-256 in counter mode is expanded to 16 bytes beyond the modulus
    width before reducing, which keeps the reduction bias negligible.
    """
    width = (n.bit_length() + 7) // 8 + 16
    out = bytearray()
    counter = 0
    while len(out) < width:
        out += hashlib.sha256(FDH_TAG + counter.to_bytes(4, 'big')
                              + msg).digest()
        counter += 1
    return int.from_bytes(out[:width], 'big') % n


def random_blinding_factor(pub, rng=None):
    """Uniform r in [2, N-1] with gcd(r, N) = 1"""
    rng = rng or secrets.SystemRandom()
    while True:
        r = rng.randrange(2, pub.n)
        if math.gcd(r, pub.n) == 1:
            return r


def blind(msg, r, pub):
    if math.gcd(r, pub.n) != 1:
        raise BlindingError('Blinding factor is not invertible mod N')
    return fdh(msg, pub.n) * pow(r, pub.e, pub.n) % pub.n


def sign_blinded(blinded, priv):
    """blinded^d mod N, computed with the CRT"""
    dp, dq, qinv = priv._crt
    mp = pow(blinded % priv.p, dp, priv.p)
    mq = pow(blinded % priv.q, dq, priv.q)
    return mq + priv.q * ((mp - mq) * qinv % priv.p)


def unblind(blinded_sig, r, pub):
    try:
        r_inv = pow(r, -1, pub.n)
    except ValueError as err:
        raise BlindingError('Blinding factor is not invertible mod N') \
            from err
    return blinded_sig * r_inv % pub.n


def sign_direct(msg, priv):
    return sign_blinded(fdh(msg, priv.n), priv)


def verify(msg, sig, pub):
    return 0 <= sig < pub.n and pow(sig, pub.e, pub.n) == fdh(msg, pub.n)


def signed_digest(stmt_bytes, sig, pub):
    """SHA-256 over the fixed-width signature followed by the statement"""
    return hashlib.sha256(sig.to_bytes(pub.size_bytes, 'big')
                          + stmt_bytes).digest()


def sign_batch(blinded_values, priv, parallelism=None):
    """Sign a batch of blinded values, preserving their order

    Parameters
    ----------
    blinded_values : sequence of int
    priv : BlindKeyPair
    parallelism : int, optional
        Number of worker processes. Defaults to `config.workers`.
        With 1, the batch is signed in this process.

    Returns
    -------
    list of int
    """
    blinded_values = list(blinded_values)
    if parallelism is None:
        parallelism = getattr(config, 'workers', 1)
    if parallelism <= 1 or len(blinded_values) < 2 * parallelism:
        return [sign_blinded(v, priv) for v in blinded_values]

    chunk = max(1, len(blinded_values) // (4 * parallelism))
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        signed = list(pool.map(functools.partial(sign_blinded, priv=priv),
                               blinded_values, chunksize=chunk))
    log.debug('Signed %d values with %d workers', len(signed), parallelism)
    return signed
