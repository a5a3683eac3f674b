"""Payload codecs

All multi-byte integers on the wire are big-endian. Big integers and
byte strings are length-prefixed with a 4-byte unsigned length.
Decoding is strict: truncated or trailing bytes are errors, because
verification compares payloads byte for byte.
"""
import json
import struct


class WireError(ValueError):
    """A payload does not follow the expected layout"""
    pass


def u8(n):
    return struct.pack('>B', n)


def u32(n):
    return struct.pack('>I', n)


def u64(n):
    return struct.pack('>Q', n)


def blob(data):
    """Length-prefixed byte string"""
    return u32(len(data)) + data


def bigint(n, width=None):
    """Length-prefixed big-endian integer

    With `width`, the integer is written in exactly that many bytes.
    """
    if n < 0:
        raise WireError('Negative integers are not encodable')
    if width is None:
        width = max(1, (n.bit_length() + 7) // 8)
    return blob(n.to_bytes(width, 'big'))


def bigints(values, width=None):
    """Count followed by length-prefixed integers"""
    return u32(len(values)) + b''.join(bigint(v, width) for v in values)


def document(obj):
    """Deterministic JSON encoding for structured payloads"""
    return json.dumps(obj, sort_keys=True,
                      separators=(',', ':')).encode('utf-8')


class Reader:
    """Sequential decoder over one payload"""

    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def _take(self, n):
        if self.pos + n > len(self.data):
            raise WireError('Payload truncated: wanted %d bytes at offset %d '
                            'of %d' % (n, self.pos, len(self.data)))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def u8(self):
        return struct.unpack('>B', self._take(1))[0]

    def u32(self):
        return struct.unpack('>I', self._take(4))[0]

    def u64(self):
        return struct.unpack('>Q', self._take(8))[0]

    def raw(self, n):
        return self._take(n)

    def blob(self):
        return self._take(self.u32())

    def bigint(self):
        return int.from_bytes(self.blob(), 'big')

    def bigints(self):
        return [self.bigint() for _ in range(self.u32())]

    def rest(self):
        return self._take(len(self.data) - self.pos)

    def done(self):
        if self.pos != len(self.data):
            raise WireError('%d trailing bytes in payload' %
                            (len(self.data) - self.pos))


def read_document(data):
    try:
        return json.loads(bytes(data).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise WireError('Malformed document payload: %s' % err) from err
