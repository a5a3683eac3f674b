"""Transports, framing and traffic metering

A frame is a 4-byte big-endian payload length, a 1-byte message type
and the payload. Channels move raw bytes; `send_frame` and `recv_frame`
add the framing and feed the channel's TrafficMeter, which counts
payload bytes only.

Two channels are provided: an in-process loopback pair, used by the
tests and the benchmark, and a TCP socket, optionally wrapped in TLS.
"""
import enum
import logging
import queue
import socket
import ssl
import struct
from collections import defaultdict
from dataclasses import dataclass

from kgtrade import config
from kgtrade.leakledger import Direction

log = logging.getLogger(__name__)

HEADER = struct.Struct('>IB')
MAX_PAYLOAD = 2 ** 32 - 1


class FramingError(ValueError):
    pass


class ChannelClosedError(ConnectionError):
    pass


class TransportError(ConnectionError):
    pass


class MessageType(enum.IntEnum):
    HELLO = 1
    CONFIG = 2
    STATS = 3
    BLIND_BATCH = 4
    SIGNED_BATCH = 5
    PSI_FILTER = 6
    COUNTING_FILTER = 7
    OT_SETUP = 8
    OT_REQUEST = 9
    OT_RESPONSE = 10
    CONTINUE = 11
    ABORT = 12
    DISCLOSURE = 13


@dataclass(frozen=True)
class Frame:
    tag: MessageType
    payload: bytes


class TrafficMeter:
    """Payload bytes per (step, direction)"""

    def __init__(self):
        self.counts = defaultdict(int)

    def record(self, step, direction, nbytes):
        self.counts[(step, direction)] += nbytes

    def total(self, direction=None, step=None):
        return sum(n for (s, d), n in self.counts.items()
                   if (direction is None or d is direction)
                   and (step is None or s == step))

    def steps(self):
        seen = []
        for s, _ in self.counts:
            if s not in seen:
                seen.append(s)
        return seen

    def as_dict(self):
        return {s: {d.value: self.counts.get((s, d), 0) for d in Direction}
                for s in self.steps()}


class Channel:
    """Ordered byte stream between the two parties

    `role` is 'seller' or 'buyer' and decides which direction outbound
    bytes are metered under; `step` is the protocol step currently
    running.
    """

    def __init__(self, role=None):
        self.role = role
        self.step = 'step1'
        self.meter = TrafficMeter()
        self.closed = False

    @property
    def outbound(self):
        return Direction.S_TO_B if self.role == 'seller' else Direction.B_TO_S

    @property
    def inbound(self):
        return Direction.B_TO_S if self.role == 'seller' else Direction.S_TO_B

    def send(self, data):
        raise NotImplementedError

    def recv_exact(self, n):
        raise NotImplementedError

    def close(self):
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LoopbackChannel(Channel):
    def __init__(self, outbox, inbox, role=None, timeout=None):
        super().__init__(role)
        self._outbox = outbox
        self._inbox = inbox
        self._buffer = bytearray()
        self._peer_closed = False
        self.timeout = timeout or getattr(config, 'recv_timeout', 600)

    def send(self, data):
        if self.closed:
            raise ChannelClosedError('Channel is closed')
        self._outbox.put(bytes(data))

    def recv_exact(self, n):
        while len(self._buffer) < n:
            if self._peer_closed:
                raise ChannelClosedError('Peer closed the channel')
            try:
                chunk = self._inbox.get(timeout=self.timeout)
            except queue.Empty:
                raise TransportError('No data from peer within %s seconds'
                                     % self.timeout) from None
            if chunk is None:
                self._peer_closed = True
            else:
                self._buffer += chunk
        data = bytes(self._buffer[:n])
        del self._buffer[:n]
        return data

    def close(self):
        if not self.closed:
            self._outbox.put(None)
        super().close()


def loopback_pair(timeout=None):
    """Connected (seller, buyer) channels within one process"""
    a_to_b, b_to_a = queue.Queue(), queue.Queue()
    return (LoopbackChannel(a_to_b, b_to_a, 'seller', timeout),
            LoopbackChannel(b_to_a, a_to_b, 'buyer', timeout))


class SocketChannel(Channel):
    def __init__(self, sock, role=None):
        super().__init__(role)
        self.sock = sock
        self.sock.settimeout(getattr(config, 'recv_timeout', 600))

    def send(self, data):
        if self.closed:
            raise ChannelClosedError('Channel is closed')
        try:
            self.sock.sendall(data)
        except OSError as err:
            raise TransportError('Send failed: %s' % err) from err

    def recv_exact(self, n):
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout:
                raise TransportError('Timed out waiting for peer') from None
            except OSError as err:
                raise TransportError('Receive failed: %s' % err) from err
            if not chunk:
                raise ChannelClosedError('Peer closed the connection')
            buf += chunk
        return bytes(buf)

    def close(self):
        if not self.closed:
            try:
                self.sock.close()
            except OSError:
                pass
        super().close()


def tls_context(server_side, certfile=None, keyfile=None, cafile=None):
    """TLS context; client certificates are required when `cafile` is
    given on the server side"""
    purpose = (ssl.Purpose.CLIENT_AUTH if server_side
               else ssl.Purpose.SERVER_AUTH)
    ctx = ssl.create_default_context(purpose, cafile=cafile)
    if certfile:
        ctx.load_cert_chain(certfile, keyfile)
    if server_side and cafile:
        ctx.verify_mode = ssl.CERT_REQUIRED
    return ctx


def parse_endpoint(endpoint):
    host, _, port = endpoint.rpartition(':')
    try:
        return host or 'localhost', int(port)
    except ValueError:
        raise ValueError('Endpoint must look like host:port, got %r'
                         % endpoint) from None


def connect(endpoint, role='buyer', tls=None, server_hostname=None):
    host, port = parse_endpoint(endpoint)
    try:
        sock = socket.create_connection(
            (host, port), timeout=getattr(config, 'recv_timeout', 600))
        if tls is not None:
            sock = tls.wrap_socket(sock, server_hostname=server_hostname
                                   or host)
    except (OSError, ssl.SSLError) as err:
        raise TransportError('Could not connect to %s: %s'
                             % (endpoint, err)) from err
    log.info('Connected to %s%s', endpoint, ' over TLS' if tls else '')
    return SocketChannel(sock, role)


def listen(endpoint, role='seller', tls=None, ready=None):
    """Accept a single peer on `endpoint`

    `ready`, if given, is called with the bound (host, port) once the
    socket is listening.
    """
    host, port = parse_endpoint(endpoint)
    try:
        with socket.create_server((host, port)) as server:
            if ready is not None:
                ready(server.getsockname()[:2])
            conn, addr = server.accept()
        if tls is not None:
            conn = tls.wrap_socket(conn, server_side=True)
    except (OSError, ssl.SSLError) as err:
        raise TransportError('Could not accept on %s: %s'
                             % (endpoint, err)) from err
    log.info('Accepted peer %s:%s', *addr[:2])
    return SocketChannel(conn, role)


def send_frame(channel, tag, payload=b''):
    if len(payload) > MAX_PAYLOAD:
        raise FramingError('Payload of %d bytes is too large' % len(payload))
    channel.send(HEADER.pack(len(payload), int(tag)) + payload)
    channel.meter.record(channel.step, channel.outbound, len(payload))
    log.debug('-> %s (%d bytes)', MessageType(tag).name, len(payload))
    return Frame(MessageType(tag), payload)


def recv_frame(channel):
    """Read one frame

    Raises
    ------
    ChannelClosedError
        If the peer closed the channel between frames.
    FramingError
        If the stream ends inside a frame or the type is unknown.
    """
    first = channel.recv_exact(1)
    try:
        header = first + channel.recv_exact(HEADER.size - 1)
    except ChannelClosedError as err:
        raise FramingError('Stream ended inside a frame header') from err
    length, tag = HEADER.unpack(header)
    try:
        payload = channel.recv_exact(length)
    except ChannelClosedError as err:
        raise FramingError('Stream ended inside a %d-byte frame'
                           % length) from err
    try:
        tag = MessageType(tag)
    except ValueError:
        raise FramingError('Unknown message type %d' % tag) from None
    channel.meter.record(channel.step, channel.inbound, length)
    log.debug('<- %s (%d bytes)', tag.name, length)
    return Frame(tag, payload)
