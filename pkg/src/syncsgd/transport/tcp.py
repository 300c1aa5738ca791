"""Framed envelopes over TCP.

The free functions are the primitive layer (listen, connect with backoff,
send/recv one frame). ``TcpMesh`` builds a full mesh between ranks with one
reader thread and one writer thread per peer, so that sends never block the
rank's protocol thread and nothing deadlocks when two ranks exchange large
frames at the same time.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from collections import deque

from .wire import Envelope, FrameError, Kind, LENGTH_SIZE, frame, frame_length, unframe

log = logging.getLogger(__name__)


class TransportError(ConnectionError):
    pass


class ConnectTimeout(TransportError):
    pass


class PeerReset(TransportError):
    pass


class RecvTimeout(TransportError, TimeoutError):
    pass


def parse_addr(addr):
    if isinstance(addr, tuple):
        return addr
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def tcp_listen(addr, backlog=64) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(parse_addr(addr))
    sock.listen(backlog)
    return sock


def tcp_connect(addr, deadline=10.0, backoff=0.01, max_backoff=0.5) -> socket.socket:
    """Connect, retrying with exponential backoff until ``deadline`` seconds."""
    target = parse_addr(addr)
    give_up = time.monotonic() + deadline
    while True:
        try:
            sock = socket.create_connection(target, timeout=max(0.05, give_up - time.monotonic()))
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as exc:
            if time.monotonic() + backoff > give_up:
                raise ConnectTimeout(f"could not connect to {target[0]}:{target[1]} "
                                     f"within {deadline}s: {exc}") from exc
            time.sleep(backoff)
            backoff = min(backoff * 2, max_backoff)


def tcp_send(sock, env: Envelope):
    try:
        sock.sendall(frame(env))
    except (BrokenPipeError, ConnectionResetError) as exc:
        raise PeerReset(f"peer reset while sending {env!r}") from exc


def _recv_exact(sock, n):
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        try:
            k = sock.recv_into(view[got:], n - got)
        except socket.timeout as exc:
            raise RecvTimeout(f"no frame within {sock.gettimeout()}s") from exc
        except ConnectionResetError as exc:
            raise PeerReset("connection reset by peer") from exc
        if k == 0:
            if got:
                raise FrameError(f"peer closed mid-frame after {got}/{n} bytes")
            raise PeerReset("peer closed the connection")
        got += k
    return bytes(buf)


def tcp_recv(sock, timeout=None) -> Envelope:
    """Block for one full frame, or raise ``RecvTimeout``."""
    sock.settimeout(timeout)
    try:
        prefix = _recv_exact(sock, LENGTH_SIZE)
        rest = _recv_exact(sock, frame_length(prefix) - LENGTH_SIZE)
    finally:
        sock.settimeout(None)
    return unframe(prefix + rest)


class _Peer:
    def __init__(self, rank, sock, inbox):
        self.rank = rank
        self.sock = sock
        self.outbox = queue.Queue()
        self.pending = deque()
        self.inbox = inbox
        self.error = None
        self.writer = threading.Thread(target=self._write, daemon=True)
        self.reader = threading.Thread(target=self._read, daemon=True)
        self.writer.start()
        self.reader.start()

    def _write(self):
        while True:
            env = self.outbox.get()
            try:
                if env is None:
                    return
                if self.error is None:
                    tcp_send(self.sock, env)
            except Exception as exc:  # surfaced on the next flush
                self.error = exc
            finally:
                self.outbox.task_done()

    def _read(self):
        while True:
            try:
                env = tcp_recv(self.sock)
            except Exception as exc:
                self.inbox.put(exc)
                return
            self.inbox.put(env)


class TcpMesh:
    """Full mesh of connections for one rank; ``addresses[r]`` is rank r's listener."""

    def __init__(self, rank, addresses, connect_deadline=15.0, recv_timeout=30.0):
        self.rank = rank
        self.addresses = list(addresses)
        self.recv_timeout = recv_timeout
        self.messages = 0
        self.bytes = 0
        self._peers = {}
        listener = tcp_listen(self.addresses[rank])
        try:
            for peer in range(rank):
                sock = tcp_connect(self.addresses[peer], deadline=connect_deadline)
                tcp_send(sock, Envelope(Kind.CONTROL, 0, 0, rank, peer))
                self._add(peer, sock)
            listener.settimeout(connect_deadline)
            for _ in range(len(self.addresses) - rank - 1):
                try:
                    sock, _ = listener.accept()
                except socket.timeout as exc:
                    raise ConnectTimeout(f"rank {rank}: peers did not connect "
                                         f"within {connect_deadline}s") from exc
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                hello = tcp_recv(sock, timeout=connect_deadline)
                if hello.kind != Kind.CONTROL or hello.dst != rank:
                    raise FrameError(f"rank {rank}: bad handshake {hello!r}")
                self._add(hello.src, sock)
        finally:
            listener.close()

    def _add(self, peer, sock):
        self._peers[peer] = _Peer(peer, sock, queue.Queue())

    def send(self, env: Envelope):
        peer = self._peers.get(env.dst)
        if peer is None:
            raise TransportError(f"rank {self.rank} has no connection to rank {env.dst}")
        if peer.error is not None:
            raise peer.error
        self.messages += 1
        self.bytes += len(env.payload)
        peer.outbox.put(env)

    def recv(self, src, kind, timeout=None) -> Envelope:
        """Next envelope of ``kind`` from ``src``; other kinds stay queued in order."""
        peer = self._peers.get(src)
        if peer is None:
            raise TransportError(f"rank {self.rank} has no connection to rank {src}")
        for i, env in enumerate(peer.pending):
            if env.kind == kind:
                del peer.pending[i]
                return env
        timeout = self.recv_timeout if timeout is None else timeout
        give_up = time.monotonic() + timeout
        while True:
            remaining = give_up - time.monotonic()
            try:
                item = peer.inbox.get(timeout=max(remaining, 0.0))
            except queue.Empty:
                raise RecvTimeout(f"rank {self.rank}: rank {src} silent for {timeout}s "
                                  f"waiting for {Kind(kind).name}") from None
            if isinstance(item, Exception):
                raise item
            if item.kind == kind:
                return item
            peer.pending.append(item)

    def flush(self):
        for peer in self._peers.values():
            peer.outbox.join()
            if peer.error is not None:
                raise peer.error

    def close(self):
        for peer in self._peers.values():
            peer.outbox.put(None)
        for peer in self._peers.values():
            peer.writer.join(timeout=5)
            try:
                peer.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            peer.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
