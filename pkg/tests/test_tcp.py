import random
import socket
import threading

import pytest

from syncsgd.coord.tcprun import free_ports
from syncsgd.transport import tcp
from syncsgd.transport.wire import Envelope, Kind


def test_loopback_echo_1000():
    listener = tcp.tcp_listen("127.0.0.1:0")
    port = listener.getsockname()[1]

    def echo():
        conn, _ = listener.accept()
        for _ in range(1000):
            tcp.tcp_send(conn, tcp.tcp_recv(conn, timeout=10))
        conn.close()

    t = threading.Thread(target=echo)
    t.start()
    sock = tcp.tcp_connect(f"127.0.0.1:{port}")
    rng = random.Random(0)
    for i in range(1000):
        e = Envelope(rng.choice(list(Kind)), rng.randrange(2**32), i, rng.randrange(2**16),
                     rng.randrange(2**16), rng.randbytes(rng.randrange(0, 4096)))
        tcp.tcp_send(sock, e)
        assert tcp.tcp_recv(sock, timeout=10) == e
    t.join()
    sock.close()
    listener.close()


def test_recv_timeout_on_silent_peer():
    listener = tcp.tcp_listen("127.0.0.1:0")
    sock = tcp.tcp_connect(listener.getsockname())
    with pytest.raises(tcp.RecvTimeout):
        tcp.tcp_recv(sock, timeout=0.1)
    sock.close()
    listener.close()


def test_connect_unbound_port_times_out():
    (port,) = free_ports(1)
    with pytest.raises(tcp.ConnectTimeout):
        tcp.tcp_connect(f"127.0.0.1:{port}", deadline=0.2)


def test_peer_close_is_reported():
    a, b = socket.socketpair()
    b.close()
    with pytest.raises(tcp.PeerReset):
        tcp.tcp_recv(a, timeout=1)
    a.close()


def test_mesh_selective_recv():
    addrs = [f"127.0.0.1:{p}" for p in free_ports(3)]
    meshes = [None] * 3

    def build(r):
        meshes[r] = tcp.TcpMesh(r, addrs, connect_deadline=5, recv_timeout=5)

    threads = [threading.Thread(target=build, args=(r,)) for r in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    try:
        meshes[0].send(Envelope(Kind.GRAD_PUSH, 0, 0, 0, 2, b"g"))
        meshes[0].send(Envelope(Kind.MODEL_CHUNK, 0, 0, 0, 2, b"m"))
        meshes[1].send(Envelope(Kind.RING_CHUNK, 0, 0, 1, 2, b"r"))
        assert meshes[2].recv(0, Kind.MODEL_CHUNK).payload == b"m"
        assert meshes[2].recv(0, Kind.GRAD_PUSH).payload == b"g"
        assert meshes[2].recv(1, Kind.RING_CHUNK).payload == b"r"
        with pytest.raises(tcp.RecvTimeout):
            meshes[2].recv(1, Kind.RING_CHUNK, timeout=0.1)
    finally:
        for m in meshes:
            m.close()
