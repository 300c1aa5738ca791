"""Message framing plus the simulated and TCP backends."""

from .sim import (Delivery, LinkModel, SimClock, SimNetwork, UnknownRank,
                  sim_transfer_time, trace_digest)
from .tcp import (ConnectTimeout, PeerReset, RecvTimeout, TcpMesh, TransportError,
                  tcp_connect, tcp_listen, tcp_recv, tcp_send)
from .wire import (HEADER_SIZE, Envelope, FrameError, Kind, ShortRead, frame,
                   unframe)

__all__ = [
    "Delivery", "LinkModel", "SimClock", "SimNetwork", "UnknownRank",
    "sim_transfer_time", "trace_digest", "ConnectTimeout", "PeerReset",
    "RecvTimeout", "TcpMesh", "TransportError", "tcp_connect", "tcp_listen",
    "tcp_recv", "tcp_send", "HEADER_SIZE", "Envelope", "FrameError", "Kind",
    "ShortRead", "frame", "unframe",
]
