"""Deterministic simulated network.

Each message is charged ``bytes / rate + overhead`` where ``rate`` is the
per-flow bandwidth left after the architecture's closed-form sharing rule.
Messages on one (src, dst) flow are serialized, so delivery on a flow is FIFO;
distinct flows do not interact (sharing is already folded into the rate).
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
from dataclasses import dataclass, field

from .wire import Envelope, MAX_RANK


class UnknownRank(ValueError):
    pass


def sim_transfer_time(payload_bytes, available_b, overhead=0.0) -> float:
    if not available_b > 0:
        raise ValueError(f"bandwidth must be positive, got {available_b}")
    if overhead < 0:
        raise ValueError(f"overhead must be >= 0, got {overhead}")
    return payload_bytes / available_b + overhead


@dataclass(frozen=True)
class LinkModel:
    total_bandwidth: float  # bytes/s
    overhead: float = 0.0   # seconds per message

    def __post_init__(self):
        if not self.total_bandwidth > 0:
            raise ValueError(f"total bandwidth must be positive, got {self.total_bandwidth}")
        if self.overhead < 0:
            raise ValueError(f"overhead must be >= 0, got {self.overhead}")

    def available_bandwidth(self, arch, w, ps=1) -> float:
        """The sharing rule's per-connection bandwidth for ``arch``.

        PS: B/w on each worker-server connection, so a worker talking to all
        ``ps`` servers at once gets ``(B/w)*ps`` in aggregate. P2P: B/(2(w-1)).
        RA: each ring link gets the full B.
        """
        arch = arch.lower()
        if arch == "ps":
            return self.total_bandwidth / w
        if arch == "p2p":
            return self.total_bandwidth / (2 * (w - 1)) if w > 1 else self.total_bandwidth
        if arch == "ra":
            return self.total_bandwidth
        raise ValueError(f"unknown architecture {arch!r}")


class SimClock:
    """Monotone simulated time plus an event queue ordered by (time, insertion)."""

    def __init__(self):
        self.now = 0.0
        self._queue = []
        self._seq = itertools.count()

    def schedule(self, at, item):
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._queue, (at, next(self._seq), item))

    def pop(self):
        at, _, item = heapq.heappop(self._queue)
        self.now = at
        return at, item

    def peek_time(self):
        return self._queue[0][0] if self._queue else None

    def __len__(self):
        return len(self._queue)


@dataclass
class Delivery:
    envelope: Envelope
    billed: int
    sent_at: float
    deliver_at: float


@dataclass
class SimNetwork:
    clock: SimClock
    n_ranks: int
    rate: float
    overhead: float = 0.0
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_ranks > MAX_RANK + 1:
            raise ValueError(f"{self.n_ranks} ranks exceeds the 16-bit rank field")
        self._busy = {}
        self.messages = 0
        self.bytes = 0

    def send(self, env: Envelope, billed=None) -> Delivery:
        """Queue ``env``; ``billed`` overrides the byte count used for timing."""
        for rank in (env.src, env.dst):
            if not 0 <= rank < self.n_ranks:
                raise UnknownRank(f"rank {rank} outside 0..{self.n_ranks - 1}")
        size = len(env.payload) if billed is None else billed
        now = self.clock.now
        flow = (env.src, env.dst)
        start = max(now, self._busy.get(flow, 0.0))
        done = start + sim_transfer_time(size, self.rate, 0.0)
        self._busy[flow] = done
        delivery = Delivery(env, size, now, done + self.overhead)
        self.clock.schedule(delivery.deliver_at, delivery)
        self.messages += 1
        self.bytes += size
        self.trace.append((now, "send", int(env.kind), env.epoch, env.iteration,
                           env.src, env.dst, size))
        return delivery

    def poll(self) -> list:
        """Advance to the next delivery time and return everything due then."""
        if not len(self.clock):
            return []
        at, item = self.clock.pop()
        out = [item]
        while len(self.clock) and self.clock.peek_time() == at:
            out.append(self.clock.pop()[1])
        return [d.envelope if isinstance(d, Delivery) else d for d in out]


def trace_digest(trace) -> str:
    h = hashlib.sha256()
    for row in trace:
        h.update(repr(row).encode())
    return h.hexdigest()
