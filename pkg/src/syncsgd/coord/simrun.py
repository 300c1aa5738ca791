"""Discrete-event driver: runs every rank's generator against one SimNetwork."""

from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

from ..transport.sim import Delivery, SimClock, SimNetwork, trace_digest
from ..transport.wire import Kind
from .config import StragglerTimeout
from .ops import Compute, Flush, Mark, Recv, Send


@dataclass
class RankStats:
    """Per-rank accounting, keyed by epoch."""

    phases: dict = field(default_factory=lambda: defaultdict(Counter))
    sent: dict = field(default_factory=lambda: defaultdict(Counter))       # kind -> count
    sent_bytes: dict = field(default_factory=lambda: defaultdict(int))
    marks: list = field(default_factory=list)    # (time, label, epoch, iteration)
    epoch: int = 0

    def mark_time(self, label, epoch):
        for at, lab, e, _ in self.marks:
            if lab == label and e == epoch:
                return at
        return None


@dataclass
class _Wake:
    rank: int


@dataclass
class RunOutcome:
    results: dict
    stats: dict
    trace: list
    end_time: float

    @property
    def digest(self) -> str:
        return trace_digest(self.trace)


class SimRunner:
    def __init__(self, n_ranks, rate, overhead=0.0):
        self.clock = SimClock()
        self.net = SimNetwork(self.clock, n_ranks, rate, overhead)
        self.n_ranks = n_ranks
        self._mail = [defaultdict(deque) for _ in range(n_ranks)]
        self._waiting = {}       # rank -> (op, since)
        self._out_done = [0.0] * n_ranks
        self._gens = {}
        self.results = {}
        self.stats = {r: RankStats() for r in range(n_ranks)}

    def run(self, procs) -> RunOutcome:
        """``procs`` maps rank -> generator; returns each generator's return value."""
        self._gens = dict(procs)
        for rank in sorted(self._gens):
            self._advance(rank, None)
        while len(self.clock):
            _, item = self.clock.pop()
            if isinstance(item, Delivery):
                self._deliver(item)
            else:
                self._wake(item.rank)
        if self._waiting:
            self._deadlock()
        return RunOutcome(self.results, self.stats, self.net.trace, self.clock.now)

    def _deliver(self, d: Delivery):
        env = d.envelope
        self.net.trace.append((self.clock.now, "recv", int(env.kind), env.epoch, env.iteration,
                               env.src, env.dst, d.billed))
        self._mail[env.dst][(env.src, env.kind)].append(d)
        waiting = self._waiting.get(env.dst)
        if waiting and isinstance(waiting[0], Recv):
            op = waiting[0]
            if (op.src, op.kind) == (env.src, env.kind):
                self._resume_recv(env.dst)

    def _wake(self, rank):
        op, since = self._waiting.pop(rank)
        st = self.stats[rank]
        st.phases[st.epoch][op.phase] += self.clock.now - since
        self._advance(rank, None)

    def _resume_recv(self, rank):
        op, since = self._waiting.pop(rank)
        d = self._mail[rank][(op.src, op.kind)].popleft()
        now = self.clock.now
        st = self.stats[rank]
        # waiting for the peer to start sending counts as barrier time
        st.phases[st.epoch]["barrier"] += max(0.0, min(d.sent_at, now) - since)
        st.phases[st.epoch][op.phase] += now - max(since, d.sent_at)
        self._advance(rank, d.envelope)

    def _advance(self, rank, value):
        gen = self._gens[rank]
        st = self.stats[rank]
        now = self.clock.now
        while True:
            try:
                op = gen.send(value)
            except StopIteration as stop:
                self.results[rank] = stop.value
                return
            value = None
            if isinstance(op, Send):
                if op.env.src != rank:
                    raise ValueError(f"rank {rank} tried to send as rank {op.env.src}")
                d = self.net.send(op.env, op.billed)
                self._out_done[rank] = max(self._out_done[rank], d.deliver_at)
                st.sent[st.epoch][op.env.kind] += 1
                st.sent_bytes[st.epoch] += d.billed
            elif isinstance(op, Recv):
                box = self._mail[rank][(op.src, op.kind)]
                if box:
                    value = box.popleft().envelope
                else:
                    self._waiting[rank] = (op, now)
                    return
            elif isinstance(op, Flush):
                if self._out_done[rank] > now:
                    self._waiting[rank] = (op, now)
                    self.clock.schedule(self._out_done[rank], _Wake(rank))
                    return
            elif isinstance(op, Compute):
                if op.seconds > 0:
                    self._waiting[rank] = (op, now)
                    self.clock.schedule(now + op.seconds, _Wake(rank))
                    return
            elif isinstance(op, Mark):
                if op.label == "epoch_start":
                    st.epoch = op.epoch
                st.marks.append((now, op.label, op.epoch, op.iteration))
            else:
                raise TypeError(f"rank {rank} yielded unknown op {op!r}")

    def _deadlock(self):
        blocked = sorted(self._waiting.items())
        waits = ", ".join(f"rank {r} waits for {Kind(op.kind).name} from rank {op.src}"
                          for r, (op, _) in blocked if isinstance(op, Recv))
        silent = sorted({op.src for _, (op, _) in blocked if isinstance(op, Recv)}
                        - set(self._waiting))
        raise StragglerTimeout(f"no progress possible at t={self.clock.now:.6g}s: {waits}; "
                               f"silent rank(s): {silent}", ranks=silent)
