import pytest
from hypothesis import given
from hypothesis import strategies as st

from syncsgd.transport import sim
from syncsgd.transport.wire import Envelope, Kind


def env(src=0, dst=1, size=0, kind=Kind.GRAD_PUSH):
    return Envelope(kind, 0, 0, src, dst, bytes(size))


def test_transfer_time_examples():
    assert sim.sim_transfer_time(437544, 2e8, 0) == pytest.approx(2.18772e-3, rel=1e-12)
    assert sim.sim_transfer_time(0, 2e8, 0.003) == 0.003
    with pytest.raises(ValueError):
        sim.sim_transfer_time(10, 0)


def test_available_bandwidth_rules():
    link = sim.LinkModel(1e9)
    assert link.available_bandwidth("ps", 5) == 2e8
    assert link.available_bandwidth("p2p", 4) == pytest.approx(1e9 / 6)
    assert link.available_bandwidth("ra", 8) == 1e9


def test_smaller_message_arrives_first():
    net = sim.SimNetwork(sim.SimClock(), 3, 1e3)
    net.send(env(0, 1, 200))
    net.send(env(0, 2, 100))
    first = net.poll()
    second = net.poll()
    assert [len(e.payload) for e in first + second] == [100, 200]


def test_ties_keep_insertion_order():
    net = sim.SimNetwork(sim.SimClock(), 4, 1e3)
    for dst in (3, 1, 2):
        net.send(env(0, dst, 50))
    assert [e.dst for e in net.poll()] == [3, 1, 2]


def test_unknown_rank():
    net = sim.SimNetwork(sim.SimClock(), 2, 1e3)
    with pytest.raises(sim.UnknownRank):
        net.send(env(0, 2))


def test_same_flow_is_serialized():
    net = sim.SimNetwork(sim.SimClock(), 2, 100.0)
    a = net.send(env(0, 1, 100))
    b = net.send(env(0, 1, 100))
    assert (a.deliver_at, b.deliver_at) == (1.0, 2.0)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 500)),
                min_size=1, max_size=40))
def test_deliveries_monotone_and_counted(sends):
    net = sim.SimNetwork(sim.SimClock(), 4, 1e4, overhead=1e-4)
    for s, d, size in sends:
        net.send(env(s, d, size))
    seen, last = 0, -1.0
    while len(net.clock):
        batch = net.poll()
        assert net.clock.now >= last
        last = net.clock.now
        seen += len(batch)
    assert seen == net.messages == len(sends)
    assert net.bytes == sum(size for *_, size in sends)


def test_clock_rejects_past():
    clock = sim.SimClock()
    clock.schedule(1.0, "a")
    clock.pop()
    with pytest.raises(ValueError):
        clock.schedule(0.5, "b")
