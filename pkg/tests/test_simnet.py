from dataclasses import dataclass
from typing import ClassVar

import pytest

from quorumcs import BudgetExhausted, Network, SimConfig, render_trace
from quorumcs.simnet import DATA, DST, KIND, SEQ, SRC, TAG, TICK


@dataclass(frozen=True)
class Ping:
    tag: ClassVar[str] = "Ping"
    n: int


class FixedDelays:
    """Stands in for the rng: returns scripted delays, then 1s."""

    def __init__(self, delays):
        self.delays = list(delays)

    def randint(self, lo, hi):
        return self.delays.pop(0) if self.delays else 1


class Sink:
    def __init__(self, net, name="app"):
        self.got = []
        net.register(name, self._on)

    def _on(self, src, dst, payload):
        self.got.append((src, dst, payload))


def recvs(trace):
    return [r for r in trace if r[KIND] == "recv"]


def test_fifo_clamp_preserves_send_order():
    # Two sends on one link at t=0 with delays 3 then 1 must arrive
    # at t=3, t=3 in send order.
    net = Network(SimConfig(seed=0, max_delay=5))
    net.rng = FixedDelays([3, 1])
    Sink(net)
    net.send("app", 1, 2, Ping(1))
    net.send("app", 1, 2, Ping(2))
    trace = net.run()
    delivered = recvs(trace)
    assert [r[TICK] for r in delivered] == [3, 3]
    assert [r[DATA].n for r in delivered] == [1, 2]
    assert [r[TAG] for r in delivered] == ["Ping", "Ping"]


def test_unit_delay_is_one_tick():
    net = Network(SimConfig(seed=1, max_delay=1))
    sink = Sink(net)
    net.schedule(5, lambda: net.send("app", 1, 2, Ping(0)))
    net.run()
    assert recvs(net.trace)[0][TICK] == 6


def test_self_send_goes_through_queue():
    net = Network(SimConfig(seed=0, max_delay=1))
    sink = Sink(net)
    net.send("app", 1, 1, Ping(7))
    net.run()
    assert sink.got == [(1, 1, Ping(7))]
    assert recvs(net.trace)[0][TICK] == 1


def test_same_tick_ties_break_by_seq():
    net = Network(SimConfig(seed=0, max_delay=1))
    sink = Sink(net)
    net.send("app", 1, 3, Ping(1))
    net.send("app", 2, 3, Ping(2))
    net.run()
    assert [p.n for _, _, p in sink.got] == [1, 2]


def test_empty_queue_is_quiescent():
    net = Network(SimConfig())
    assert net.step() is None
    assert net.run() == []


def test_budget_exhaustion_raises():
    net = Network(SimConfig(seed=0, max_delay=1, event_budget=10))

    def chain(src, dst, payload):
        net.send("app", dst, src, Ping(payload.n + 1))

    net.register("app", chain)
    net.send("app", 1, 2, Ping(0))
    with pytest.raises(BudgetExhausted):
        net.run()
    assert net.delivered == 11


def test_exactly_budget_events_is_fine():
    net = Network(SimConfig(seed=0, max_delay=1, event_budget=10))
    Sink(net)
    for i in range(10):
        net.send("app", 1, 2, Ping(i))
    net.run()
    assert len(recvs(net.trace)) == 10


def test_same_seed_identical_traces():
    def run(seed):
        net = Network(SimConfig(seed=seed, max_delay=9))
        sink = Sink(net)
        for i in range(20):
            net.send("app", 1 + i % 3, 1 + (i + 1) % 3, Ping(i))
        net.run()
        return render_trace(net.trace)

    assert run(42) == run(42)
    assert run(42) != run(43)


def test_fifo_and_exactly_once_across_seeds():
    for seed in range(25):
        net = Network(SimConfig(seed=seed, max_delay=7))
        Sink(net)
        for i in range(40):
            net.send("app", 1 + i % 4, 1 + (i * 3) % 4, Ping(i))
        net.run()
        sends = {}
        deliveries = {}
        seen = set()
        for rec in net.trace:
            link = (rec[SRC], rec[DST])
            if rec[KIND] == "send":
                sends.setdefault(link, []).append(rec[SEQ])
            elif rec[KIND] == "recv":
                assert rec[SEQ] not in seen
                seen.add(rec[SEQ])
                deliveries.setdefault(link, []).append(rec[SEQ])
        assert sends == deliveries


def test_deliver_time_at_least_send_plus_one():
    for seed in range(10):
        net = Network(SimConfig(seed=seed, max_delay=4))
        Sink(net)
        for i in range(30):
            net.send("app", 1, 2, Ping(i))
        send_tick = {r[SEQ]: r[TICK] for r in net.trace if r[KIND] == "send"}
        net.run()
        for rec in recvs(net.trace):
            assert rec[TICK] >= send_tick[rec[SEQ]] + 1
