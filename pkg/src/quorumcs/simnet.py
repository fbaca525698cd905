"""Deterministic discrete-event message-passing simulator.

All protocol objects run on top of one of two transports:

* Network -- seeded random integer delays in [1, max_delay], a single
  event heap ordered by (deliver_time, seq). Same seed + same system
  means a bit-identical trace.
* ExplorationNetwork -- no clock and no randomness; pending messages sit
  in per-link FIFO queues and an external search loop chooses which link
  delivers next. Used for exhaustive interleaving exploration.

Both enforce per ordered link (src, dst) FIFO across all protocol
objects sharing the link, which is what a real channel would give.

Trace records are plain tuples (cheap to append, cheap to scan):

    (tick, seq, kind, obj, src, dst, tag, data)

kind is one of init/call/ret/flip/send/recv/note. For send/recv, data is
the payload object itself; everything protocol-visible about a message is
in its dataclass fields. Rendering to the stable line format happens only
on demand.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, fields
from random import Random

# Record tuple slots.
TICK, SEQ, KIND, OBJ, SRC, DST, TAG, DATA = range(8)


class BudgetExhausted(RuntimeError):
    """Event budget ran out: possible deadlock or livelock."""


class ProtocolMisuse(RuntimeError):
    """A method was invoked in a state its contract forbids (harness bug)."""


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    max_delay: int = 1
    event_budget: int = 1_000_000

    def __post_init__(self):
        if self.max_delay < 1:
            raise ValueError("max_delay must be >= 1")
        if self.event_budget <= 0:
            raise ValueError("event_budget must be positive")


class Network:
    """Single-threaded event loop with seeded per-message delays."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.rng = Random(config.seed)
        self.now = 0
        self.seq = 0
        self.delivered = 0
        self.trace: list[tuple] = []
        self.handlers = {}
        self._queue: list[tuple] = []
        self._link_last: dict[tuple[int, int], int] = {}

    def register(self, obj: str, handler) -> None:
        """Route payloads addressed to `obj` through `handler(src, dst, payload)`."""
        self.handlers[obj] = handler

    def send(self, obj: str, src: int, dst: int, payload) -> None:
        """Enqueue a message; delivery is clamped to preserve link FIFO order."""
        self.seq += 1
        t = self.now + self.rng.randint(1, self.config.max_delay)
        link = (src, dst)
        last = self._link_last.get(link, 0)
        if t < last:
            t = last
        self._link_last[link] = t
        heapq.heappush(self._queue, (t, self.seq, 0, obj, src, dst, payload))
        self.trace.append((self.now, self.seq, "send", obj, src, dst, payload.tag, payload))

    def schedule(self, delay: int, fn) -> None:
        """Run fn() at now+delay; local timers share the event order with messages."""
        self.seq += 1
        heapq.heappush(self._queue, (self.now + delay, self.seq, 1, fn))

    def record(self, kind: str, obj: str, proc: int, tag: str, data=None) -> None:
        """Append a non-message record (init/call/ret/flip/note)."""
        self.seq += 1
        self.trace.append((self.now, self.seq, kind, obj, proc, 0, tag, data))

    def step(self):
        """Deliver the least (deliver_time, seq) event; None when quiescent."""
        if not self._queue:
            return None
        self.delivered += 1
        if self.delivered > self.config.event_budget:
            raise BudgetExhausted(
                "event budget %d exhausted at tick %d with %d events pending; "
                "possible deadlock/livelock" % (self.config.event_budget, self.now, len(self._queue))
            )
        ev = heapq.heappop(self._queue)
        self.now = ev[0]
        if ev[2] == 1:
            ev[3]()
            return ev
        _, seq, _, obj, src, dst, payload = ev
        self.trace.append((self.now, seq, "recv", obj, src, dst, payload.tag, payload))
        self.handlers[obj](src, dst, payload)
        return ev

    def run(self) -> list[tuple]:
        """Step to quiescence and return the trace."""
        while self.step() is not None:
            pass
        return self.trace


class ExplorationNetwork:
    """Transport for systematic interleaving exploration.

    Messages accumulate in per-link FIFO queues; deliver_next(link) hands
    the oldest message on that link to its handler. schedule() runs the
    callback inline, so only message deliveries branch the search.
    """

    def __init__(self):
        self.handlers = {}
        self.links: dict[tuple[int, int], list] = {}
        self.delivered = 0
        self.now = 0  # counts deliveries; exploration has no clock

    def register(self, obj, handler):
        self.handlers[obj] = handler

    def send(self, obj, src, dst, payload):
        self.links.setdefault((src, dst), []).append((obj, payload))

    def schedule(self, delay, fn):
        fn()

    def record(self, kind, obj, proc, tag, data=None):
        pass

    def enabled_links(self):
        """Links with at least one pending message, in a stable order."""
        return sorted(link for link, q in self.links.items() if q)

    def deliver_next(self, link):
        q = self.links[link]
        obj, payload = q.pop(0)
        self.delivered += 1
        self.now = self.delivered
        self.handlers[obj](link[0], link[1], payload)

    def fingerprint(self):
        return tuple(sorted((link, tuple(q)) for link, q in self.links.items() if q))

    def snapshot(self):
        return self.fingerprint()

    def restore(self, snap):
        self.links = {link: list(q) for link, q in snap}


def format_value(v) -> str:
    """Stable scalar rendering for payload fields (sets sorted, comma-joined)."""
    if isinstance(v, frozenset):
        return ",".join(str(x) for x in sorted(v)) or "-"
    return str(v)


def format_payload(payload) -> str:
    parts = []
    for f in fields(payload):
        parts.append("%s=%s" % (f.name, format_value(getattr(payload, f.name))))
    return " ".join(parts)


def render_record(rec: tuple) -> str:
    """One trace line: `tick seq kind from to tag obj=... [fields]`."""
    data = rec[DATA]
    suffix = ""
    if data is not None:
        suffix = " " + (format_payload(data) if hasattr(data, "tag") else format_value(data))
    return "%d %d %s %d %d %s obj=%s%s" % (
        rec[TICK], rec[SEQ], rec[KIND], rec[SRC], rec[DST], rec[TAG], rec[OBJ], suffix,
    )


def render_trace(trace: list[tuple]) -> str:
    return "\n".join(render_record(r) for r in trace) + "\n"
