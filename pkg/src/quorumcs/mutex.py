"""Quorum-based distributed mutual exclusion (Maekawa-style).

Each process asks every member of its quorum Q_i for a vote (Locked).
An arbiter votes for one request at a time, preferring the lowest
(timestamp, pid) priority; when a better request arrives it tries to
preempt its current vote with Inquire, and a waiting requester that has
seen any Failed gives a grant back with Relinquish. This preemption is
what keeps the protocol deadlock-free under contention.

Entry() blocks (via a stored continuation) until all quorum votes are
held; Exit() releases every vote and never blocks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, ClassVar, Optional

from .coterie import CoterieAssignment
from .simnet import ProtocolMisuse

IDLE, WAITING, HELD = "idle", "waiting", "held"


class _ImmutableMessage:
    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class Request(_ImmutableMessage):
    tag: ClassVar[str] = "Request"
    ts: int


@dataclass(frozen=True)
class Locked(_ImmutableMessage):
    tag: ClassVar[str] = "Locked"


@dataclass(frozen=True)
class Failed(_ImmutableMessage):
    tag: ClassVar[str] = "Failed"


@dataclass(frozen=True)
class Inquire(_ImmutableMessage):
    tag: ClassVar[str] = "Inquire"


@dataclass(frozen=True)
class Relinquish(_ImmutableMessage):
    tag: ClassVar[str] = "Relinquish"


@dataclass(frozen=True)
class MxRelease(_ImmutableMessage):
    tag: ClassVar[str] = "MxRelease"


LOCKED, FAILED, INQUIRE, RELINQUISH, MX_RELEASE = (
    Locked(), Failed(), Inquire(), Relinquish(), MxRelease(),
)


@dataclass
class _ProcState:
    # requester side
    clock: int = 0
    phase: str = IDLE
    req_ts: int = 0
    grants: set = field(default_factory=set)
    failed: set = field(default_factory=set)
    deferred: set = field(default_factory=set)  # arbiters with an unanswered Inquire
    on_granted: Optional[Callable] = None
    # arbiter side
    vote: Optional[tuple[int, int]] = None  # (ts, pid) currently granted
    queue: list = field(default_factory=list)  # heap of waiting (ts, pid)
    inquired: bool = False  # Inquire outstanding for the current vote
    notified: set = field(default_factory=set)  # queued requests already sent Failed

    def snapshot(self):
        return (
            self.clock, self.phase, self.req_ts,
            frozenset(self.grants), frozenset(self.failed),
            frozenset(self.deferred),
            self.vote, tuple(self.queue), self.inquired,
            frozenset(self.notified),
        )

    def restore(self, snap):
        (self.clock, self.phase, self.req_ts, grants, failed, deferred,
         self.vote, queue, self.inquired, notified) = snap
        self.grants = set(grants)
        self.failed = set(failed)
        self.deferred = set(deferred)
        self.queue = list(queue)
        self.notified = set(notified)
        self.on_granted = None  # rebound by the owner when phase is waiting

    def fingerprint(self):
        return (
            self.clock, self.phase, self.req_ts,
            tuple(sorted(self.grants)), tuple(sorted(self.failed)),
            tuple(sorted(self.deferred)),
            self.vote, tuple(sorted(self.queue)), self.inquired,
            tuple(sorted(self.notified)),
        )


class QuorumMutex:
    """One mutual-exclusion object spanning all n processes."""

    def __init__(self, net, name: str, cot: CoterieAssignment):
        self.net = net
        self.name = name
        self.cot = cot
        self._st = {i: _ProcState() for i in range(1, cot.n + 1)}
        self._handlers = {
            "Request": self._on_request,
            "Locked": self._on_locked,
            "Failed": self._on_failed,
            "Inquire": self._on_inquire,
            "Relinquish": self._on_relinquish,
            "MxRelease": self._on_release,
        }
        net.register(name, self._dispatch)

    def entry(self, i: int, on_granted: Callable) -> None:
        """Request the lock; on_granted fires once all of Q_i have voted."""
        st = self._st[i]
        if st.phase != IDLE:
            raise ProtocolMisuse("%s: entry by P%d while %s" % (self.name, i, st.phase))
        self.net.record("call", self.name, i, "entry")
        st.clock += 1
        st.req_ts = st.clock
        st.phase = WAITING
        st.grants = set()
        st.failed = set()
        st.deferred = set()
        st.on_granted = on_granted
        req = Request(st.req_ts)
        for j in self.cot.sorted_quorums[i]:
            self.net.send(self.name, i, j, req)

    def exit(self, i: int) -> None:
        """Release every vote; never blocks."""
        st = self._st[i]
        if st.phase != HELD:
            raise ProtocolMisuse("%s: exit by P%d while %s" % (self.name, i, st.phase))
        self.net.record("call", self.name, i, "exit")
        st.phase = IDLE
        for j in self.cot.sorted_quorums[i]:
            self.net.send(self.name, i, j, MX_RELEASE)
        self.net.record("ret", self.name, i, "exit")

    def _dispatch(self, src, dst, payload):
        self._handlers[payload.tag](dst, src, payload)

    # arbiter side

    def _on_request(self, i, src, payload):
        st = self._st[i]
        if payload.ts > st.clock:
            st.clock = payload.ts
        req = (payload.ts, src)
        if st.vote is None:
            st.vote = req
            st.inquired = False
            self.net.send(self.name, i, src, LOCKED)
            return
        heapq.heappush(st.queue, req)
        if req < st.vote:
            if not st.inquired:
                st.inquired = True
                self.net.send(self.name, i, st.vote[1], INQUIRE)
        else:
            st.notified.add(req)
            self.net.send(self.name, i, src, FAILED)

    def _on_relinquish(self, i, src, payload):
        st = self._st[i]
        if st.vote is None or st.vote[1] != src:
            raise ProtocolMisuse("%s: relinquish from P%d without its vote" % (self.name, src))
        heapq.heappush(st.queue, st.vote)
        self._revote(i, st)

    def _on_release(self, i, src, payload):
        st = self._st[i]
        if st.vote is None or st.vote[1] != src:
            raise ProtocolMisuse("%s: release from P%d without its vote" % (self.name, src))
        if st.queue:
            self._revote(i, st)
        else:
            st.vote = None
            st.inquired = False

    def _revote(self, i, st):
        st.vote = heapq.heappop(st.queue)
        st.inquired = False
        st.notified.discard(st.vote)
        self.net.send(self.name, i, st.vote[1], LOCKED)
        # A request queued behind the new vote would wait silently, and a
        # waiting process only yields to an Inquire once it holds a Failed;
        # without this notification the preemption chain can deadlock.
        for req in st.queue:
            if req not in st.notified:
                st.notified.add(req)
                self.net.send(self.name, i, req[1], FAILED)

    # requester side

    def _on_locked(self, i, src, payload):
        st = self._st[i]
        if st.phase != WAITING:
            raise ProtocolMisuse("%s: Locked at P%d while %s" % (self.name, i, st.phase))
        st.grants.add(src)
        st.failed.discard(src)
        if len(st.grants) == len(self.cot.sorted_quorums[i]):
            st.phase = HELD
            st.deferred = set()
            cb = st.on_granted
            st.on_granted = None
            self.net.record("ret", self.name, i, "entry")
            cb()

    def _on_failed(self, i, src, payload):
        st = self._st[i]
        if st.phase != WAITING:
            raise ProtocolMisuse("%s: Failed at P%d while %s" % (self.name, i, st.phase))
        st.failed.add(src)
        for j in sorted(st.deferred):
            if j in st.grants:
                st.grants.discard(j)
                self.net.send(self.name, i, j, RELINQUISH)
        st.deferred = set()

    def _on_inquire(self, i, src, payload):
        st = self._st[i]
        # Stale if we no longer hold src's grant (already relinquished or released).
        if st.phase != WAITING or src not in st.grants:
            return
        if st.failed:
            st.grants.discard(src)
            self.net.send(self.name, i, src, RELINQUISH)
        else:
            st.deferred.add(src)

    def fingerprint(self):
        return tuple(self._st[i].fingerprint() for i in sorted(self._st))

    def snapshot(self):
        return tuple(self._st[i].snapshot() for i in sorted(self._st))

    def restore(self, snap):
        for i, s in zip(sorted(self._st), snap):
            self._st[i].restore(s)
