"""Quorum-based l-mutual inclusion: keep at least `floor` processes in the CS.

Entry() is a non-blocking broadcast: the process flips to InCS immediately
and tells its quorum with Release messages.

Exit() is the guarded side. Serialized by an embedded quorum mutex, the
exiting process polls its quorum (Query/Response1) until it has evidence
of floor+1 processes in the CS, then detaches itself from every quorum
member's knowledge with an Acquire/Ack handshake before flipping to
OutCS. An arbiter that answered a Query with too few processes remembers
the asker (responseAgainTo) and pushes one Response2 when a Release
arrives, which is what unblocks a waiting exiter.

Per-process knowledge lives in procs_in_cs: arbiter j adds i on Release
and removes i on Acquire, so membership always certifies that i really is
in the CS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, ClassVar, Optional

from .coterie import CoterieAssignment, ConfigError
from .mutex import QuorumMutex
from .simnet import ProtocolMisuse

IN_CS = "InCS"
OUT_CS = "OutCS"

# exit() progress phases
P_IDLE, P_MX, P_GATE, P_ACKS = "idle", "mx", "gate", "acks"


class CsmicViolation(ProtocolMisuse):
    """Exit() invoked while OutCS, or Entry() while InCS."""


class _ImmutableMessage:
    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class Query(_ImmutableMessage):
    tag: ClassVar[str] = "Query"
    req_cnt: int


@dataclass(frozen=True)
class Response1(_ImmutableMessage):
    tag: ClassVar[str] = "Response1"
    procs: frozenset[int]
    req_cnt: int


@dataclass(frozen=True)
class Acquire(_ImmutableMessage):
    tag: ClassVar[str] = "Acquire"


@dataclass(frozen=True)
class Ack(_ImmutableMessage):
    tag: ClassVar[str] = "Ack"


@dataclass(frozen=True)
class Release(_ImmutableMessage):
    tag: ClassVar[str] = "Release"


@dataclass(frozen=True)
class Response2(_ImmutableMessage):
    tag: ClassVar[str] = "Response2"
    procs: frozenset[int]
    req_cnt: int


ACQUIRE, ACK, RELEASE = Acquire(), Ack(), Release()


@dataclass
class _ProcState:
    state: str
    procs_in_cs: set
    req_cnt: int = 0
    current_in_cs: set = field(default_factory=set)
    ack_from: set = field(default_factory=set)
    resp_again_to: Optional[int] = None
    resp_again_cnt: int = 0
    phase: str = P_IDLE
    on_done: Optional[Callable] = None

    def fingerprint(self):
        return (
            self.state, tuple(sorted(self.procs_in_cs)), self.req_cnt,
            tuple(sorted(self.current_in_cs)), tuple(sorted(self.ack_from)),
            self.resp_again_to, self.resp_again_cnt, self.phase,
        )

    def snapshot(self):
        return (
            self.state, frozenset(self.procs_in_cs), self.req_cnt,
            frozenset(self.current_in_cs), frozenset(self.ack_from),
            self.resp_again_to, self.resp_again_cnt, self.phase,
        )

    def restore(self, snap):
        (self.state, procs, self.req_cnt, current, acks,
         self.resp_again_to, self.resp_again_cnt, self.phase) = snap
        self.procs_in_cs = set(procs)
        self.current_in_cs = set(current)
        self.ack_from = set(acks)
        self.on_done = None  # rebound by the owner when an exit is open


class MutualInclusion:
    """One l-mutual-inclusion object spanning all n processes.

    skip_floor_gate removes the floor+1 wait in exit(). It exists solely so
    tests can confirm that the safety checker and the interleaving explorer
    catch the resulting violations; never enable it otherwise.
    """

    def __init__(self, net, name: str, cot: CoterieAssignment, floor: int,
                 initial_incs, skip_floor_gate: bool = False):
        n = cot.n
        initial = frozenset(initial_incs)
        if not 0 <= floor < n:
            raise ConfigError("floor must satisfy 0 <= floor < n, got floor=%d n=%d" % (floor, n))
        if not initial <= frozenset(range(1, n + 1)):
            raise ConfigError("initial InCS set contains unknown process ids")
        if len(initial) < floor:
            raise ConfigError(
                "unsafe initial configuration: %d InCS < floor %d" % (len(initial), floor))
        self.net = net
        self.name = name
        self.cot = cot
        self.floor = floor
        self.skip_floor_gate = skip_floor_gate
        self._st = {}
        for i in range(1, n + 1):
            st = _ProcState(
                state=IN_CS if i in initial else OUT_CS,
                procs_in_cs=set(cot.readers[i] & initial),
            )
            self._st[i] = st
            net.record("init", name, i, st.state)
        self.mx = QuorumMutex(net, name + "/mx", cot)
        self._handlers = {
            "Query": self._on_query,
            "Response1": self._on_response,
            "Acquire": self._on_acquire,
            "Ack": self._on_ack,
            "Release": self._on_release,
            "Response2": self._on_response,
        }
        net.register(name, self._dispatch)

    def procs(self):
        return range(1, self.cot.n + 1)

    def state(self, i: int) -> str:
        return self._st[i].state

    def entry(self, i: int, on_done: Optional[Callable] = None) -> None:
        """Flip to InCS and notify the quorum; never blocks."""
        st = self._st[i]
        if st.state != OUT_CS:
            raise CsmicViolation("%s: entry by P%d while %s" % (self.name, i, st.state))
        self.net.record("call", self.name, i, "entry")
        st.state = IN_CS
        self.net.record("flip", self.name, i, IN_CS)
        for j in self.cot.sorted_quorums[i]:
            self.net.send(self.name, i, j, RELEASE)
        self.net.record("ret", self.name, i, "entry")
        if on_done is not None:
            on_done()

    def exit(self, i: int, on_done: Optional[Callable] = None) -> None:
        """Flip to OutCS once floor+1 occupants are confirmed; blocks meanwhile."""
        st = self._st[i]
        if st.state != IN_CS:
            raise CsmicViolation("%s: exit by P%d while %s" % (self.name, i, st.state))
        if st.phase != P_IDLE:
            raise ProtocolMisuse("%s: exit re-entered by P%d" % (self.name, i))
        self.net.record("call", self.name, i, "exit")
        st.phase = P_MX
        st.on_done = on_done
        self.mx.entry(i, partial(self._exit_granted, i))

    def _exit_granted(self, i: int) -> None:
        st = self._st[i]
        st.req_cnt += 1
        st.current_in_cs = set()
        st.phase = P_GATE
        query = Query(st.req_cnt)
        for j in self.cot.sorted_quorums[i]:
            self.net.send(self.name, i, j, query)
        self._check_gate(i)

    def _check_gate(self, i: int) -> None:
        st = self._st[i]
        if st.phase != P_GATE:
            return
        if len(st.current_in_cs) >= self.floor + 1 or self.skip_floor_gate:
            st.phase = P_ACKS
            st.ack_from = set()
            for j in self.cot.sorted_quorums[i]:
                self.net.send(self.name, i, j, ACQUIRE)

    def _check_acks(self, i: int) -> None:
        st = self._st[i]
        if st.phase != P_ACKS or st.ack_from != self.cot.quorums[i]:
            return
        st.phase = P_IDLE
        self.mx.exit(i)
        st.state = OUT_CS
        self.net.record("flip", self.name, i, OUT_CS)
        self.net.record("ret", self.name, i, "exit")
        cb = st.on_done
        st.on_done = None
        if cb is not None:
            cb()

    def _dispatch(self, src, dst, payload):
        self._handlers[payload.tag](dst, src, payload)

    def _on_query(self, i, src, payload):
        st = self._st[i]
        self.net.send(self.name, i, src, Response1(frozenset(st.procs_in_cs), payload.req_cnt))
        if st.resp_again_to is not None and st.resp_again_to != src:
            # The embedded mutex should make concurrent pending queries
            # impossible; flag any overwrite for audit.
            self.net.record("note", self.name, i, "RespAgainOverwrite",
                            "dropped=%d kept=%d" % (st.resp_again_to, src))
        st.resp_again_to = src
        st.resp_again_cnt = payload.req_cnt

    def _on_response(self, i, src, payload):
        st = self._st[i]
        if payload.req_cnt == st.req_cnt:
            st.current_in_cs |= payload.procs
            self._check_gate(i)

    def _on_acquire(self, i, src, payload):
        st = self._st[i]
        st.procs_in_cs.discard(src)
        self.net.send(self.name, i, src, ACK)
        st.resp_again_to = None
        st.resp_again_cnt = 0

    def _on_ack(self, i, src, payload):
        st = self._st[i]
        st.ack_from.add(src)
        self._check_acks(i)

    def _on_release(self, i, src, payload):
        st = self._st[i]
        st.procs_in_cs.add(src)
        if st.resp_again_to is not None:
            self.net.send(self.name, i, st.resp_again_to,
                          Response2(frozenset(st.procs_in_cs), st.resp_again_cnt))
            st.resp_again_to = None
            st.resp_again_cnt = 0

    def fingerprint(self):
        return (self.floor,
                tuple(self._st[i].fingerprint() for i in sorted(self._st)),
                self.mx.fingerprint())

    def snapshot(self):
        return (tuple(self._st[i].snapshot() for i in sorted(self._st)),
                self.mx.snapshot())

    def restore(self, snap):
        """Restore raw state; exit on_done continuations are rebound by the caller."""
        states, mx_snap = snap
        for i, s in zip(sorted(self._st), states):
            self._st[i].restore(s)
        self.mx.restore(mx_snap)
        for i, st in self._st.items():
            if st.phase == P_MX:
                self.mx._st[i].on_granted = partial(self._exit_granted, i)
