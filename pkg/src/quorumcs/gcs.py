"""Critical-section composition: complement wrapper and the [l, k] band.

Complement turns a floor protocol into a ceiling protocol by swapping the
two states: entering the wrapped CS is leaving the inner one, so an
inner floor of n-k becomes an outer ceiling of k.

GlobalCS runs a floor object and a ceiling object side by side. Exit
first clears the floor object (which blocks while only l processes are
in), then releases the ceiling object; entry does the mirror image. The
composed state flips right after the blocking half completes, which is
what keeps the per-process sandwich floor_state >= gcs_state >= ceiling
... i.e. #floor <= #gcs <= #ceiling, and with it l <= #InCS <= k.
"""

from __future__ import annotations

from functools import partial
from typing import Callable, Optional

from .coterie import CoterieAssignment, ConfigError
from .inclusion import IN_CS, OUT_CS, CsmicViolation, MutualInclusion


class Complement:
    """CS object reading an inner object with InCS/OutCS swapped."""

    def __init__(self, net, name: str, inner: MutualInclusion):
        self.net = net
        self.name = name
        self.inner = inner
        for i in inner.procs():
            net.record("init", name, i, self.state(i))

    def procs(self):
        return self.inner.procs()

    def state(self, i: int) -> str:
        return OUT_CS if self.inner.state(i) == IN_CS else IN_CS

    def entry(self, i: int, on_done: Optional[Callable] = None) -> None:
        if self.state(i) != OUT_CS:
            raise CsmicViolation("%s: entry by P%d while %s" % (self.name, i, self.state(i)))
        self.net.record("call", self.name, i, "entry")
        self.inner.exit(i, partial(self._flip, i, IN_CS, "entry", on_done))

    def exit(self, i: int, on_done: Optional[Callable] = None) -> None:
        if self.state(i) != IN_CS:
            raise CsmicViolation("%s: exit by P%d while %s" % (self.name, i, self.state(i)))
        self.net.record("call", self.name, i, "exit")
        self.inner.entry(i, partial(self._flip, i, OUT_CS, "exit", on_done))

    def _flip(self, i, new_state, method, on_done):
        self.net.record("flip", self.name, i, new_state)
        self.net.record("ret", self.name, i, method)
        if on_done is not None:
            on_done()

    def fingerprint(self):
        return self.inner.fingerprint()

    def snapshot(self):
        return self.inner.snapshot()

    def restore(self, snap):
        self.inner.restore(snap)


class GlobalCS:
    """Keeps the number of InCS processes within [l, k] at all times."""

    def __init__(self, net, name: str, floor_obj: MutualInclusion,
                 ceil_obj: Complement, l: int, k: int):
        self.net = net
        self.name = name
        self.floor_obj = floor_obj
        self.ceil_obj = ceil_obj
        self.l = l
        self.k = k
        self._state = {}
        for i in floor_obj.procs():
            if floor_obj.state(i) != ceil_obj.state(i):
                raise ConfigError("component states disagree for P%d" % i)
            self._state[i] = floor_obj.state(i)
            net.record("init", name, i, self._state[i])

    def procs(self):
        return self.floor_obj.procs()

    def state(self, i: int) -> str:
        return self._state[i]

    def exit(self, i: int, on_done: Optional[Callable] = None) -> None:
        """Blocks in the floor object while only l processes are in the CS."""
        if self._state[i] != IN_CS:
            raise CsmicViolation("%s: exit by P%d while %s" % (self.name, i, self._state[i]))
        self.net.record("call", self.name, i, "exit")
        self.floor_obj.exit(i, partial(self._exited, i, on_done))

    def _exited(self, i, on_done):
        self._state[i] = OUT_CS
        self.net.record("flip", self.name, i, OUT_CS)
        self.ceil_obj.exit(i, partial(self._done, i, "exit", on_done))

    def entry(self, i: int, on_done: Optional[Callable] = None) -> None:
        """Blocks in the ceiling object while k processes are in the CS."""
        if self._state[i] != OUT_CS:
            raise CsmicViolation("%s: entry by P%d while %s" % (self.name, i, self._state[i]))
        self.net.record("call", self.name, i, "entry")
        self.ceil_obj.entry(i, partial(self._entered, i, on_done))

    def _entered(self, i, on_done):
        self._state[i] = IN_CS
        self.net.record("flip", self.name, i, IN_CS)
        self.floor_obj.entry(i, partial(self._done, i, "entry", on_done))

    def _done(self, i, method, on_done):
        self.net.record("ret", self.name, i, method)
        if on_done is not None:
            on_done()

    def fingerprint(self):
        return (tuple(sorted(self._state.items())),
                self.floor_obj.fingerprint(), self.ceil_obj.fingerprint())

    def snapshot(self):
        return (tuple(sorted(self._state.items())),
                self.floor_obj.snapshot(), self.ceil_obj.snapshot())

    def restore(self, snap):
        states, floor_snap, ceil_snap = snap
        self._state = dict(states)
        self.floor_obj.restore(floor_snap)
        self.ceil_obj.restore(ceil_snap)


def make_gcs(net, n: int, l: int, k: int, cot: CoterieAssignment,
             initial_incs, skip_floor_gate: bool = False) -> GlobalCS:
    """Build the band object over a shared coterie.

    The floor side is a MutualInclusion(l); the ceiling side is a
    Complement over MutualInclusion(n-k) whose inner InCS set is the
    complement of initial_incs. All three per-process states agree in the
    initial configuration, which must already satisfy l <= |InCS| <= k.
    """
    if cot.n != n:
        raise ConfigError("coterie is for n=%d, expected %d" % (cot.n, n))
    if not 0 <= l < k <= n:
        raise ConfigError("need 0 <= l < k <= n, got l=%d k=%d n=%d" % (l, k, n))
    initial = frozenset(initial_incs)
    if not l <= len(initial) <= k:
        raise ConfigError(
            "unsafe initial configuration: |InCS|=%d outside [%d, %d]" % (len(initial), l, k))
    everyone = frozenset(range(1, n + 1))
    if not initial <= everyone:
        raise ConfigError("initial InCS set contains unknown process ids")
    floor_obj = MutualInclusion(net, "inc", cot, l, initial,
                                skip_floor_gate=skip_floor_gate)
    inner = MutualInclusion(net, "exc/in", cot, n - k, everyone - initial,
                            skip_floor_gate=skip_floor_gate)
    ceil_obj = Complement(net, "exc", inner)
    return GlobalCS(net, "gcs", floor_obj, ceil_obj, l, k)
