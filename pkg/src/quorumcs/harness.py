"""Run driver, trace checkers, metrics, campaigns, and bounded exploration.

The checker never trusts protocol-internal views: it replays the trace,
rebuilding global state from init/flip records and per-process knowledge
from delivered messages, and asserts every invariant after every record.
Metrics are likewise pure trace consumers.
"""

from __future__ import annotations

import copy
import hashlib
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from functools import partial
from typing import Optional

from .coterie import BUILDERS, CoterieAssignment, ConfigError
from .gcs import Complement, GlobalCS, make_gcs
from .inclusion import IN_CS, OUT_CS, MutualInclusion
from .simnet import (
    DATA, DST, KIND, OBJ, SEQ, SRC, TAG, TICK,
    BudgetExhausted, ExplorationNetwork, Network, ProtocolMisuse, SimConfig,
)


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class RunSpec:
    """Everything that determines a single run. Same spec => same trace."""

    mode: str = "gcs"  # gcs | mutin | comutin
    n: int = 4
    l: int = 0
    k: Optional[int] = None
    coterie: str = "grid"
    seed: int = 0
    max_delay: int = 1
    cycles: int = 5
    max_think: int = 3
    budget: int = 1_000_000
    initial_incs: Optional[tuple] = None  # None -> mode-dependent default
    active: Optional[tuple] = None  # None -> all processes


@dataclass(frozen=True)
class RunContext:
    """Static facts the checker and metrics need about a run's objects."""

    kind: str
    n: int
    coterie: CoterieAssignment
    l: int
    k: Optional[int]
    top: str
    mutins: tuple  # ((obj, floor), ...)
    wrappers: tuple  # ((wrapper_obj, inner_obj), ...)
    bands: tuple  # ((obj, lo, hi), ...)
    sandwich: Optional[tuple]  # (band_obj, floor_obj, ceil_obj) for gcs
    active: tuple


def default_initial(spec: RunSpec) -> tuple:
    """Safe initial InCS set: deterministic, and never able to deadlock the
    configured driver (a lone active process must find floor+1 occupants)."""
    n, l, k = spec.n, spec.l, spec.k
    single = spec.active is not None and len(spec.active) < n
    if spec.mode == "mutin":
        count = n if single else max(l, (n + 1) // 2)
    elif spec.mode == "gcs":
        count = min(k, l + 1) if single else min(k, max(l, (l + k + 1) // 2))
    elif spec.mode == "comutin":
        count = k if single else min(k, (n + 1) // 2)
    else:
        raise ConfigError("unknown mode %r" % spec.mode)
    return tuple(range(1, count + 1))


def build_run(spec: RunSpec, cot: Optional[CoterieAssignment] = None,
              skip_floor_gate: bool = False):
    """Construct (net, top, ctx, driver) for a RunSpec."""
    if cot is None:
        cot = BUILDERS[spec.coterie](spec.n)
    if cot.n != spec.n:
        raise ConfigError("coterie is for n=%d, spec says n=%d" % (cot.n, spec.n))
    initial = spec.initial_incs
    if initial is None:
        initial = default_initial(spec)
    initial = frozenset(initial)
    active = tuple(spec.active) if spec.active is not None else tuple(range(1, spec.n + 1))
    net = Network(SimConfig(seed=spec.seed, max_delay=spec.max_delay,
                            event_budget=spec.budget))
    n, l, k = spec.n, spec.l, spec.k
    if spec.mode == "mutin":
        top = MutualInclusion(net, "inc", cot, l, initial, skip_floor_gate=skip_floor_gate)
        ctx = RunContext("mutin", n, cot, l, None, "inc",
                         mutins=(("inc", l),), wrappers=(),
                         bands=(("inc", l, n),), sandwich=None, active=active)
    elif spec.mode == "comutin":
        if k is None or not 1 <= k <= n:
            raise ConfigError("comutin needs 1 <= k <= n")
        if len(initial) > k:
            raise ConfigError("unsafe initial configuration: %d InCS > k=%d" % (len(initial), k))
        everyone = frozenset(range(1, n + 1))
        inner = MutualInclusion(net, "exc/in", cot, n - k, everyone - initial,
                                skip_floor_gate=skip_floor_gate)
        top = Complement(net, "exc", inner)
        ctx = RunContext("comutin", n, cot, 0, k, "exc",
                         mutins=(("exc/in", n - k),), wrappers=(("exc", "exc/in"),),
                         bands=(("exc", 0, k), ("exc/in", n - k, n)),
                         sandwich=None, active=active)
    elif spec.mode == "gcs":
        if k is None:
            raise ConfigError("gcs needs k")
        top = make_gcs(net, n, l, k, cot, initial, skip_floor_gate=skip_floor_gate)
        ctx = RunContext("gcs", n, cot, l, k, "gcs",
                         mutins=(("inc", l), ("exc/in", n - k)),
                         wrappers=(("exc", "exc/in"),),
                         bands=(("gcs", l, k), ("inc", l, n),
                                ("exc", 0, k), ("exc/in", n - k, n)),
                         sandwich=("gcs", "inc", "exc"), active=active)
    else:
        raise ConfigError("unknown mode %r" % spec.mode)
    driver = Driver(net, top, spec.cycles, spec.max_think, active)
    return net, top, ctx, driver


class Driver:
    """Per-process behavior loop: alternate exit and entry forever, finitized.

    A process never stops alternating on its own (the protocols' liveness
    assumes that); the experiment ends once every active process has
    completed `cycles` exits and entries. Stopping a process early can
    wedge a tight band: a process parked InCS under k = l+1 starves every
    later entry, so fast processes keep cycling until the stragglers are
    done.

    park=True restores per-process stopping (bounded state space) for the
    interleaving explorer, which only asserts safety.
    """

    def __init__(self, net, top, cycles: int, max_think: int = 0, active=None,
                 park: bool = False):
        self.net = net
        self.top = top
        self.cycles = cycles
        self.max_think = max_think
        self.park = park
        self.active = tuple(active) if active is not None else tuple(top.procs())
        self.exits_done = {i: 0 for i in self.active}
        self.entries_done = {i: 0 for i in self.active}

    def start(self):
        for i in self.active:
            self._kick(i)

    def completed(self) -> bool:
        return all(self.exits_done[i] >= self.cycles and self.entries_done[i] >= self.cycles
                   for i in self.active)

    def _kick(self, i):
        method_done = self.exits_done if self.top.state(i) == IN_CS else self.entries_done
        if self.park:
            if method_done[i] >= self.cycles:
                return
        elif self.completed():
            return
        if self.top.state(i) == IN_CS:
            self.top.exit(i, partial(self._finished, i, "exit"))
        else:
            self.top.entry(i, partial(self._finished, i, "entry"))

    def _finished(self, i, method):
        done = self.exits_done if method == "exit" else self.entries_done
        done[i] += 1
        if self.park and self.exits_done[i] >= self.cycles \
                and self.entries_done[i] >= self.cycles:
            return
        if not self.park and self.completed():
            return
        think = self.net.rng.randint(0, self.max_think) if self.max_think else 0
        self.net.schedule(think, partial(self._kick, i))

    def fingerprint(self):
        # Counts beyond `cycles` never change behavior; cap them so the
        # explorer's state space stays finite.
        c = self.cycles
        return (tuple((i, min(v, c)) for i, v in sorted(self.exits_done.items())),
                tuple((i, min(v, c)) for i, v in sorted(self.entries_done.items())))

    def snapshot(self):
        return self.fingerprint()

    def restore(self, snap):
        self.exits_done = dict(snap[0])
        self.entries_done = dict(snap[1])


# ---------------------------------------------------------------------------
# Safety checker


@dataclass
class Verdict:
    ok: bool
    violations: list  # (record index, tick, description)

    @property
    def first(self):
        return self.violations[0] if self.violations else None

    def describe(self) -> str:
        if self.ok:
            return "pass"
        idx, tick, msg = self.violations[0]
        return "FAIL at record %d (tick %d): %s" % (idx, tick, msg)


_MAX_VIOLATIONS = 50


def check_safety(trace, ctx: RunContext) -> Verdict:
    """Replay the trace and assert every safety invariant after every record.

    Checked: the count bands of every object (l <= #InCS <= k and the
    component floors/ceilings), CSMIC and method alternation, flips only
    inside the owning method, knowledge soundness (j in procs_in_cs_i =>
    j InCS), exit-window soundness for gathered currentInCS sets, the
    per-process gcs sandwich, and wrapper/inner state inversion.
    """
    violations = []

    def fail(idx, tick, msg):
        violations.append((idx, tick, msg))
        return len(violations) >= _MAX_VIOLATIONS

    cs_objs = {ctx.top}
    bands = {obj: (lo, hi) for obj, lo, hi in ctx.bands}
    mutin_floor = dict(ctx.mutins)
    for obj, _ in ctx.mutins:
        cs_objs.add(obj)
    for wrap, inner in ctx.wrappers:
        cs_objs.add(wrap)
    mx_of = {obj + "/mx": obj for obj, _ in ctx.mutins}
    wrapper_of_inner = {inner: wrap for wrap, inner in ctx.wrappers}

    in_cs = {}  # (obj, proc) -> bool
    counts = Counter()
    in_method = {}  # (obj, proc) -> method currently open
    mx_pending = {}  # (mx, proc) -> entry requested, not yet granted
    mx_held = {}  # (mx, proc) -> bool
    mx_holders = Counter()  # mx -> number of holders
    psets = {}  # (mutin, proc) -> set of known-InCS procs
    pref = {obj: Counter() for obj, _ in ctx.mutins}  # knowledge refcounts
    windows = {}  # (mutin, proc) -> [req_cnt, set]
    wref = {obj: Counter() for obj, _ in ctx.mutins}  # window refcounts
    dirty_inversion = set()  # procs with a fresh inner flip to re-check
    init_done = False

    def bands_ok(idx, tick, obj):
        if obj in bands:
            lo, hi = bands[obj]
            c = counts[obj]
            if not lo <= c <= hi:
                return fail(idx, tick, "%s count %d outside [%d, %d]" % (obj, c, lo, hi))
        return False

    def sandwich_ok(idx, tick, proc):
        if ctx.sandwich is None:
            return False
        g_obj, f_obj, c_obj = ctx.sandwich
        g = in_cs.get((g_obj, proc), False)
        f = in_cs.get((f_obj, proc), False)
        c = in_cs.get((c_obj, proc), False)
        if f and not g:
            return fail(idx, tick, "P%d: floor InCS but %s OutCS" % (proc, g_obj))
        if g and not c:
            return fail(idx, tick, "P%d: %s InCS but ceiling OutCS" % (proc, g_obj))
        return False

    def finish_init(idx, tick):
        for obj, floor in ctx.mutins:
            for i in range(1, ctx.n + 1):
                ps = {j for j in ctx.coterie.readers[i] if in_cs.get((obj, j), False)}
                psets[(obj, i)] = ps
                for j in ps:
                    pref[obj][j] += 1
        for obj in bands:
            if bands_ok(idx, tick, obj):
                return True
        return False

    stop = False
    for idx, rec in enumerate(trace):
        if stop:
            break
        kind = rec[KIND]
        tick = rec[TICK]
        obj = rec[OBJ]

        if kind == "init":
            if init_done:
                stop = fail(idx, tick, "init record after start of execution")
                continue
            if obj in cs_objs:
                key = (obj, rec[SRC])
                val = rec[TAG] == IN_CS
                in_cs[key] = val
                if val:
                    counts[obj] += 1
            continue
        if not init_done:
            init_done = True
            stop = finish_init(idx, tick)
            if stop:
                break

        if kind == "recv":
            if dirty_inversion:
                for wrap, inner in ctx.wrappers:
                    for p in dirty_inversion:
                        if in_cs.get((wrap, p)) == in_cs.get((inner, p)):
                            stop = fail(idx, tick,
                                        "P%d: %s state not inverse of %s" % (p, wrap, inner))
                dirty_inversion.clear()
                if stop:
                    break
            tag = rec[TAG]
            if obj in mutin_floor:
                dst = rec[DST]
                src = rec[SRC]
                if tag == "Release":
                    ps = psets[(obj, dst)]
                    if src not in ps:
                        if not in_cs.get((obj, src), False):
                            stop = fail(idx, tick,
                                        "%s: P%d learns P%d InCS but it is OutCS" % (obj, dst, src))
                        ps.add(src)
                        pref[obj][src] += 1
                elif tag == "Acquire":
                    ps = psets[(obj, dst)]
                    if src in ps:
                        ps.discard(src)
                        pref[obj][src] -= 1
                elif tag == "Response1" or tag == "Response2":
                    w = windows.get((obj, dst))
                    if w is not None and rec[DATA].req_cnt == w[0]:
                        wr = wref[obj]
                        for j in rec[DATA].procs:
                            if j not in w[1]:
                                if not in_cs.get((obj, j), False):
                                    stop = fail(idx, tick,
                                                "%s: exit window of P%d holds OutCS P%d"
                                                % (obj, dst, j))
                                w[1].add(j)
                                wr[j] += 1
            continue

        if kind == "send":
            if rec[TAG] == "Query" and obj in mutin_floor:
                src = rec[SRC]
                w = windows.get((obj, src))
                req = rec[DATA].req_cnt
                if w is None or w[0] != req:
                    if w is not None:
                        wr = wref[obj]
                        for j in w[1]:
                            wr[j] -= 1
                    windows[(obj, src)] = [req, set()]
            continue

        if kind == "flip":
            proc = rec[SRC]
            key = (obj, proc)
            new = rec[TAG] == IN_CS
            method = in_method.get(key)
            want = "entry" if new else "exit"
            if method != want:
                stop = fail(idx, tick, "%s: P%d flip to %s outside %s()"
                            % (obj, proc, rec[TAG], want))
            if in_cs.get(key) == new and obj in cs_objs:
                stop = fail(idx, tick, "%s: P%d flip to %s without change" % (obj, proc, rec[TAG]))
            if obj in mutin_floor and not new:
                w = windows.pop(key, None)
                if w is not None:
                    wr = wref[obj]
                    for j in w[1]:
                        wr[j] -= 1
                if pref[obj][proc] > 0:
                    stop = fail(idx, tick,
                                "%s: P%d flips OutCS while still in some procs_in_cs" % (obj, proc))
                if wref[obj][proc] > 0:
                    stop = fail(idx, tick,
                                "%s: P%d flips OutCS while in an active exit window" % (obj, proc))
            if obj in cs_objs:
                counts[obj] += 1 if new else -1
                in_cs[key] = new
                stop = bands_ok(idx, tick, obj) or stop
                stop = sandwich_ok(idx, tick, proc) or stop
            if obj in wrapper_of_inner or obj in wrapper_of_inner.values():
                dirty_inversion.add(proc)
            continue

        if kind == "call":
            proc = rec[SRC]
            key = (obj, proc)
            method = rec[TAG]
            if in_method.get(key) is not None:
                stop = fail(idx, tick, "%s: P%d %s() while %s() still open"
                            % (obj, proc, method, in_method[key]))
            in_method[key] = method
            if obj in cs_objs:
                state = in_cs.get(key, False)
                if method == "exit" and not state:
                    stop = fail(idx, tick, "CSMIC: %s.exit() by P%d while OutCS" % (obj, proc))
                elif method == "entry" and state:
                    stop = fail(idx, tick, "CSMIC: %s.entry() by P%d while InCS" % (obj, proc))
            elif obj in mx_of:
                if method == "entry":
                    if mx_held.get(key) or mx_pending.get(key):
                        stop = fail(idx, tick, "%s: P%d double entry" % (obj, proc))
                    mx_pending[key] = True
                else:
                    if not mx_held.get(key):
                        stop = fail(idx, tick, "%s: P%d exit without holding" % (obj, proc))
                    mx_held[key] = False
                    mx_holders[obj] -= 1
            continue

        if kind == "ret":
            proc = rec[SRC]
            key = (obj, proc)
            if in_method.get(key) != rec[TAG]:
                stop = fail(idx, tick, "%s: P%d ret %s without call" % (obj, proc, rec[TAG]))
            in_method[key] = None
            if obj in mx_of and rec[TAG] == "entry":
                mx_pending[key] = False
                mx_held[key] = True
                mx_holders[obj] += 1
                if mx_holders[obj] > 1:
                    stop = fail(idx, tick, "%s: two holders" % obj)
            continue

        # note records carry no state

    if not init_done:
        finish_init(len(trace), 0)
    for wrap, inner in ctx.wrappers:
        for p in dirty_inversion:
            if in_cs.get((wrap, p)) == in_cs.get((inner, p)):
                fail(len(trace) - 1, trace[-1][TICK] if trace else 0,
                     "P%d: %s state not inverse of %s at end" % (p, wrap, inner))
    return Verdict(ok=not violations, violations=violations)


def check_transport(trace) -> list:
    """FIFO per ordered link and at-most-once delivery; exactly-once is
    asserted by callers on runs that reached quiescence."""
    issues = []
    sends = {}  # link -> list of seq
    recvs = {}  # link -> list of seq
    seen = set()
    for rec in trace:
        if rec[KIND] == "send":
            sends.setdefault((rec[SRC], rec[DST]), []).append(rec[SEQ])
        elif rec[KIND] == "recv":
            if rec[SEQ] in seen:
                issues.append("message seq %d delivered twice" % rec[SEQ])
            seen.add(rec[SEQ])
            recvs.setdefault((rec[SRC], rec[DST]), []).append(rec[SEQ])
    for link, rlist in recvs.items():
        slist = sends.get(link, [])
        if rlist != slist[: len(rlist)]:
            issues.append("link %s delivered out of send order" % (link,))
    return issues


def undelivered(trace) -> int:
    sent = sum(1 for r in trace if r[KIND] == "send")
    recvd = sum(1 for r in trace if r[KIND] == "recv")
    return sent - recvd


# ---------------------------------------------------------------------------
# Liveness checker


@dataclass
class LivenessVerdict:
    ok: bool
    cycles: int
    done: dict  # proc -> (exits, entries)
    blocked: dict  # proc -> description of the open wait, if any

    def describe(self) -> str:
        if self.ok:
            return "pass"
        lag = {p: d for p, d in self.done.items()
               if min(d) < self.cycles}
        return "FAIL: incomplete %s; blocked: %s" % (lag, self.blocked or "none")


def check_liveness(trace, ctx: RunContext, cycles: int) -> LivenessVerdict:
    """Every active process must complete `cycles` exits and entries."""
    done = {i: [0, 0] for i in ctx.active}
    open_calls = {}  # (obj, proc) -> (method, tick)
    last_query = {}
    last_acquire = {}
    for rec in trace:
        kind = rec[KIND]
        if kind == "ret":
            if rec[OBJ] == ctx.top and rec[SRC] in done:
                done[rec[SRC]][0 if rec[TAG] == "exit" else 1] += 1
            open_calls.pop((rec[OBJ], rec[SRC]), None)
        elif kind == "call":
            open_calls[(rec[OBJ], rec[SRC])] = (rec[TAG], rec[TICK])
        elif kind == "send":
            if rec[TAG] == "Query":
                last_query[(rec[OBJ], rec[SRC])] = rec[TICK]
            elif rec[TAG] == "Acquire":
                last_acquire[(rec[OBJ], rec[SRC])] = rec[TICK]
    blocked = {}
    mutin_names = {obj for obj, _ in ctx.mutins}
    for (obj, proc), (method, tick) in sorted(open_calls.items()):
        desc = "%s.%s() open since tick %d" % (obj, method, tick)
        if obj in mutin_names and method == "exit":
            if ((obj + "/mx", proc)) in open_calls:
                stage = "mx wait"
            elif last_acquire.get((obj, proc), -1) >= last_query.get((obj, proc), -1) \
                    and (obj, proc) in last_acquire:
                stage = "ack wait"
            else:
                stage = "floor gate wait"
            desc += " (%s)" % stage
        blocked.setdefault(proc, []).append(desc)
    ok = all(d[0] >= cycles and d[1] >= cycles for d in done.values())
    return LivenessVerdict(ok=ok, cycles=cycles,
                           done={p: tuple(d) for p, d in done.items()},
                           blocked={p: "; ".join(v) for p, v in blocked.items()})


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class Invocation:
    obj: str
    proc: int
    method: str
    call_idx: int
    call_tick: int
    ret_idx: int = -1
    ret_tick: int = -1
    burst: list = field(default_factory=list)  # seqs of the completion burst
    chain_end: int = -1  # tick the causal message chain lands
    conv: int = -1  # waiting time under the hop-accounting convention
    raw: int = -1  # method return minus invocation


@dataclass
class MetricsReport:
    """Message tallies and waiting times extracted from one trace."""

    quorum_size: int
    msg_counts: Counter
    total_messages: int
    pairs: int
    waits: dict  # (obj, method) -> list[Invocation]

    def conv_values(self, obj, method):
        return [v.conv for v in self.waits.get((obj, method), ()) if v.conv >= 0]

    def raw_values(self, obj, method):
        return [v.raw for v in self.waits.get((obj, method), ()) if v.raw >= 0]

    def msgs_per_pair(self) -> float:
        return self.total_messages / self.pairs if self.pairs else float("nan")

    def obj_total(self, prefix: str) -> int:
        return sum(c for (obj, _tag), c in self.msg_counts.items()
                   if obj == prefix or obj.startswith(prefix + "/"))

    def render_lines(self) -> list:
        lines = ["quorum_size=%d" % self.quorum_size,
                 "messages_total=%d" % self.total_messages,
                 "pairs=%d" % self.pairs]
        if self.pairs:
            lines.append("messages_per_pair=%.2f" % self.msgs_per_pair())
        for (obj, tag), c in sorted(self.msg_counts.items()):
            lines.append("messages[%s.%s]=%d" % (obj, tag, c))
        for (obj, method), invs in sorted(self.waits.items()):
            convs = [v.conv for v in invs if v.conv >= 0]
            raws = [v.raw for v in invs if v.raw >= 0]
            if convs:
                lines.append("wait[%s.%s] count=%d conv_max=%d conv_mean=%.2f raw_max=%d"
                             % (obj, method, len(convs), max(convs),
                                sum(convs) / len(convs), max(raws) if raws else -1))
        return lines


def measure(trace, ctx: RunContext) -> MetricsReport:
    """Count messages and reconstruct waiting times from the trace.

    The waiting-time convention counts the full message chain a method is
    accountable for: exit ends when the final mutex-release burst lands;
    entry ends when a triggered Response2 lands, or one time unit after
    the Release burst lands when nothing needed the notification.
    Composite objects report the sum of their parts. Raw figures (method
    return minus invocation) are kept alongside.
    """
    recv_tick = {}
    recv_index = {}
    msg_counts = Counter()
    for idx, rec in enumerate(trace):
        if rec[KIND] == "recv":
            recv_tick[rec[SEQ]] = rec[TICK]
            recv_index[rec[SEQ]] = idx
        elif rec[KIND] == "send":
            msg_counts[(rec[OBJ], rec[TAG])] += 1

    mutin_names = [obj for obj, _ in ctx.mutins]
    mx_parent = {obj + "/mx": obj for obj in mutin_names}
    invs = {}  # (obj, proc) -> list[Invocation]
    open_inv = {}  # (obj, proc) -> Invocation

    for idx, rec in enumerate(trace):
        kind = rec[KIND]
        if kind == "call":
            inv = Invocation(rec[OBJ], rec[SRC], rec[TAG], idx, rec[TICK])
            open_inv[(rec[OBJ], rec[SRC])] = inv
            invs.setdefault((rec[OBJ], rec[SRC]), []).append(inv)
        elif kind == "ret":
            inv = open_inv.pop((rec[OBJ], rec[SRC]), None)
            if inv is not None:
                inv.ret_idx = idx
                inv.ret_tick = rec[TICK]
                inv.raw = rec[TICK] - inv.call_tick
        elif kind == "send":
            obj, tag, src = rec[OBJ], rec[TAG], rec[SRC]
            if tag == "MxRelease":
                parent = mx_parent.get(obj)
                inv = open_inv.get((obj, src))  # the mx.exit invocation
                if inv is not None:
                    inv.burst.append(rec[SEQ])
                if parent is not None:
                    pinv = open_inv.get((parent, src))
                    if pinv is not None and pinv.method == "exit":
                        pinv.burst.append(rec[SEQ])
            elif tag == "Release" and obj in mx_parent.values():
                inv = open_inv.get((obj, src))
                if inv is not None and inv.method == "entry":
                    inv.burst.append(rec[SEQ])

    def chain_end_of(inv):
        ticks = [recv_tick[s] for s in inv.burst if s in recv_tick]
        return max(ticks) if len(ticks) == len(inv.burst) and ticks else -1

    # Response2 chains triggered by an entry's Release burst.
    for obj in mutin_names:
        for (o, proc), lst in invs.items():
            if o != obj:
                continue
            for inv in lst:
                if inv.method != "entry" or inv.ret_idx < 0:
                    continue
                end = chain_end_of(inv)
                if end < 0:
                    continue
                resp_end = -1
                for s in inv.burst:
                    ridx = recv_index.get(s)
                    if ridx is None:
                        continue
                    arbiter = trace[ridx][DST]
                    j = ridx + 1
                    while j < len(trace) and trace[j][KIND] == "send":
                        srec = trace[j]
                        if srec[OBJ] == obj and srec[TAG] == "Response2" and srec[SRC] == arbiter:
                            t = recv_tick.get(srec[SEQ], -1)
                            if t < 0:
                                resp_end = -2  # chain truncated
                            elif resp_end != -2:
                                resp_end = max(resp_end, t)
                        j += 1
                if resp_end == -2:
                    continue
                inv.chain_end = resp_end if resp_end >= 0 else end + 1
                inv.conv = inv.chain_end - inv.call_tick
            for inv in lst:
                if inv.method == "exit" and inv.ret_idx >= 0:
                    end = chain_end_of(inv)
                    if end >= 0:
                        inv.chain_end = end
                        inv.conv = end - inv.call_tick

    for mx, parent in mx_parent.items():
        for (o, proc), lst in invs.items():
            if o != mx:
                continue
            for inv in lst:
                if inv.ret_idx < 0:
                    continue
                if inv.method == "entry":
                    inv.conv = inv.raw
                else:
                    end = chain_end_of(inv)
                    if end >= 0:
                        inv.chain_end = end
                        inv.conv = end - inv.call_tick

    def nested(child_key, lo, hi):
        for inv in invs.get(child_key, ()):
            if lo < inv.call_idx < hi:
                return inv
        return None

    for wrap, inner in ctx.wrappers:
        for (o, proc), lst in list(invs.items()):
            if o != wrap:
                continue
            for inv in lst:
                if inv.ret_idx < 0:
                    continue
                # wrapper entry delegates to inner exit and vice versa
                want = "exit" if inv.method == "entry" else "entry"
                ninv = nested((inner, proc), inv.call_idx, inv.ret_idx)
                if ninv is not None and ninv.method == want and ninv.conv >= 0:
                    inv.conv = ninv.conv
                    inv.chain_end = ninv.chain_end

    if ctx.kind == "gcs":
        for (o, proc), lst in list(invs.items()):
            if o != "gcs":
                continue
            for inv in lst:
                if inv.ret_idx < 0:
                    continue
                a = nested(("inc", proc), inv.call_idx, inv.ret_idx)
                b = nested(("exc", proc), inv.call_idx, inv.ret_idx)
                if a is not None and b is not None and a.conv >= 0 and b.conv >= 0:
                    inv.conv = a.conv + b.conv

    pairs = 0
    for i in range(1, ctx.n + 1):
        lst = invs.get((ctx.top, i), ())
        exits = sum(1 for v in lst if v.method == "exit" and v.ret_idx >= 0)
        entries = sum(1 for v in lst if v.method == "entry" and v.ret_idx >= 0)
        pairs += min(exits, entries)

    waits = {}
    for (obj, proc), lst in invs.items():
        for inv in lst:
            waits.setdefault((obj, inv.method), []).append(inv)

    return MetricsReport(
        quorum_size=ctx.coterie.quorum_size(),
        msg_counts=msg_counts,
        total_messages=sum(msg_counts.values()),
        pairs=pairs,
        waits=waits,
    )


# ---------------------------------------------------------------------------
# Single runs and campaigns


@dataclass
class RunResult:
    spec: RunSpec
    ctx: RunContext
    completed: bool
    safety: Verdict
    liveness: LivenessVerdict
    transport_issues: list
    metrics: Optional[MetricsReport] = None
    trace: Optional[list] = None

    @property
    def ok(self) -> bool:
        return (self.completed and self.safety.ok and self.liveness.ok
                and not self.transport_issues)

    def describe(self) -> str:
        bits = ["safety=%s" % ("pass" if self.safety.ok else self.safety.describe()),
                "liveness=%s" % ("pass" if self.liveness.ok else self.liveness.describe())]
        if self.transport_issues:
            bits.append("transport=FAIL:%s" % self.transport_issues[0])
        if not self.completed:
            bits.append("budget=EXHAUSTED")
        return " ".join(bits)


def run_single(spec: RunSpec, cot: Optional[CoterieAssignment] = None,
               want_metrics: bool = False, keep_trace: bool = False,
               skip_floor_gate: bool = False) -> RunResult:
    net, top, ctx, driver = build_run(spec, cot, skip_floor_gate=skip_floor_gate)
    driver.start()
    completed = True
    try:
        net.run()
    except BudgetExhausted:
        completed = False
    trace = net.trace
    safety = check_safety(trace, ctx)
    liveness = check_liveness(trace, ctx, spec.cycles)
    issues = check_transport(trace)
    if completed and undelivered(trace) != 0:
        issues.append("%d messages never delivered in a quiescent run" % undelivered(trace))
    metrics = measure(trace, ctx) if want_metrics else None
    return RunResult(spec, ctx, completed, safety, liveness, issues,
                     metrics, trace if keep_trace else None)


@dataclass
class CampaignResult:
    runs: int
    failures: list  # (spec, description)

    @property
    def ok(self):
        return not self.failures


def campaign(base: RunSpec, seeds, delays=(1, 5, 20),
             cot: Optional[CoterieAssignment] = None,
             per_run=None) -> CampaignResult:
    """Run `base` across seeds, cycling max_delay over `delays` by seed index."""
    failures = []
    runs = 0
    delays = tuple(delays)
    for s in seeds:
        spec = replace(base, seed=s, max_delay=delays[s % len(delays)])
        result = run_single(spec, cot)
        runs += 1
        if not result.ok:
            failures.append((spec, result.describe()))
        if per_run is not None:
            per_run(result)
    return CampaignResult(runs, failures)


def admissible_lk(n: int):
    """All (l, k) with 0 <= l < k <= n."""
    return [(l, k) for l in range(0, n) for k in range(l + 1, n + 1)]


# ---------------------------------------------------------------------------
# Bounded exploration


_PAYLOAD_FIELDS = {}


def _payload_key(payload):
    cls = type(payload)
    names = _PAYLOAD_FIELDS.get(cls)
    if names is None:
        names = [f.name for f in fields(cls)]
        _PAYLOAD_FIELDS[cls] = names
    vals = []
    for name in names:
        v = getattr(payload, name)
        vals.append(tuple(sorted(v)) if isinstance(v, frozenset) else v)
    return (payload.tag, tuple(vals))


class _ExploreSystem:
    """One live system plus snapshot/restore over its entire mutable state.

    Stored continuations (an open exit's completion chain, a pending mutex
    grant) are fully determined by the composition and the saved phases,
    so restore() rebuilds them instead of copying callables.
    """

    def __init__(self, net, top, mutins, band, driver, kind):
        self.net = net
        self.top = top
        self.mutins = mutins  # [(MutualInclusion, floor), ...]
        self.band = band  # (lo, hi) for the top object
        self.driver = driver
        self.kind = kind

    def check(self) -> Optional[str]:
        lo, hi = self.band
        c = sum(1 for i in self.top.procs() if self.top.state(i) == IN_CS)
        if not lo <= c <= hi:
            return "top count %d outside [%d, %d]" % (c, lo, hi)
        for m, floor in self.mutins:
            c = sum(1 for i in m.procs() if m.state(i) == IN_CS)
            if c < floor:
                return "%s count %d below floor %d" % (m.name, c, floor)
        return None

    def snapshot(self):
        return (self.net.snapshot(), self.top.snapshot(), self.driver.snapshot())

    def restore(self, snap):
        net_snap, top_snap, driver_snap = snap
        self.net.restore(net_snap)
        self.top.restore(top_snap)
        self.driver.restore(driver_snap)
        self._rebind()

    def _rebind(self):
        """Reattach exit completion continuations after a restore."""
        driver = self.driver
        if self.kind == "mutin":
            top = self.top
            for i, st in top._st.items():
                if st.phase != "idle":
                    st.on_done = partial(driver._finished, i, "exit")
        else:  # gcs
            gcs_obj = self.top
            comp = gcs_obj.ceil_obj
            for i, st in gcs_obj.floor_obj._st.items():
                if st.phase != "idle":
                    st.on_done = partial(gcs_obj._exited, i,
                                         partial(driver._finished, i, "exit"))
            for i, st in comp.inner._st.items():
                if st.phase != "idle":
                    st.on_done = partial(
                        comp._flip, i, IN_CS, "entry",
                        partial(gcs_obj._entered, i,
                                partial(driver._finished, i, "entry")))

    def digest(self):
        links = tuple(sorted(
            (link, tuple((obj, _payload_key(p)) for obj, p in q))
            for link, q in self.net.links.items() if q))
        key = (links, self.top.fingerprint(), self.driver.fingerprint())
        return hashlib.blake2b(repr(key).encode(), digest_size=16).digest()


@dataclass
class ExploreOutcome:
    states: int
    transitions: int
    complete: bool
    violation: Optional[str]

    @property
    def ok(self):
        return self.violation is None


def explore(spec: RunSpec, cap: int = 1_000_000,
            cot: Optional[CoterieAssignment] = None,
            skip_floor_gate: bool = False) -> ExploreOutcome:
    """Systematically enumerate message delivery orders for a tiny run.

    Explores the reachable-state graph (states deduplicated by content)
    up to `cap` states, checking the safety bands after every delivery.
    Stops at the first violation. Intended for n <= 3 and cycles = 1.
    """
    if spec.max_think != 0:
        raise ConfigError("exploration requires max_think=0")
    if cot is None:
        cot = BUILDERS[spec.coterie](spec.n)
    initial = spec.initial_incs
    if initial is None:
        initial = default_initial(spec)
    initial = frozenset(initial)
    net = ExplorationNetwork()
    n, l, k = spec.n, spec.l, spec.k
    if spec.mode == "mutin":
        top = MutualInclusion(net, "inc", cot, l, initial, skip_floor_gate=skip_floor_gate)
        mutins = [(top, l)]
        band = (l, n)
    elif spec.mode == "gcs":
        top = make_gcs(net, n, l, k, cot, initial, skip_floor_gate=skip_floor_gate)
        mutins = [(top.floor_obj, l), (top.ceil_obj.inner, n - k)]
        band = (l, k)
    else:
        raise ConfigError("explore supports modes mutin and gcs")
    driver = Driver(net, top, spec.cycles, 0, spec.active, park=True)
    system = _ExploreSystem(net, top, mutins, band, driver, spec.mode)
    try:
        driver.start()
    except ProtocolMisuse as exc:
        return ExploreOutcome(1, 0, True, str(exc))
    err = system.check()
    if err:
        return ExploreOutcome(1, 0, True, err)

    root = system.snapshot()
    seen = {system.digest()}
    stack = [root]
    states = 1
    transitions = 0
    truncated = False
    while stack:
        snap = stack.pop()
        system.restore(snap)
        links = system.net.enabled_links()
        first = True
        for link in links:
            if not first:
                system.restore(snap)
            first = False
            transitions += 1
            try:
                system.net.deliver_next(link)
                err = system.check()
            except ProtocolMisuse as exc:
                err = str(exc)
            if err:
                return ExploreOutcome(states, transitions, False, err)
            d = system.digest()
            if d not in seen:
                if states >= cap:
                    truncated = True
                    continue
                seen.add(d)
                states += 1
                stack.append(system.snapshot())
    return ExploreOutcome(states, transitions, not truncated, None)
