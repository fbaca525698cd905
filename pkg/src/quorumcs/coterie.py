"""Coterie construction and verification.

A coterie is a family of pairwise-intersecting, mutually non-contained
process sets (quorums). Every protocol in this package is parameterized
by a CoterieAssignment: the fixed quorum Q_i each process uses, plus the
derived reader set R_i = {k | i in Q_k} of processes that report their
state changes to i.

Process ids are plain ints in [1, n].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt


class ConfigError(ValueError):
    """Invalid protocol or coterie configuration."""


@dataclass(frozen=True)
class CoterieAssignment:
    """Per-process quorum assignment with derived reader sets."""

    n: int
    quorums: dict[int, frozenset[int]]
    readers: dict[int, frozenset[int]] = field(default_factory=dict)
    sorted_quorums: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.readers:
            object.__setattr__(self, "readers", derive_readers(self.n, self.quorums))
        object.__setattr__(self, "sorted_quorums",
                           {i: tuple(sorted(q)) for i, q in self.quorums.items()})

    def __deepcopy__(self, memo):
        # Static topology; treated as immutable everywhere.
        return self

    def quorum_size(self) -> int:
        """Maximum quorum size |Q| over all processes."""
        return max(len(q) for q in self.quorums.values())

    def to_lines(self) -> list[str]:
        """Serialize as one line per process: `i: j1 j2 ... jm`, ascending ids."""
        return [
            "%d: %s" % (i, " ".join(str(j) for j in sorted(self.quorums[i])))
            for i in range(1, self.n + 1)
        ]


def derive_readers(n: int, quorums: dict[int, frozenset[int]]) -> dict[int, frozenset[int]]:
    """R_i = set of processes k whose quorum contains i."""
    readers = {i: set() for i in range(1, n + 1)}
    for k, q in quorums.items():
        for i in q:
            readers[i].add(k)
    return {i: frozenset(r) for i, r in readers.items()}


def build_grid_coterie(n: int) -> CoterieAssignment:
    """Row-major r x r grid: Q_i = (row of i) union (column of i), |Q_i| = 2r-1.

    Only perfect squares are accepted; rectangular grids would break the
    exact quorum-size formula.
    """
    if n < 1:
        raise ConfigError("n must be >= 1, got %d" % n)
    r = isqrt(n)
    if r * r != n:
        raise ConfigError("grid coterie requires a perfect square, got n=%d" % n)
    quorums = {}
    for i in range(1, n + 1):
        row, col = (i - 1) // r, (i - 1) % r
        members = {row * r + c + 1 for c in range(r)} | {x * r + col + 1 for x in range(r)}
        quorums[i] = frozenset(members)
    return CoterieAssignment(n, quorums)


def build_majority_coterie(n: int) -> CoterieAssignment:
    """Every quorum is the lexicographically first majority containing P_i.

    Quorum size is floor(n/2)+1, so any two quorums intersect; equal sizes
    plus distinctness give minimality.
    """
    if n < 1:
        raise ConfigError("n must be >= 1, got %d" % n)
    m = n // 2 + 1
    quorums = {}
    for i in range(1, n + 1):
        if i <= m:
            quorums[i] = frozenset(range(1, m + 1))
        else:
            quorums[i] = frozenset(range(1, m)) | {i}
    return CoterieAssignment(n, quorums)


def build_single_quorum_coterie(n: int) -> CoterieAssignment:
    """Degenerate coterie {V}: everyone uses the full process set."""
    if n < 1:
        raise ConfigError("n must be >= 1, got %d" % n)
    v = frozenset(range(1, n + 1))
    return CoterieAssignment(n, {i: v for i in range(1, n + 1)})


BUILDERS = {
    "grid": build_grid_coterie,
    "majority": build_majority_coterie,
    "single": build_single_quorum_coterie,
}


def verify_coterie(assignment: CoterieAssignment) -> list[str]:
    """Brute-force check of the two coterie axioms over the distinct quorum set.

    Returns a list of violation descriptions; empty means the assignment is
    a valid coterie. Violations are data, not errors.
    """
    violations = []
    v = set(range(1, assignment.n + 1))
    for i in range(1, assignment.n + 1):
        q = assignment.quorums.get(i)
        if not q:
            violations.append("process %d has an empty or missing quorum" % i)
        elif not q <= v:
            violations.append("quorum of process %d contains ids outside [1, %d]" % (i, assignment.n))
    distinct = sorted(set(assignment.quorums.values()), key=sorted)
    for a in range(len(distinct)):
        for b in range(a + 1, len(distinct)):
            if not distinct[a] & distinct[b]:
                violations.append(
                    "intersection violation: %s and %s are disjoint"
                    % (sorted(distinct[a]), sorted(distinct[b]))
                )
    for a in distinct:
        for b in distinct:
            if a is not b and a < b:
                violations.append(
                    "minimality violation: %s is a proper subset of %s"
                    % (sorted(a), sorted(b))
                )
    return violations


def coterie_from_lines(lines: list[str]) -> CoterieAssignment:
    """Parse the `i: j1 j2 ... jm` line format produced by to_lines."""
    quorums = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, tail = line.partition(":")
        try:
            i = int(head)
            members = frozenset(int(tok) for tok in tail.split())
        except ValueError as exc:
            raise ConfigError("bad coterie line %r" % line) from exc
        if i in quorums:
            raise ConfigError("duplicate assignment for process %d" % i)
        quorums[i] = members
    if not quorums:
        raise ConfigError("empty coterie file")
    n = len(quorums)
    if sorted(quorums) != list(range(1, n + 1)):
        raise ConfigError("coterie file must cover processes 1..n contiguously")
    assignment = CoterieAssignment(n, quorums)
    problems = verify_coterie(assignment)
    if problems:
        raise ConfigError("invalid coterie: " + "; ".join(problems))
    return assignment
