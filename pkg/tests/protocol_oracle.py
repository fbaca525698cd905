"""Independent message-count oracle.

Enumerates, from the protocol rules alone (never from the implementation),
the messages one uncontended exit+entry pair generates against a quorum of
size q:

  exit: the process asks q arbiters for the lock (Request) and every
  unvoted arbiter votes (Locked); it polls occupancy (Query) and each
  arbiter answers once (Response1); it detaches itself (Acquire) and each
  arbiter confirms (Ack); it releases the lock (MxRelease).

  entry: the process announces itself (Release, q messages); each arbiter
  pushes at most one Response2, and only if a Query is pending there, so
  the pair total ranges over [8q, 9q].
"""

EXIT_MESSAGES = ("Request", "Locked", "Query", "Response1", "Acquire", "Ack", "MxRelease")
ENTRY_MESSAGES = ("Release",)


def uncontended_exit_counts(q: int) -> dict:
    return {tag: q for tag in EXIT_MESSAGES}


def uncontended_entry_counts(q: int) -> dict:
    counts = {tag: q for tag in ENTRY_MESSAGES}
    counts["Response2"] = (0, q)
    return counts


def uncontended_pair_bounds(q: int) -> tuple:
    """Total messages for one exit+entry pair, mutex included."""
    lo = sum(uncontended_exit_counts(q).values()) + q
    hi = lo + q
    return lo, hi


def contended_pair_cap(q: int) -> int:
    """Worst-case amortized pair total: the mutex may add one Inquire,
    one Relinquish and one re-vote Locked or Failed per arbiter (5q),
    the exit rounds stay at 4q, and entry may trigger a full Response2
    round (2q)."""
    return 11 * q
