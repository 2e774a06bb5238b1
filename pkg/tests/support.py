"""Shared test material: corpus histories, generators, and independent oracles.

The oracles here deliberately reimplement the checked properties from
their definitions (linear scans, replays, exhaustive searches) without
touching the package's graph machinery, so that agreement between the
two is evidence and not circularity.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import replace

from mvtostm.history import (
    ABORT,
    BEGIN,
    COMMIT,
    READ,
    TERMINALS,
    WRITE,
    Event,
    History,
    VersionNote,
    _resequence,
)

# Printed by conftest's terminal summary hook after the run.
ACCEPTANCE_LINES: list[str] = []


# ------------------------------------------------------------------- corpus

# Reference history: three committed transactions and one live reader
# over objects x, y, z. T1 and T2 exhibit a read/write crossover on x and
# y (each reads the initial value of an object the other committed), so
# no serialization can satisfy both.
REFERENCE_TEXT = """\
r 1 x 0
r 2 x 0
r 1 y 0
r 3 z 0
w 1 x 5
w 3 y 15
w 2 y 10
w 1 z 10
c 1
c 2
r 4 x 5
r 4 y 10
w 3 z 15
c 3
r 4 z 10
"""

# The version order this history is conventionally paired with.
REFERENCE_ORDER = {"x": (0, 1), "y": (0, 2, 3), "z": (0, 1, 3)}

# The same schedule as a replay script (begins made explicit, commits
# attempted where the history shows them).
REFERENCE_SCRIPT = """\
objects x y z
step 1 b
step 1 r x
step 2 b
step 2 r x
step 1 r y
step 3 b
step 3 r z
step 1 w x 5
step 3 w y 15
step 2 w y 10
step 1 w z 10
step 1 c
step 2 c
step 4 b
step 4 r x
step 4 r y
step 3 w z 15
step 3 c
step 4 r z
"""

# What the STM actually records when that schedule is replayed: the
# commit rule rejects T1 (T2 already read x from the initial version)
# and T3 (T4 already read y from T2), so T4 sees the initial x and z.
REFERENCE_REPLAYED = """\
b 1
r 1 x 0
b 2
r 2 x 0
r 1 y 0
b 3
r 3 z 0
w 1 x 5
w 3 y 15
w 2 y 10
w 1 z 10
a 1
c 2
b 4
r 4 x 0
r 4 y 10
w 3 z 15
a 3
r 4 z 0
"""

# Minimal read/write crossover: not opaque under any version order.
WRITE_SKEW_TEXT = """\
r 1 x 0
r 2 y 0
w 1 y 1001
w 2 x 2001
c 1
c 2
"""

# An aborted transaction whose two reads straddle another transaction's
# commit; its own reads rule out every serialization even though only
# one transaction committed.
ABORTED_READER_TEXT = """\
r 1 x 0
w 2 x 5001
w 2 y 5002
c 2
r 1 y 5002
a 1
"""


# --------------------------------------------------------------- generators


def random_well_formed_history(seed: int) -> History:
    """Arbitrary well-formed history for round-trip testing.

    Shapes vary: optional begins, read-only and write-only transactions,
    live transactions, negative values, gaps in transaction ids.
    """
    rng = random.Random(f"roundtrip/{seed}")
    objects = ["x", "y", "z9", "big_obj"][: rng.randint(1, 4)]
    tx_ids = sorted(rng.sample(range(1, 30), rng.randint(1, 6)))
    per_tx: list[list[Event]] = []
    for tx in tx_ids:
        events: list[Event] = []
        if rng.random() < 0.7:
            events.append(Event(BEGIN, tx))
        for _ in range(rng.randint(0, 3)):
            events.append(
                Event(READ, tx, rng.choice(objects), rng.randint(-50, 50))
            )
        for _ in range(rng.randint(0, 3)):
            events.append(
                Event(WRITE, tx, rng.choice(objects), rng.randint(-50, 50))
            )
        if rng.random() < 0.8:
            events.append(Event(rng.choice((COMMIT, ABORT)), tx))
        if not events:
            events.append(Event(COMMIT, tx))
        per_tx.append(events)
    merged: list[Event] = []
    while per_tx:
        lane = rng.randrange(len(per_tx))
        merged.append(per_tx[lane].pop(0))
        if not per_tx[lane]:
            per_tx.pop(lane)
    return History(_resequence(merged))


def random_legal_tseq(seed: int) -> History:
    """Random t-sequential history whose reads are all legal by
    construction; written values are unique per object and nonzero."""
    rng = random.Random(f"tseq/{seed}")
    objects = ["x", "y", "z"][: rng.randint(1, 3)]
    state = {obj: 0 for obj in objects}
    counters = {obj: 0 for obj in objects}
    events: list[Event] = []
    n_txs = rng.randint(1, 6)
    for tx in range(1, n_txs + 1):
        if rng.random() < 0.7:
            events.append(Event(BEGIN, tx))
        for _ in range(rng.randint(0, 3)):
            obj = rng.choice(objects)
            events.append(Event(READ, tx, obj, state[obj]))
        staged: dict[str, int] = {}
        for _ in range(rng.randint(0, 2)):
            obj = rng.choice(objects)
            counters[obj] += 1
            staged[obj] = counters[obj]
            events.append(Event(WRITE, tx, obj, staged[obj]))
        last = tx == n_txs
        roll = rng.random()
        if last and roll < 0.15:
            pass  # leave the final transaction live
        elif roll < 0.85:
            events.append(Event(COMMIT, tx))
            state.update(staged)
        else:
            events.append(Event(ABORT, tx))
    return History(_resequence(events))


def mutate_illegal(seed: int, history: History) -> History | None:
    """Corrupt one read so the history stops being legal, or None when
    there is nothing to corrupt."""
    rng = random.Random(f"mutate/{seed}")
    reads = [i for i, e in enumerate(history.events) if e.kind == READ]
    if not reads:
        return None
    target = rng.choice(reads)
    events = list(history.events)
    bad = replace(
        events[target], value=events[target].value + 1 + rng.randint(0, 3)
    )
    events[target] = bad
    return History(_resequence(events))


def shuffle_preserving_tx_order(seed: int, history: History) -> History:
    """Random permutation of the events that keeps each transaction's own
    event order (a different interleaving of the same transactions)."""
    rng = random.Random(f"shuffle/{seed}")
    lanes: dict[int, list[Event]] = {}
    for e in history.events:
        lanes.setdefault(e.tx, []).append(e)
    pending = list(lanes.values())
    merged: list[Event] = []
    while pending:
        lane = rng.randrange(len(pending))
        merged.append(pending[lane].pop(0))
        if not pending[lane]:
            pending.pop(lane)
    return History(_resequence(merged))


# ------------------------------------------------------------------ oracles


def _final_committed_writes(history: History) -> dict[str, dict[int, int]]:
    committed = {e.tx for e in history.events if e.kind == COMMIT}
    writes: dict[str, dict[int, int]] = {}
    for e in history.events:
        if e.kind == WRITE and e.tx in committed:
            writes.setdefault(e.obj, {})[e.tx] = e.value
    return writes


def oracle_read_mismatches(history: History) -> list[Event]:
    """Reads that do not return the value of the newest transaction that
    committed before the read (in recorded order) with an id below the
    reader's; the initial value 0 stands in when there is none.

    A repeated read of the same object must return whatever the first
    read returned, even if a newer qualifying version was committed in
    between: one transaction observing two values of one object could
    never be serialized at a single point.

    This replays the recorded order directly and is the ground truth for
    histories produced by the STM, where version installation and event
    recording happen under the same locks.
    """
    committed_values: dict[str, dict[int, int]] = {}
    staged: dict[int, dict[str, int]] = {}
    pinned: dict[tuple[int, str], int] = {}
    mismatches: list[Event] = []
    for e in history.events:
        if e.kind == WRITE:
            staged.setdefault(e.tx, {})[e.obj] = e.value
        elif e.kind == COMMIT:
            for obj, value in staged.pop(e.tx, {}).items():
                committed_values.setdefault(obj, {})[e.tx] = value
        elif e.kind == READ:
            key = (e.tx, e.obj)
            if key in pinned:
                expected = pinned[key]
            else:
                writers = committed_values.get(e.obj, {})
                older = [j for j in writers if j < e.tx]
                expected = writers[max(older)] if older else 0
                pinned[key] = expected
            if e.value != expected:
                mismatches.append(e)
    return mismatches


def oracle_write_rule_violations(
    history: History,
) -> list[tuple[Event, int, int]]:
    """Reads-from pairs broken by an intervening committed writer.

    For each read r_k(obj) that took its value from committed writer j,
    no transaction i with j < i < k may have committed a write to obj
    anywhere in the history; if one did, either the read or that commit
    should not have happened. Returns (read event, j, i) triples.
    """
    writes = _final_committed_writes(history)
    violations = []
    for e in history.events:
        if e.kind != READ:
            continue
        by_writer = writes.get(e.obj, {})
        sources = [j for j, v in by_writer.items() if v == e.value]
        if e.value == 0 and not sources:
            sources = [0]
        if len(sources) != 1:
            continue  # unresolvable read: not this oracle's concern
        j = sources[0]
        for i in by_writer:
            if j < i < e.tx:
                violations.append((e, j, i))
    return violations


def oracle_gc_violations(
    history: History, notes: list[VersionNote] | tuple[VersionNote, ...]
) -> list[tuple[VersionNote, int]]:
    """Deletions that removed some live transaction's read target.

    Replays the event stream and the version-change log in their
    recorded interleaving, tracking which versions exist per object and
    which transactions are live (begun, no terminal yet). At each
    deletion, a live transaction whose newest-older version is exactly
    the deleted one proves the deletion premature. A live transaction
    that already installed its own version on the object is exempt: its
    read phase is over (version installation happens at commit, after
    all reads), so nothing it will ever do can target the deleted tuple.
    Returns (note, transaction) pairs.
    """
    by_position: dict[int, list[VersionNote]] = {}
    for note in notes:
        by_position.setdefault(note.after_seq, []).append(note)
    versions: dict[str, set[int]] = {}
    live: set[int] = set()
    violations: list[tuple[VersionNote, int]] = []

    def apply_notes(pos: int) -> None:
        for note in by_position.get(pos, ()):
            existing = versions.setdefault(note.obj, {0})
            if note.action == "insert":
                existing.add(note.ts)
                continue
            for l in live:
                if l in existing:
                    continue
                older = [s for s in existing if s < l]
                if older and max(older) == note.ts:
                    violations.append((note, l))
            existing.discard(note.ts)

    apply_notes(-1)
    for i, e in enumerate(history.events):
        if e.kind == BEGIN:
            live.add(e.tx)
        elif e.kind in TERMINALS:
            live.discard(e.tx)
        apply_notes(i)
    return violations


def _legal_as_blocks(
    blocks: list[tuple[int, tuple[Event, ...]]]
) -> bool:
    """Direct legality walk over transactions laid out back to back."""
    current: dict[str, int] = {}
    for _tx, events in blocks:
        staged: dict[str, int] = {}
        committed = False
        for e in events:
            if e.kind == READ:
                if current.get(e.obj, 0) != e.value:
                    return False
            elif e.kind == WRITE:
                staged[e.obj] = e.value
            elif e.kind == COMMIT:
                committed = True
        if committed:
            current.update(staged)
    return True


def oracle_opaque_by_search(history: History) -> bool:
    """Opacity straight from the definition: some ordering of all
    transactions (live ones completed to aborted) that respects the
    original real-time precedence and reads legally.

    Exhaustive over transaction permutations; suitable for small
    histories only.
    """
    completed = history.complete()
    txns = sorted(completed.txns())
    blocks = {tx: completed.events_of(tx) for tx in txns}
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    terminated: set[int] = set()
    for i, e in enumerate(history.events):
        first.setdefault(e.tx, i)
        last[e.tx] = i
        if e.kind in TERMINALS:
            terminated.add(e.tx)
    rt = {
        (a, b)
        for a in terminated
        for b in first
        if a != b and last[a] < first[b]
    }
    for perm in itertools.permutations(txns):
        position = {tx: i for i, tx in enumerate(perm)}
        if any(position[a] >= position[b] for a, b in rt):
            continue
        if _legal_as_blocks([(tx, blocks[tx]) for tx in perm]):
            return True
    return False


def oracle_acyclic_dfs(vertices, pairs) -> bool:
    """Cycle detection by recursive three-color depth-first search."""
    succ: dict[int, list[int]] = {v: [] for v in vertices}
    for u, v in pairs:
        succ[u].append(v)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: WHITE for v in vertices}

    def visit(v: int) -> bool:
        color[v] = GRAY
        for w in succ[v]:
            if color[w] == GRAY:
                return False
            if color[w] == WHITE and not visit(w):
                return False
        color[v] = BLACK
        return True

    return all(color[v] != WHITE or visit(v) for v in sorted(vertices))
