"""Opacity checking for recorded histories.

A history is opaque when its transactions, including the aborted and the
still-live ones, can be laid out in some sequential order that respects
real time and in which every read returns the latest previously
committed write. The test used here: fix, per object, a total order over
the committed versions, then build a graph with one vertex per
transaction (plus the initializing transaction 0) and three edge
families:

* rt: T_a finished before T_b began (taken from the input history as
  given, not from its completion),
* rf: T_b read a value that T_a committed,
* mv: for each read and each other committed writer of the same object,
  the writer goes before the version that was read, or after the reader.

If the graph is acyclic for some version order, the history is opaque,
and any topological order of the graph expanded transaction by
transaction is a witness serialization. The checker verifies each
witness it emits against independent legality, equivalence, and
real-time checks rather than trusting the construction.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from heapq import heapify, heappop, heappush

from .errors import InvariantViolation, UsageError
from .history import (
    ABORT,
    COMMIT,
    READ,
    TERMINALS,
    WRITE,
    Event,
    History,
    _resequence,
)

RT = "rt"
RF = "rf"
MV = "mv"

T0 = 0

DEFAULT_BUDGET = 10**6

VersionOrder = dict[str, tuple[int, ...]]


# ---------------------------------------------------------------- projections


def committed_writes(history: History) -> dict[str, dict[int, int]]:
    """Final committed value per object, keyed by writer id.

    Transaction 0 appears as a writer of 0 on every object the history
    mentions. A transaction writing the same object twice contributes
    only its last value; earlier values never become a version.
    """
    committed = history.committed()
    writes: dict[str, dict[int, int]] = {obj: {T0: 0} for obj in history.objects()}
    for e in history.events:
        if e.kind == WRITE and e.tx in committed:
            writes[e.obj][e.tx] = e.value
    return writes


def _resolve_writer(writes, obj, value) -> int | None:
    candidates = [w for w, v in writes.get(obj, {T0: 0}).items() if v == value]
    if len(candidates) > 1:
        raise ValueError(
            f"value {value} on object {obj} was committed by transactions "
            f"{sorted(candidates)}; per-object written values must be unique"
        )
    return candidates[0] if candidates else None


def invalid_read(history: History) -> Event | None:
    """First read with no committed-before writer of its value, or None."""
    writes = committed_writes(history)
    commit_pos = {e.tx: i for i, e in enumerate(history.events) if e.kind == COMMIT}
    for i, e in enumerate(history.events):
        if e.kind != READ:
            continue
        writer = _resolve_writer(writes, e.obj, e.value)
        if writer is None:
            return e
        if writer != T0 and commit_pos[writer] > i:
            return e
    return None


def validity(history: History) -> bool:
    """Every read returns a value some transaction committed before it."""
    return invalid_read(history) is None


def real_time_pairs(history: History) -> set[tuple[int, int]]:
    """(a, b) pairs where a terminated before b's first event."""
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    terminated: set[int] = set()
    for i, e in enumerate(history.events):
        first.setdefault(e.tx, i)
        last[e.tx] = i
        if e.kind in TERMINALS:
            terminated.add(e.tx)
    return {
        (a, b)
        for a in terminated
        for b in first
        if a != b and last[a] < first[b]
    }


# ------------------------------------------------------------------ legality


def is_t_sequential(history: History) -> bool:
    """Transactions appear in contiguous blocks, each block but the last
    ending in a terminal event."""
    seen: set[int] = set()
    prev: int | None = None
    last_kind: str | None = None
    for e in history.events:
        if e.tx != prev:
            if e.tx in seen:
                return False
            if prev is not None and last_kind not in TERMINALS:
                return False
            seen.add(e.tx)
            prev = e.tx
        last_kind = e.kind
    return True


def illegal_read(history: History) -> Event | None:
    """First read of a sequential history that does not return the
    latest previously committed write (0 before any commit), or None."""
    if not is_t_sequential(history):
        raise UsageError("legality is defined only for sequential histories")
    current: dict[str, int] = {}
    staged: dict[int, dict[str, int]] = {}
    for e in history.events:
        if e.kind == READ:
            if current.get(e.obj, 0) != e.value:
                return e
        elif e.kind == WRITE:
            staged.setdefault(e.tx, {})[e.obj] = e.value
        elif e.kind == COMMIT:
            current.update(staged.pop(e.tx, {}))
        elif e.kind == ABORT:
            staged.pop(e.tx, None)
    return None


def legality(history: History) -> bool:
    return illegal_read(history) is None


def equivalent(h1: History, h2: History) -> bool:
    """Same events transaction by transaction, order within each kept."""

    def by_tx(h: History):
        per: dict[int, list] = defaultdict(list)
        for e in h.events:
            per[e.tx].append((e.kind, e.obj, e.value))
        return dict(per)

    return by_tx(h1) == by_tx(h2)


# --------------------------------------------------------------------- graph


@dataclass(frozen=True)
class OpacityGraph:
    vertices: frozenset[int]
    edges: frozenset[tuple[int, int, str]]  # (from, to, label)

    def edge_pairs(self) -> set[tuple[int, int]]:
        return {(u, v) for u, v, _ in self.edges}

    def labeled(self, label: str) -> set[tuple[int, int]]:
        return {(u, v) for u, v, lab in self.edges if lab == label}


def _mv_edges(reads, writers_by_obj, positions) -> set[tuple[int, int, str]]:
    """Version-order constraints from each read.

    For read (k, obj, j) and any other committed writer i of obj: if i's
    version is ordered before j's, i must serialize before j; otherwise
    the reader k must serialize before i. The writer that was read and
    the reader itself impose nothing on themselves.
    """
    edges: set[tuple[int, int, str]] = set()
    for k, obj, j in reads:
        pos = positions[obj]
        for i in writers_by_obj[obj]:
            if i == j or i == k:
                continue
            if pos[i] < pos[j]:
                edges.add((i, j, MV))
            else:
                edges.add((k, i, MV))
    return edges


class _Analysis:
    """Per-history state shared across all candidate version orders."""

    def __init__(self, history: History):
        self.history = history
        self.completed = history.complete()
        self.writes = committed_writes(self.completed)
        self.writers_by_obj = {obj: tuple(ws) for obj, ws in self.writes.items()}
        self.vertices = frozenset(self.completed.txns() | {T0})
        self.reads: list[tuple[int, str, int]] = []
        for e in self.completed.events:
            if e.kind == READ:
                writer = _resolve_writer(self.writes, e.obj, e.value)
                if writer is not None:
                    self.reads.append((e.tx, e.obj, writer))
        static: set[tuple[int, int, str]] = set()
        # rt comes from the history as given: a live transaction precedes
        # nothing, even after completion inserts its abort
        for a, b in real_time_pairs(self.history):
            static.add((a, b, RT))
        for t in self.vertices:
            if t != T0:
                static.add((T0, t, RT))
        for k, _obj, j in self.reads:
            if j != k:
                static.add((j, k, RF))
        self.static_edges = frozenset(static)

    def validate_order(self, order: VersionOrder) -> None:
        want = {obj: set(ws) for obj, ws in self.writes.items()}
        if set(order) != set(want):
            raise UsageError(
                f"version order must name exactly the objects {sorted(want)}, "
                f"got {sorted(order)}"
            )
        for obj, seq in order.items():
            if len(seq) != len(want[obj]) or set(seq) != want[obj]:
                raise UsageError(
                    f"version order for {obj} must cover exactly the committed "
                    f"writers {sorted(want[obj])}, got {list(seq)}"
                )

    def graph(self, order: VersionOrder) -> OpacityGraph:
        positions = {
            obj: {w: p for p, w in enumerate(seq)} for obj, seq in order.items()
        }
        edges = set(self.static_edges)
        edges |= _mv_edges(self.reads, self.writers_by_obj, positions)
        return OpacityGraph(self.vertices, frozenset(edges))


def build_graph(history: History, order: VersionOrder) -> OpacityGraph:
    analysis = _Analysis(history)
    analysis.validate_order(order)
    return analysis.graph(order)


def topological_order(graph: OpacityGraph):
    """(order, None) with ties broken by ascending id, or (None, cycle).

    The cycle is an explicit vertex list u1..um with edges u1->u2,
    ..., um->u1, extracted deterministically.
    """
    pairs = graph.edge_pairs()
    succ: dict[int, set[int]] = defaultdict(set)
    pred: dict[int, set[int]] = defaultdict(set)
    for u, v in pairs:
        if u == v:
            return None, [u]
        succ[u].add(v)
        pred[v].add(u)
    indeg = {v: len(pred[v]) for v in graph.vertices}
    heap = [v for v in graph.vertices if indeg[v] == 0]
    heapify(heap)
    out: list[int] = []
    while heap:
        v = heappop(heap)
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heappush(heap, w)
    if len(out) == len(graph.vertices):
        return out, None
    remaining = set(graph.vertices) - set(out)
    return None, _extract_cycle(remaining, pred)


def _extract_cycle(remaining: set[int], pred) -> list[int]:
    # every vertex left after peeling has a predecessor among the leftovers;
    # walking smallest predecessors must close a loop
    start = min(remaining)
    path = [start]
    index = {start: 0}
    cur = start
    while True:
        nxt = min(p for p in pred[cur] if p in remaining)
        if nxt in index:
            tail = path[index[nxt]:]
            return [tail[0]] + tail[:0:-1]
        index[nxt] = len(path)
        path.append(nxt)
        cur = nxt


def is_acyclic(graph: OpacityGraph) -> bool:
    return topological_order(graph)[0] is not None


# ------------------------------------------------------------------ verdicts


@dataclass
class Verdict:
    status: str  # opaque | not_opaque | invalid | undecided
    order: VersionOrder | None = None
    serialization: History | None = None
    cycle: list[int] | None = None
    invalid_read: Event | None = None
    detail: str = ""
    orders_tested: int = 0

    @property
    def opaque(self) -> bool:
        return self.status == "opaque"

    def summary(self) -> str:
        if self.status == "opaque":
            if self.order is not None:
                objects = len(self.order)
                txns = len({t for ts in self.order.values() for t in ts} - {0})
                return (
                    f"opaque: {txns} writer(s), {objects} object(s), "
                    f"{self.orders_tested} order(s) tried"
                )
            return "opaque"
        if self.status == "not_opaque":
            if self.cycle is not None:
                loop = "->".join(str(v) for v in self.cycle + self.cycle[:1])
                return f"not opaque: cycle {loop} ({self.detail})"
            return f"not opaque: {self.detail}"
        if self.status == "invalid":
            return f"not opaque: invalid read {self.invalid_read.line()!r}"
        return f"undecided: {self.detail}"


def timestamp_order(history: History) -> VersionOrder:
    """Per-object version order by ascending creator timestamp."""
    return {
        obj: tuple(sorted(writers))
        for obj, writers in committed_writes(history.complete()).items()
    }


def sequential_order(history: History) -> VersionOrder:
    """Version order induced by a sequential history: writers ordered by
    the position of their transaction, 0 first."""
    if not is_t_sequential(history):
        raise UsageError("sequential order is defined only for sequential histories")
    first: dict[int, int] = {T0: -1}
    for i, e in enumerate(history.events):
        first.setdefault(e.tx, i)
    return {
        obj: tuple(sorted(writers, key=first.__getitem__))
        for obj, writers in committed_writes(history).items()
    }


def serialization_from(completed: History, topo: list[int]) -> History:
    events: list[Event] = []
    for tx in topo:
        if tx == T0:
            continue
        events.extend(completed.events_of(tx))
    return History(_resequence(events))


def _certified_serialization(
    analysis: _Analysis, topo: list[int]
) -> History:
    """Expand a topological order and verify it independently."""
    s = serialization_from(analysis.completed, topo)
    offending = illegal_read(s)
    if offending is not None:
        raise InvariantViolation(
            f"emitted serialization is not legal at {offending.line()!r}"
        )
    if not equivalent(s, analysis.completed):
        raise InvariantViolation("emitted serialization lost or changed events")
    rank = {tx: i for i, tx in enumerate(topo)}
    for a, b in real_time_pairs(analysis.history):
        if rank[a] >= rank[b]:
            raise InvariantViolation(
                f"emitted serialization breaks real-time order {a} before {b}"
            )
    return s


def check_with_order(history: History, order: VersionOrder) -> Verdict:
    """Decide opacity under one fixed version order."""
    bad = invalid_read(history)
    if bad is not None:
        return Verdict(
            "invalid",
            invalid_read=bad,
            detail="a read returns a value no transaction committed before it",
        )
    analysis = _Analysis(history)
    analysis.validate_order(order)
    topo, cycle = topological_order(analysis.graph(order))
    if topo is None:
        return Verdict(
            "not_opaque",
            order=dict(order),
            cycle=cycle,
            detail="under the supplied version order",
            orders_tested=1,
        )
    return Verdict(
        "opaque",
        order=dict(order),
        serialization=_certified_serialization(analysis, topo),
        orders_tested=1,
    )


def check_brute_force(history: History, budget: int = DEFAULT_BUDGET) -> Verdict:
    """Decide opacity by enumerating every version order.

    Never guesses: when the candidate count exceeds the budget the
    verdict is undecided rather than wrong.
    """
    bad = invalid_read(history)
    if bad is not None:
        return Verdict(
            "invalid",
            invalid_read=bad,
            detail="a read returns a value no transaction committed before it",
        )
    analysis = _Analysis(history)
    objs = sorted(analysis.writes)
    total = math.prod(math.factorial(len(analysis.writes[obj])) for obj in objs)
    if total > budget:
        return Verdict(
            "undecided",
            detail=f"{total} candidate version orders exceed budget {budget}",
        )
    tested = 0
    first_cycle: list[int] | None = None
    for combo in itertools.product(
        *(itertools.permutations(sorted(analysis.writes[obj])) for obj in objs)
    ):
        tested += 1
        order = dict(zip(objs, combo))
        topo, cycle = topological_order(analysis.graph(order))
        if topo is not None:
            return Verdict(
                "opaque",
                order=order,
                serialization=_certified_serialization(analysis, topo),
                orders_tested=tested,
            )
        if first_cycle is None:
            first_cycle = cycle
    return Verdict(
        "not_opaque",
        cycle=first_cycle,
        detail=f"no version order yields an acyclic graph ({tested} tried)",
        orders_tested=tested,
    )


def check_auto(history: History, budget: int = DEFAULT_BUDGET) -> Verdict:
    """Timestamp order first; exhaustive search only when that fails."""
    ts = check_with_order(history, timestamp_order(history))
    if ts.status in ("opaque", "invalid"):
        return ts
    return check_brute_force(history, budget)
