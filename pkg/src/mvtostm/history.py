"""Transactional event histories: recording, completion, text round-trip.

A history is a sequence of events, each belonging to one transaction:

    b <tx>              transaction began
    r <tx> <obj> <val>  read returned val
    w <tx> <obj> <val>  write of val was issued
    c <tx>              transaction committed
    a <tx>              transaction aborted

Transaction ids are positive integers; id 0 is reserved for the implicit
initializing transaction that wrote 0 to every object and never appears
as an event. Objects are free-form tokens (typically "x1".."xn" or bare
integers). Within one transaction all reads precede all writes, a begin
(if present) comes first, and nothing follows the single terminal event.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

from .errors import HistoryFormatError

BEGIN = "b"
READ = "r"
WRITE = "w"
COMMIT = "c"
ABORT = "a"

EVENT_KINDS = frozenset((BEGIN, READ, WRITE, COMMIT, ABORT))
TERMINALS = frozenset((COMMIT, ABORT))


@dataclass(frozen=True)
class Event:
    kind: str
    tx: int
    obj: str | None = None
    value: int | None = None
    seq: int = 0

    def line(self) -> str:
        if self.kind in (READ, WRITE):
            return f"{self.kind} {self.tx} {self.obj} {self.value}"
        return f"{self.kind} {self.tx}"


def _resequence(events) -> tuple[Event, ...]:
    return tuple(replace(e, seq=i) for i, e in enumerate(events))


class _WellFormedTracker:
    """Incremental well-formedness state machine, one phase per transaction."""

    START, READS, WRITES, DONE = range(4)

    def __init__(self):
        self._phase: dict[int, int] = {}

    def feed(self, event: Event) -> str | None:
        """Apply one event; return an error message if it breaks the shape."""
        if event.kind not in EVENT_KINDS:
            return f"unknown event kind {event.kind!r}"
        if event.tx < 1:
            return f"transaction id must be positive, got {event.tx}"
        phase = self._phase.get(event.tx, self.START)
        if phase == self.DONE:
            return f"event after terminal of transaction {event.tx}"
        if event.kind == BEGIN:
            if phase != self.START:
                return f"begin is not the first event of transaction {event.tx}"
            self._phase[event.tx] = self.READS
        elif event.kind == READ:
            if phase == self.WRITES:
                return f"read after write in transaction {event.tx}"
            self._phase[event.tx] = self.READS
        elif event.kind == WRITE:
            self._phase[event.tx] = self.WRITES
        else:
            self._phase[event.tx] = self.DONE
        return None

    def live(self) -> set[int]:
        return {tx for tx, ph in self._phase.items() if ph != self.DONE}


def well_formedness_violation(events) -> tuple[int, str] | None:
    """Index and message of the first shape-breaking event, or None."""
    tracker = _WellFormedTracker()
    for i, event in enumerate(events):
        msg = tracker.feed(event)
        if msg is not None:
            return i, msg
    return None


@dataclass(frozen=True)
class History:
    events: tuple[Event, ...] = ()

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def txns(self) -> set[int]:
        return {e.tx for e in self.events}

    def committed(self) -> set[int]:
        return {e.tx for e in self.events if e.kind == COMMIT}

    def aborted(self) -> set[int]:
        return {e.tx for e in self.events if e.kind == ABORT}

    def incomplete(self) -> set[int]:
        return self.txns() - self.committed() - self.aborted()

    def events_of(self, tx: int) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.tx == tx)

    def objects(self) -> set[str]:
        return {e.obj for e in self.events if e.obj is not None}

    def complete(self) -> "History":
        """Append an abort immediately after the last event of each live
        transaction; already-terminated transactions are untouched."""
        live = self.incomplete()
        if not live:
            return self
        last = {}
        for i, e in enumerate(self.events):
            if e.tx in live:
                last[e.tx] = i
        out: list[Event] = []
        for i, e in enumerate(self.events):
            out.append(e)
            if e.tx in live and last[e.tx] == i:
                out.append(Event(ABORT, e.tx))
        return History(_resequence(out))

    def serialize(self) -> str:
        if not self.events:
            return ""
        return "\n".join(e.line() for e in self.events) + "\n"


def parse(text: str) -> History:
    """Parse the line format back into a History.

    Rejects malformed lines and histories that are not well formed,
    always naming the offending line.
    """
    events: list[Event] = []
    lines: list[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind not in EVENT_KINDS:
            raise HistoryFormatError(line_no, f"unknown event kind {kind!r}")
        want = 4 if kind in (READ, WRITE) else 2
        if len(tokens) != want:
            raise HistoryFormatError(
                line_no, f"expected {want} fields for {kind!r}, got {len(tokens)}"
            )
        try:
            tx = int(tokens[1], 10)
        except ValueError:
            raise HistoryFormatError(line_no, f"bad transaction id {tokens[1]!r}") from None
        if tx < 1:
            raise HistoryFormatError(line_no, f"transaction id must be positive, got {tx}")
        obj = value = None
        if kind in (READ, WRITE):
            obj = tokens[2]
            try:
                value = int(tokens[3], 10)
            except ValueError:
                raise HistoryFormatError(line_no, f"bad value {tokens[3]!r}") from None
        events.append(Event(kind, tx, obj, value, seq=len(events)))
        lines.append(line_no)
    bad = well_formedness_violation(events)
    if bad is not None:
        idx, msg = bad
        raise HistoryFormatError(lines[idx], msg)
    return History(tuple(events))


@dataclass(frozen=True)
class VersionNote:
    """Side-log entry for one version-list insertion or deletion.

    after_seq is the index of the last history event recorded before the
    change; entries at equal positions are ordered by their own index in
    the log.
    """

    action: str  # "insert" | "delete"
    obj: str
    ts: int
    after_seq: int


class Recorder:
    """Collects events at their linearization points.

    Appends are serialized internally, so callers may invoke it while
    holding object locks. Shape violations are flagged rather than
    raised: a correct caller never produces one, and raising inside a
    critical section would poison unrelated transactions.
    """

    def __init__(self, object_name=str):
        self._guard = threading.Lock()
        self._events: list[Event] = []
        self._notes: list[VersionNote] = []
        self._tracker = _WellFormedTracker()
        self._object_name = object_name
        self.invalid_reason: str | None = None

    def on_event(self, kind: str, tx: int, obj=None, value=None) -> None:
        name = self._object_name(obj) if obj is not None else None
        with self._guard:
            event = Event(kind, tx, name, value, seq=len(self._events))
            msg = self._tracker.feed(event)
            if msg is not None and self.invalid_reason is None:
                self.invalid_reason = msg
            self._events.append(event)

    def on_version_insert(self, obj, ts: int) -> None:
        self._note("insert", obj, ts)

    def on_version_delete(self, obj, ts: int) -> None:
        self._note("delete", obj, ts)

    def _note(self, action: str, obj, ts: int) -> None:
        name = self._object_name(obj)
        with self._guard:
            self._notes.append(VersionNote(action, name, ts, len(self._events) - 1))

    def history(self) -> History:
        with self._guard:
            return History(tuple(self._events))

    def version_notes(self) -> list[VersionNote]:
        with self._guard:
            return list(self._notes)
