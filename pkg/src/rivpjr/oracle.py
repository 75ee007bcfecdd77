"""Simulated voters answering Point and Interval queries.

A :class:`VoterOracle` is the only channel to a voter's hidden interval.  It
checks the query grammar, answers with closed-interval semantics, keeps an
append-only dialogue log and counts communication cost.  Repeating an
identical query is answered from the log and is not counted again (the
gross counters still see it).
"""

from __future__ import annotations

import json
from bisect import insort
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .model import CandidateSet, RivModel, VoterInterval

POINT = "point"
INTERVAL = "interval"


class ProtocolViolation(ValueError):
    """A caller asked a query the grammar forbids."""


@dataclass(frozen=True)
class Query:
    kind: str
    positions: tuple[float, ...]
    voter_id: int = 0


@dataclass(frozen=True)
class DialogueEntry:
    query: Query
    answer: bool


class QueryContext:
    """Shared, read-only grammar data: the model and registered candidates."""

    def __init__(self, model: RivModel, candidates: CandidateSet):
        self.model = model
        self.candidates = candidates
        self.candidate_set = frozenset(candidates)
        self.anchor_set = self.candidate_set | frozenset(model.anchors())


class VoterOracle:
    """One simulated voter.  Not safe for concurrent use."""

    __slots__ = ("hidden", "context", "voter_id", "_log", "_violations",
                 "point_count", "interval_count", "gross_point", "gross_interval",
                 "approved_points", "disapproved_points")

    def __init__(self, hidden: VoterInterval, context: QueryContext, voter_id: int = 0):
        self.hidden = hidden
        self.context = context
        self.voter_id = voter_id
        # insertion-ordered: (kind, x, y) -> answer
        self._log: dict[tuple, bool] = {}
        self._violations: list[tuple[str, tuple[float, ...], str]] = []
        self.point_count = 0
        self.interval_count = 0
        self.gross_point = 0
        self.gross_interval = 0
        self.approved_points: list[float] = []
        self.disapproved_points: list[float] = []

    def _reject(self, kind: str, positions: tuple[float, ...], why: str):
        self._violations.append((kind, positions, why))
        raise ProtocolViolation(f"voter {self.voter_id}: {kind} query {positions}: {why}")

    def point(self, x: float) -> bool:
        """Does the voter approve the candidate at ``x``?"""
        self.gross_point += 1
        key = (POINT, x)
        hit = self._log.get(key)
        if hit is not None:
            return hit
        if x not in self.context.candidate_set:
            self._reject(POINT, (x,), "position is not a candidate")
        ans = self.hidden.a <= x <= self.hidden.b
        self._log[key] = ans
        self.point_count += 1
        insort(self.approved_points if ans else self.disapproved_points, x)
        return ans

    def interval(self, x: float, y: float) -> bool:
        """Is the voter's whole approval interval inside ``[x, y]``?"""
        self.gross_interval += 1
        key = (INTERVAL, x, y)
        hit = self._log.get(key)
        if hit is not None:
            return hit
        anchors = self.context.anchor_set
        if x not in anchors or y not in anchors:
            self._reject(INTERVAL, (x, y), "endpoints must be candidates or segment endpoints")
        if not x <= y:
            self._reject(INTERVAL, (x, y), "need x <= y")
        ans = x <= self.hidden.a and self.hidden.b <= y
        self._log[key] = ans
        self.interval_count += 1
        return ans

    # inspection ----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._log)

    @property
    def log(self) -> list[DialogueEntry]:
        return [DialogueEntry(Query(k[0], k[1:], self.voter_id), ans) for k, ans in self._log.items()]

    def raw_log(self) -> list[tuple[tuple, bool]]:
        return list(self._log.items())

    @property
    def violations(self) -> list[tuple[str, tuple[float, ...], str]]:
        return list(self._violations)

    def stats(self) -> dict[str, int]:
        return query_stats(self)


def query_stats(oracle: VoterOracle) -> dict[str, int]:
    """Distinct answered queries by kind, plus gross (cache-inclusive) totals."""
    return {
        "point_count": oracle.point_count,
        "interval_count": oracle.interval_count,
        "total": oracle.point_count + oracle.interval_count,
        "gross_total": oracle.gross_point + oracle.gross_interval,
    }


def make_oracles(voters: Iterable[VoterInterval], context: QueryContext) -> list[VoterOracle]:
    return [VoterOracle(v, context, i) for i, v in enumerate(voters)]


def answer(hidden: VoterInterval, entry_kind: str, positions: Sequence[float]) -> bool:
    """Ground-truth answer, independent of any oracle state."""
    if entry_kind == POINT:
        (x,) = positions
        return hidden.a <= x <= hidden.b
    x, y = positions
    return x <= hidden.a and hidden.b <= y


# line-delimited export -------------------------------------------------------------


def dialogue_records(oracle: VoterOracle) -> Iterator[dict]:
    for seq, (key, ans) in enumerate(oracle._log.items()):
        yield {
            "voter_id": oracle.voter_id,
            "kind": key[0],
            "positions": list(key[1:]),
            "answer": ans,
            "seq": seq,
        }


def write_dialogues(oracles: Iterable[VoterOracle], fh: IO[str], extra: Iterable[dict] = ()) -> None:
    """Write one JSON record per line.  ``extra`` records (e.g. traces) follow."""
    for oracle in oracles:
        for rec in dialogue_records(oracle):
            fh.write(json.dumps(rec) + "\n")
    for rec in extra:
        fh.write(json.dumps(rec) + "\n")


def read_dialogues(source: str | Path | IO[str]) -> dict[int, list[DialogueEntry]]:
    """Parse a dialogue export back into per-voter entry lists (traces skipped)."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return read_dialogues(fh)
    out: dict[int, list[tuple[int, DialogueEntry]]] = {}
    for line in source:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if rec["kind"] not in (POINT, INTERVAL):
            continue
        q = Query(rec["kind"], tuple(float(p) for p in rec["positions"]), int(rec["voter_id"]))
        out.setdefault(q.voter_id, []).append((int(rec["seq"]), DialogueEntry(q, bool(rec["answer"]))))
    return {v: [e for _, e in sorted(items, key=lambda p: p[0])] for v, items in out.items()}


def replay(entries: Sequence[DialogueEntry], hidden: VoterInterval) -> bool:
    """True iff every logged answer is what ``hidden`` would say."""
    return all(answer(hidden, e.query.kind, e.query.positions) == e.answer for e in entries)
