"""Segment search and voter resolution.

``segment_search`` locates a voter's segment with interval queries.
``resolve`` then finds the voter's approvals within a target subset ``P``:
it probes the candidates adjacent to a grid that doubles in resolution each
round, and once any probe is approved it binary-searches both ends.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import LEFT, RIGHT, neighbor
from .oracle import VoterOracle

RESOLVED_NONEMPTY = "resolved_nonempty"
RESOLVED_EMPTY = "resolved_empty_certificate"
RESOLVED_FALLBACK = "resolved_by_fallback"
NO_POINT_APPROVED = "no_point_approved"
SEGMENT_NOT_FOUND = "segment_not_found"


@dataclass
class ResolveOutcome:
    segment: int | None
    approved: tuple[float, ...]
    status: str
    log_start: int = 0
    log_end: int = 0
    round_reached: int | None = None
    probes: list[float] = field(default_factory=list)

    @property
    def certified_empty(self) -> bool:
        return self.status == RESOLVED_EMPTY

    def trace_record(self, voter_id: int) -> dict:
        return {
            "voter_id": voter_id,
            "kind": "trace",
            "status": self.status,
            "segment": self.segment,
            "round": self.round_reached,
            "probes": list(self.probes),
            "approved": list(self.approved),
            "log_span": [self.log_start, self.log_end],
        }


def segment_search(oracle: VoterOracle, T: Sequence[int]) -> int | None:
    """Binary search over segment indices ``T``; ``None`` if the voter is elsewhere."""
    if not T:
        raise ValueError("segment_search needs a non-empty list of segments")
    T = sorted(T)
    model = oracle.context.model
    lower, upper = 0, len(T) - 1
    while upper > lower:
        mid = (upper + lower) // 2
        if oracle.interval(model.segment(T[lower]).z_minus, model.segment(T[mid]).z_plus):
            upper = mid
        else:
            lower = mid + 1
    seg = model.segment(T[lower])
    if oracle.interval(seg.z_minus, seg.z_plus):
        return T[lower]
    return None


def _first_approved(oracle: VoterOracle, xs: Sequence[float]) -> int:
    """Index of the first approved entry of ``xs`` (approvals form a suffix)."""
    lo, hi = 0, len(xs)
    while lo < hi:
        mid = (lo + hi - 1) // 2
        if oracle.point(xs[mid]):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _last_approved(oracle: VoterOracle, xs: Sequence[float]) -> int:
    """Index of the last approved entry of ``xs`` (approvals form a prefix); -1 if none."""
    lo, hi = -1, len(xs) - 1
    while lo < hi:
        mid = (lo + hi + 2) // 2
        if oracle.point(xs[mid]):
            lo = mid
        else:
            hi = mid - 1
    return lo


def _close_in(oracle: VoterOracle, Pt: list[float]) -> tuple[float, ...]:
    """Find min/max of P ∩ A(v) once at least one point query was approved.

    Each binary search only covers the stretch between the extreme approved
    point and the nearest disapproved point beyond it.
    """
    acc, rej = oracle.approved_points, oracle.disapproved_points
    q_lo, q_hi = acc[0], acc[-1]
    i = bisect_left(rej, q_lo) - 1
    d_lo = rej[i] if i >= 0 else -math.inf
    i = bisect_right(rej, q_hi)
    d_hi = rej[i] if i < len(rej) else math.inf

    left = Pt[bisect_right(Pt, d_lo):bisect_left(Pt, q_lo)]
    k = _first_approved(oracle, left)
    alpha = left[k] if k < len(left) else q_lo

    right = Pt[bisect_right(Pt, q_hi):bisect_left(Pt, d_hi)]
    k = _last_approved(oracle, right)
    beta = right[k] if k >= 0 else q_hi

    return tuple(Pt[bisect_left(Pt, alpha):bisect_right(Pt, beta)])


def resolve(oracle: VoterOracle, P: Iterable[float], known_segment: int | None = None,
            redundant_search: bool = True) -> ResolveOutcome:
    """Resolve the voter for candidate subset ``P``.

    With ``known_segment`` set and ``redundant_search`` off, the inner segment
    search is skipped; by default it runs anyway and its queries are absorbed
    by the oracle cache.
    """
    ctx = oracle.context
    model, C = ctx.model, ctx.candidates
    P = sorted(set(P))
    if not P:
        raise ValueError("resolve needs a non-empty candidate subset P")
    start = len(oracle)

    if known_segment is None or redundant_search:
        t = segment_search(oracle, C.segments_hit(P))
        if known_segment is not None and t is not None and t != known_segment:
            raise AssertionError(f"segment search found {t}, caller claimed {known_segment}")
    else:
        t = known_segment
    if t is None:
        return ResolveOutcome(None, (), SEGMENT_NOT_FOUND, start, len(oracle))

    seg = model.segment(t)
    Ct = C.in_segment(t)
    Pt = [x for x in P if seg.z_minus < x < seg.z_plus]
    if not Ct:
        # confirmed inside a segment that holds no candidate
        return ResolveOutcome(t, (), RESOLVED_EMPTY, start, len(oracle))

    probes: list[float] = []
    rounds = math.ceil(math.log2(len(P))) if len(P) > 1 else 0
    for i in range(1, rounds + 1):
        step = seg.length / 2**i
        for j in range(1, 2**i + 1):
            x = seg.z_minus + j * step
            lo, lo_fb = neighbor(x, Ct, LEFT, model, t)
            hi, hi_fb = neighbor(x, Ct, RIGHT, model, t)
            probes.append(x)
            hit = False
            if not lo_fb:
                hit |= oracle.point(lo)
            if not hi_fb:
                hit |= oracle.point(hi)
            if hit:
                approved = _close_in(oracle, Pt)
                return ResolveOutcome(t, approved, RESOLVED_NONEMPTY, start, len(oracle), i, probes)
            if oracle.interval(lo, hi):
                return ResolveOutcome(t, (), RESOLVED_EMPTY, start, len(oracle), i, probes)

    approved = tuple(x for x in Pt if oracle.point(x))
    status = RESOLVED_FALLBACK if approved else NO_POINT_APPROVED
    return ResolveOutcome(t, approved, status, start, len(oracle), rounds + 1, probes)


def elicit_full(oracle: VoterOracle) -> tuple[float, ...]:
    """The voter's full approval set over all candidates."""
    C = oracle.context.candidates
    if len(C) == 0:
        return ()
    return resolve(oracle, C.as_list()).approved
