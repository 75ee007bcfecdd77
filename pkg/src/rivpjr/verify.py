"""Ground-truth proportionality checkers.

``check_pjr_plus_ci`` is exact and fast for candidate-interval elections.
The two brute-force checkers enumerate the axiom quantifiers literally and
serve as oracles on tiny instances.  Every checker returns ``None`` when the
committee passes and a :class:`Witness` otherwise.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

PJR_PLUS = "pjr_plus"
CORE = "core"

MAX_BF_VOTERS = 14
MAX_CORE_CANDIDATES = 16
MAX_CORE_VOTERS = 20


class ElectionError(ValueError):
    pass


class InstanceTooLarge(ElectionError):
    pass


@dataclass(frozen=True)
class Election:
    """Approval election.

    Ballots are sorted sequences of candidate indices; candidate-interval
    ballots are stored as ``range`` objects so large electorates stay cheap.
    """

    candidates: tuple[float, ...]
    ballots: tuple[Sequence[int], ...]
    k: int

    def __post_init__(self):
        m = len(self.candidates)
        if any(b >= a for a, b in zip(self.candidates[1:], self.candidates)):
            raise ElectionError("candidate positions must be strictly increasing")
        if not 1 <= self.k <= m:
            raise ElectionError(f"need 1 <= k <= m, got k={self.k}, m={m}")
        for v, ballot in enumerate(self.ballots):
            if isinstance(ballot, range):
                ok = ballot.step == 1 and (not ballot or (ballot.start >= 0 and ballot.stop <= m))
            else:
                ok = all(0 <= c < m for c in ballot) and list(ballot) == sorted(set(ballot))
            if not ok:
                raise ElectionError(f"ballot {v} must be sorted distinct indices in [0, {m})")

    @property
    def n(self) -> int:
        return len(self.ballots)

    @property
    def m(self) -> int:
        return len(self.candidates)

    @classmethod
    def from_intervals(cls, candidates: Sequence[float], intervals: Iterable[tuple[float, float]],
                       k: int) -> "Election":
        """Build from voter approval intervals ``[a, b]`` in position space."""
        cand = tuple(float(c) for c in candidates)
        ballots = tuple(range(bisect_left(cand, a), bisect_right(cand, b)) for a, b in intervals)
        return cls(cand, ballots, k)

    @classmethod
    def from_position_ballots(cls, candidates: Sequence[float], ballots: Iterable[Iterable[float]],
                              k: int) -> "Election":
        cand = tuple(float(c) for c in candidates)
        index = {c: i for i, c in enumerate(cand)}
        return cls(cand, tuple(tuple(sorted(index[x] for x in b)) for b in ballots), k)

    def is_ci(self) -> bool:
        return all(isinstance(b, range) or not b or b[-1] - b[0] + 1 == len(b) for b in self.ballots)

    def interval_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """First/last approved index per voter; empty ballots get first > last."""
        first = np.array([b[0] if b else 1 for b in self.ballots], dtype=np.int64)
        last = np.array([b[-1] if b else 0 for b in self.ballots], dtype=np.int64)
        return first, last

    def approval_counts(self) -> np.ndarray:
        if self.is_ci():
            first, last = self.interval_arrays()
            ok = first <= last
            diff = np.zeros(self.m + 1, dtype=np.int64)
            np.add.at(diff, first[ok], 1)
            np.add.at(diff, last[ok] + 1, -1)
            return diff.cumsum()[:-1]
        counts = np.zeros(self.m, dtype=np.int64)
        for b in self.ballots:
            counts[list(b)] += 1
        return counts

    def committee_indices(self, W: Iterable[float]) -> list[int]:
        index = {c: i for i, c in enumerate(self.candidates)}
        try:
            out = sorted(index[float(w)] for w in W)
        except KeyError as exc:
            raise ElectionError(f"committee member {exc.args[0]!r} is not a candidate") from None
        if len(set(out)) != len(out):
            raise ElectionError("committee has repeated members")
        return out

    # serialisation -------------------------------------------------------

    def to_dict(self, ci_native: bool | None = None) -> dict[str, Any]:
        if ci_native is None:
            ci_native = self.is_ci()
        out: dict[str, Any] = {"candidates": list(self.candidates), "k": self.k}
        if ci_native:
            out["ballots_ci"] = [[b[0], b[-1]] if b else None for b in self.ballots]
        else:
            out["ballots"] = [list(b) for b in self.ballots]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Election":
        cand = tuple(float(c) for c in data["candidates"])
        if "ballots_ci" in data:
            ballots = tuple(range(int(p[0]), int(p[1]) + 1) if p else range(0) for p in data["ballots_ci"])
        elif "ballots" in data:
            ballots = tuple(tuple(sorted(int(c) for c in b)) for b in data["ballots"])
        else:
            raise ElectionError("election needs 'ballots_ci' or 'ballots'")
        return cls(cand, ballots, int(data["k"]))


def load_election(path: str | Path) -> Election:
    return Election.from_dict(json.loads(Path(path).read_text()))


def load_committee(path: str | Path) -> list[float]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["committee"]
    return [float(x) for x in data]


@dataclass
class Witness:
    """Certificate of an axiom violation.

    For PJR+ ``candidate`` is the commonly approved unelected candidate; for
    the core ``deviation`` is the blocking set.  Both use candidate indices.
    """

    axiom: str
    ell: int
    group: list[int]
    candidate: int | None = None
    deviation: list[int] = field(default_factory=list)
    window: list[int] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Witness":
        return cls(**data)

    def replay(self, election: Election, W: Iterable[float]) -> bool:
        """Re-check the violation arithmetic against the raw election."""
        Wi = set(election.committee_indices(W))
        n, k = election.n, election.k
        G = self.group
        if not G or len(set(G)) != len(G) or len(G) * k < n * self.ell:
            return False
        if self.axiom == PJR_PLUS:
            c = self.candidate
            if c is None or c in Wi or not all(c in election.ballots[v] for v in G):
                return False
            covered = set().union(*(Wi.intersection(election.ballots[v]) for v in G))
            return len(covered) < self.ell
        if self.axiom == CORE:
            T = set(self.deviation)
            if not T or len(T) > self.ell:
                return False
            return all(
                len(T.intersection(election.ballots[v])) > len(Wi.intersection(election.ballots[v]))
                for v in G
            )
        return False


def _meets_quota(size: int, n: int, ell: int, k: int) -> bool:
    # |G| >= n * ell / k, in exact integer arithmetic
    return size * k >= n * ell


def check_pjr_plus_ci(election: Election, W: Sequence[float]) -> Witness | None:
    """Exact PJR+ check for candidate-interval elections.

    All approvers of an unelected ``c`` have intervals through ``c``, so the
    committee members a violating group can cover form a window of W around
    ``c``.  For every ``ell``, ``c`` and left-offset ``j`` the voters whose
    approved members fit in ``W[rho-j : rho+ell-1-j]`` are counted with a 2-D
    prefix sum over ballot (first, last) pairs.

    The ``|W| = k`` clause is not checked here; ``|W| > k`` is rejected.
    Iteration order (and so the witness) is smallest ell, leftmost c, smallest j.
    """
    if not election.is_ci():
        raise ElectionError("check_pjr_plus_ci needs candidate-interval ballots")
    Wi = election.committee_indices(W)
    n, m, k = election.n, election.m, election.k
    if len(Wi) > k:
        raise ElectionError(f"committee has {len(Wi)} members but k={k}")
    if n == 0:
        return None
    first, last = election.interval_arrays()
    nonempty = first <= last

    # grid[f, l] counts ballots [f, l]; cum gives rectangle sums
    grid = np.zeros((m + 1, m + 1), dtype=np.int64)
    np.add.at(grid, (first[nonempty] + 1, last[nonempty] + 1), 1)
    cum = grid.cumsum(0).cumsum(1)

    def count(f_lo: int, f_hi: int, l_lo: int, l_hi: int) -> int:
        # ballots with f_lo <= first <= f_hi and l_lo <= last <= l_hi
        if f_lo > f_hi or l_lo > l_hi:
            return 0
        return int(cum[f_hi + 1, l_hi + 1] - cum[f_lo, l_hi + 1] - cum[f_hi + 1, l_lo] + cum[f_lo, l_lo])

    in_W = np.zeros(m, dtype=bool)
    in_W[Wi] = True
    for ell in range(1, k + 1):
        for c in range(m):
            if in_W[c]:
                continue
            rho = bisect_left(Wi, c)
            for j in range(ell):
                left = rho - j - 1
                right = rho + ell - 1 - j
                f_lo = Wi[left] + 1 if left >= 0 else 0
                l_hi = Wi[right] - 1 if right < len(Wi) else m - 1
                size = count(f_lo, c, c, l_hi)
                if size and _meets_quota(size, n, ell, k):
                    group = np.flatnonzero(
                        nonempty & (first >= f_lo) & (first <= c) & (last >= c) & (last <= l_hi)
                    ).tolist()
                    window = Wi[max(0, rho - j):right]
                    return Witness(PJR_PLUS, ell, group, candidate=c, window=list(window))
    return None


def check_pjr_plus_bruteforce(election: Election, W: Sequence[float]) -> Witness | None:
    """Literal PJR+ check over every voter subset (n <= 14)."""
    n, m, k = election.n, election.m, election.k
    if n > MAX_BF_VOTERS:
        raise InstanceTooLarge(f"brute-force PJR+ supports n <= {MAX_BF_VOTERS}, got {n}")
    Wi = set(election.committee_indices(W))
    if len(Wi) > k:
        raise ElectionError(f"committee has {len(Wi)} members but k={k}")
    ballots = [set(b) for b in election.ballots]
    all_c = set(range(m))
    for ell in range(1, k + 1):
        for mask in range(1, 1 << n):
            G = [v for v in range(n) if mask >> v & 1]
            if not _meets_quota(len(G), n, ell, k):
                continue
            common = all_c.intersection(*(ballots[v] for v in G)) - Wi
            if not common:
                continue
            covered = set().union(*(ballots[v] & Wi for v in G))
            if len(covered) < ell:
                return Witness(PJR_PLUS, ell, G, candidate=min(common))
    return None


def check_core_bruteforce(election: Election, W: Sequence[float]) -> Witness | None:
    """Literal core check over every deviation ``T`` with ``|T| <= k``."""
    n, m, k = election.n, election.m, election.k
    if m > MAX_CORE_CANDIDATES or n > MAX_CORE_VOTERS:
        raise InstanceTooLarge(
            f"brute-force core supports m <= {MAX_CORE_CANDIDATES}, n <= {MAX_CORE_VOTERS}"
        )
    Wi = set(election.committee_indices(W))
    ballots = [set(b) for b in election.ballots]
    have = [len(b & Wi) for b in ballots]
    for size in range(1, k + 1):
        for T in combinations(range(m), size):
            Ts = set(T)
            G = [v for v in range(n) if len(ballots[v] & Ts) > have[v]]
            if G and _meets_quota(len(G), n, size, k):
                return Witness(CORE, size, G, deviation=list(T))
    return None
