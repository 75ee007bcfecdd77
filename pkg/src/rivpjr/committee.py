"""PJR+ committee selection with few queries per voter.

The pipeline guesses a committee from marked points spread over each
segment, resolves every voter on a small probe set, and keeps the guess only
if the elicited information rules out every potential PJR+ violation.
Otherwise it elicits full ballots and runs the Method of Equal Shares.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .elicit import RESOLVED_EMPTY, ResolveOutcome, elicit_full, resolve, segment_search
from .model import LEFT, RIGHT, CandidateSet, ModelError, RivModel, neighbor
from .oracle import VoterOracle, query_stats
from .verify import Election

GUESSED = "guessed"
FALLBACK = "fallback"

PROBE_DENSITY = 15


def seat_counts(model: RivModel, k: int) -> dict[int, int]:
    """k_t = floor(p_t * k); products within 1e-9 of an integer snap to it."""
    out = {}
    for s in model.segments:
        x = s.p * k
        r = round(x)
        out[s.index] = int(r) if abs(x - r) < 1e-9 else math.floor(x)
    return out


def marked_points(t: int, k_t: int) -> list[float]:
    return [t + (2 * xi - 1) / (2 * (k_t + 2)) for xi in range(2, k_t + 2)]


@dataclass
class GuessArtifacts:
    k: int
    W_hat: list[float]
    slices: dict[int, list[float]]
    seats: dict[int, int]
    marked: dict[int, list[float]]
    probe_sets: dict[int, list[float]] = field(default_factory=dict)

    def interior_bounds(self, t: int) -> tuple[float, float]:
        """Open interval whose candidates form K_t."""
        h = 3 / (2 * (self.seats[t] + 2))
        return t + h, t + 1 - h

    def in_interior(self, c: float, t: int) -> bool:
        lo, hi = self.interior_bounds(t)
        return lo < c < hi


def build_guess(model: RivModel, C: CandidateSet, k: int) -> GuessArtifacts:
    """Greedy marked-point committee; argmin ties go to the leftmost candidate."""
    if not model.is_uniform:
        raise ModelError("uniform_required", "uniformize the model before guessing a committee")
    if k < 1:
        raise ValueError("k must be positive")
    seats = seat_counts(model, k)
    slices, marked = {}, {}
    for t in range(1, model.sigma + 1):
        Ct = np.asarray(C.in_segment(t))
        marks = marked_points(t, seats[t])
        marked[t] = marks
        taken = np.zeros(Ct.size, dtype=bool)
        for mp in marks:
            if taken.all():
                break
            dist = np.where(taken, np.inf, np.abs(Ct - mp))
            taken[int(np.argmin(dist))] = True
        slices[t] = Ct[taken].tolist()
    W_hat = sorted(w for s in slices.values() for w in s)
    guess = GuessArtifacts(k, W_hat, slices, seats, marked)
    for t in range(1, model.sigma + 1):
        guess.probe_sets[t] = probe_set(guess, C, k, t)
    return guess


def probe_set(guess: GuessArtifacts, C: CandidateSet, k: int, t: int) -> list[float]:
    """Guess slice of ``t`` plus the candidates adjacent to a 1/(15k) grid."""
    Ct = np.asarray(C.in_segment(t))
    out = set(guess.slices[t])
    if Ct.size:
        grid = t + np.arange(1, PROBE_DENSITY * k + 1) / (PROBE_DENSITY * k)
        li = np.searchsorted(Ct, grid, side="right") - 1
        ri = np.searchsorted(Ct, grid, side="left")
        out.update(Ct[li[li >= 0]].tolist())
        out.update(Ct[ri[ri < Ct.size]].tolist())
    return sorted(out)


# possibility test ------------------------------------------------------------


def _phi(oracle: VoterOracle) -> tuple[float, float, float, float]:
    model = oracle.context.model
    acc, rej = oracle.approved_points, oracle.disapproved_points
    if not acc:
        raise ValueError("poss needs a voter with at least one approved point query")
    phi2, phi3 = acc[0], acc[-1]
    phi1, _ = neighbor(phi2, rej, LEFT, model)
    phi4, _ = neighbor(phi3, rej, RIGHT, model)
    return phi1, phi2, phi3, phi4


def poss(oracle: VoterOracle, c: float, S: Sequence[float]) -> bool:
    """Could the voter, given its dialogue, approve ``c`` and nothing in ``S``?"""
    S = sorted(S)
    i = bisect_left(S, c)
    if i < len(S) and S[i] == c:
        return False
    phi1, phi2, phi3, phi4 = _phi(oracle)
    model = oracle.context.model
    cl, _ = neighbor(c, S, LEFT, model)
    cr, _ = neighbor(c, S, RIGHT, model)
    # (phi1, phi2] meets (cl, c]  and  [phi3, phi4) meets [c, cr)
    return max(phi1, cl) < min(phi2, c) and max(phi3, c) < min(phi4, cr)


@dataclass
class VoterEvidence:
    """Per-voter summary of the dialogue, columnar over the electorate."""

    segment: np.ndarray
    has_point: np.ndarray
    certified: np.ndarray
    phi: np.ndarray  # shape (n, 4); NaN where has_point is False

    @property
    def n(self) -> int:
        return int(self.segment.size)

    @classmethod
    def collect(cls, oracles: Sequence[VoterOracle], outcomes: Sequence[ResolveOutcome]) -> "VoterEvidence":
        n = len(oracles)
        seg = np.zeros(n, dtype=np.int64)
        has = np.zeros(n, dtype=bool)
        cert = np.zeros(n, dtype=bool)
        phi = np.full((n, 4), np.nan)
        for v, (o, out) in enumerate(zip(oracles, outcomes)):
            seg[v] = out.segment or 0
            if o.approved_points:
                has[v] = True
                phi[v] = _phi(o)
            elif out.status == RESOLVED_EMPTY:
                cert[v] = True
        return cls(seg, has, cert, phi)


@dataclass
class ValidationTally:
    """Counters of the validation pass.

    ``s[ell-1, i, j]`` is the count for the i-th candidate of ``candidates``
    (the unelected ones, ascending); entries with ``j >= ell`` are -1.
    """

    n: int
    k: int
    u: int
    candidates: list[float]
    s: np.ndarray
    verdict: bool
    first_failure: tuple[int, float, int] | None

    def tally(self, ell: int, c: float, j: int) -> int:
        return int(self.s[ell - 1, self.candidates.index(c), j])

    def max_ratio(self) -> tuple[float, tuple[int, float, int] | None]:
        """Largest (s + u) / (n ell / k) over all triples, with its argmax."""
        if not self.candidates:
            return 0.0, None
        ells = np.arange(1, self.k + 1)[:, None, None]
        ratio = np.where(self.s >= 0, (self.s + self.u) * self.k / (self.n * ells), -np.inf)
        idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        return float(ratio[idx]), (int(idx[0]) + 1, self.candidates[idx[1]], int(idx[2]))

    def summary(self) -> dict:
        ratio, arg = self.max_ratio()
        valid = self.s[self.s >= 0]
        return {
            "verdict": self.verdict,
            "u": self.u,
            "max_s": int(valid.max()) if valid.size else 0,
            "max_ratio": ratio,
            "argmax": list(arg) if arg else None,
            "first_failure": list(self.first_failure) if self.first_failure else None,
        }


def validate(guess: GuessArtifacts, evidence: VoterEvidence, C: CandidateSet, k: int,
             n: int | None = None) -> ValidationTally:
    """Decide whether the elicited dialogues certify the guess as PJR+.

    For a fixed unelected ``c`` a voter counts towards ``s[ell, c, j]`` exactly
    when ``j >= gl`` and ``ell - 1 - j >= gr``, where ``gl`` (``gr``) is the
    number of guess members between ``c`` and the voter's outermost approved
    point on the left (right).  The counts for all (ell, j) are therefore a
    2-D cumulative sum of a (gl, gr) histogram.
    """
    n = evidence.n if n is None else n
    W = guess.W_hat
    Wset = set(W)
    model = C.model
    u = int(np.count_nonzero(~evidence.has_point & ~evidence.certified))
    others = [c for c in C if c not in Wset]
    s = np.full((k, len(others), k), -1, dtype=np.int64)

    by_seg = {}
    for t in range(1, model.sigma + 1):
        sel = evidence.has_point & (evidence.segment == t)
        by_seg[t] = evidence.phi[sel]

    for i, c in enumerate(others):
        t = int(C.segment[C.index_of(c)])
        Wt = guess.slices[t]
        rho_t = bisect_left(Wt, c)
        phi = by_seg[t]
        live = phi[(phi[:, 0] < c) & (c < phi[:, 3])]
        gl = rho_t - np.searchsorted(Wt[:rho_t], live[:, 1], side="left")
        gr = np.searchsorted(Wt[rho_t:], live[:, 2], side="right")
        hist = np.zeros((k + 1, k + 1), dtype=np.int64)
        np.add.at(hist, (np.minimum(gl, k), np.minimum(gr, k)), 1)
        cum = hist.cumsum(0).cumsum(1)
        for ell in range(1, k + 1):
            j = np.arange(ell)
            s[ell - 1, i, :ell] = cum[j, ell - 1 - j]

    ells = np.arange(1, k + 1)[:, None, None]
    fail = (s >= 0) & ((s + u) * k >= n * ells)
    first = None
    if fail.any():
        ell_i, c_i, j = (int(x) for x in np.argwhere(fail)[0])
        first = (ell_i + 1, others[c_i], j)
    return ValidationTally(n, k, u, others, s, first is None, first)


# Method of Equal Shares ------------------------------------------------------------


def mes(election: Election, k: int | None = None) -> list[float]:
    """Method of Equal Shares for approval ballots (exact rational arithmetic).

    Each voter starts with budget k/n and each candidate costs 1.  Voters with
    identical ballots always hold identical budgets, so they are grouped.
    Ties in the price go to the leftmost candidate.  May return fewer than k.
    """
    k = election.k if k is None else k
    n, m = election.n, election.m
    if n == 0:
        return []
    # range objects hash and compare by content, so CI ballots group directly
    groups = Counter(b if isinstance(b, range) else tuple(b) for b in election.ballots if len(b))
    keys = list(groups)
    weight = [groups[g] for g in keys]
    budget = [Fraction(k, n)] * len(keys)
    supporters: list[list[int]] = [[] for _ in range(m)]
    for g, members in enumerate(keys):
        for c in members:
            supporters[c].append(g)

    chosen: list[int] = []
    taken = [False] * m
    while True:
        best_c, best_rho = None, None
        for c in range(m):
            if taken[c] or not supporters[c]:
                continue
            sup = sorted(supporters[c], key=budget.__getitem__)
            if sum(budget[g] * weight[g] for g in sup) < 1:
                continue
            remaining = Fraction(1)
            w_left = sum(weight[g] for g in sup)
            rho = None
            for g in sup:
                rho = remaining / w_left
                if rho <= budget[g]:
                    break
                remaining -= budget[g] * weight[g]
                w_left -= weight[g]
            if best_rho is None or rho < best_rho:
                best_c, best_rho = c, rho
        if best_c is None:
            break
        for g in supporters[best_c]:
            budget[g] -= min(budget[g], best_rho)
        taken[best_c] = True
        chosen.append(best_c)
    return sorted(election.candidates[c] for c in chosen)


def complete(partial: Sequence[float], candidates: Sequence[float], k: int,
             approval_counts: Sequence[int] | None = None) -> list[float]:
    """Pad ``partial`` to exactly k members.

    Unelected candidates are added by descending approval count, then by
    ascending position.  Without counts the order is by position alone.
    """
    cand = list(candidates)
    if k > len(cand):
        raise ValueError(f"k={k} exceeds the number of candidates ({len(cand)})")
    have = set(partial)
    if len(have) > k:
        raise ValueError(f"partial committee already has {len(have)} > k members")
    counts = [0] * len(cand) if approval_counts is None else list(approval_counts)
    order = sorted((i for i, c in enumerate(cand) if c not in have), key=lambda i: (-counts[i], cand[i]))
    out = set(have)
    for i in order:
        if len(out) == k:
            break
        out.add(cand[i])
    return sorted(out)


# pipeline -------------------------------------------------------------------------


@dataclass
class PipelineResult:
    committee: list[float]
    path: str
    guess: GuessArtifacts
    tally: ValidationTally
    outcomes: list[ResolveOutcome]
    guess_stats: list[dict[str, int]]
    final_stats: list[dict[str, int]]
    elicited: Election | None = None
    full_ballots: list[tuple[float, ...]] | None = None

    def report(self) -> dict:
        totals = [s["total"] for s in self.guess_stats]
        final = [s["total"] for s in self.final_stats]
        return {
            "path": self.path,
            "committee": list(self.committee),
            "guess": list(self.guess.W_hat),
            "validation": self.tally.summary(),
            "queries_guess_stage": _query_summary(totals),
            "queries_final": _query_summary(final),
            "gross_queries_final": _query_summary([s["gross_total"] for s in self.final_stats]),
        }


def _query_summary(totals: Sequence[int]) -> dict:
    if not totals:
        return {"mean": 0.0, "max": 0, "histogram": {}}
    hist = Counter(totals)
    return {
        "mean": float(np.mean(totals)),
        "max": int(max(totals)),
        "histogram": {str(q): hist[q] for q in sorted(hist)},
    }


def pjr_pipeline(model: RivModel, C: CandidateSet, k: int, oracles: Sequence[VoterOracle],
                 redundant_search: bool = True) -> PipelineResult:
    """Find a PJR+ committee of size k by querying the given voters."""
    m = len(C)
    if k > m:
        raise ValueError(f"k={k} exceeds the number of candidates ({m})")
    if not oracles:
        raise ValueError("need at least one voter")
    guess = build_guess(model, C, k)
    segments = list(range(1, model.sigma + 1))
    outcomes = []
    for o in oracles:
        t = segment_search(o, segments)
        Pt = guess.probe_sets[t]
        if Pt:
            outcomes.append(resolve(o, Pt, known_segment=t, redundant_search=redundant_search))
        else:
            # confirmed inside a segment without candidates
            outcomes.append(ResolveOutcome(t, (), RESOLVED_EMPTY, 0, len(o)))
    guess_stats = [query_stats(o) for o in oracles]
    evidence = VoterEvidence.collect(oracles, outcomes)
    tally = validate(guess, evidence, C, k, len(oracles))

    cand = C.as_list()
    if tally.verdict:
        counts = Counter(x for out in outcomes for x in out.approved)
        committee = complete(guess.W_hat, cand, k, [counts[c] for c in cand])
        return PipelineResult(committee, GUESSED, guess, tally, outcomes, guess_stats,
                              [query_stats(o) for o in oracles])

    ballots = [elicit_full(o) for o in oracles]
    index = {c: i for i, c in enumerate(cand)}
    election = Election(
        tuple(cand),
        tuple(range(index[b[0]], index[b[-1]] + 1) if b else range(0) for b in ballots),
        k,
    )
    committee = complete(mes(election), cand, k, election.approval_counts())
    return PipelineResult(committee, FALLBACK, guess, tally, outcomes, guess_stats,
                          [query_stats(o) for o in oracles], election, ballots)
