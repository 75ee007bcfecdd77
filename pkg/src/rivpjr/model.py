"""Random Interval Voter (RIV) model.

A model is an ordered list of disjoint segments.  A voter picks segment ``t``
with probability ``p_t``, draws two positions from the segment's CDF and
approves every candidate between them.  Segments are indexed from 1.

Uniform models place segment ``t`` on ``[t, t+1]`` with the uniform CDF; every
general model maps onto one through :func:`uniformize`.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

WEIGHT_TOL = 1e-12

LEFT = "left"
RIGHT = "right"


class ModelError(ValueError):
    """A model (or candidate set) violates one of its invariants.

    ``invariant`` is a short stable name, suitable for CLI output and tests.
    """

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class PiecewiseLinearCDF:
    """Strictly increasing piecewise-linear CDF given by a breakpoint table."""

    def __init__(self, xs: Sequence[float], fs: Sequence[float]):
        xs = np.asarray(xs, dtype=float)
        fs = np.asarray(fs, dtype=float)
        if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
            raise ModelError("cdf_shape", "need at least two (x, F) breakpoints")
        if fs[0] != 0.0 or fs[-1] != 1.0:
            raise ModelError("cdf_endpoints", f"F must run from 0 to 1, got {fs[0]} .. {fs[-1]}")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(fs) <= 0):
            raise ModelError("cdf_monotone", "breakpoints must be strictly increasing in x and F")
        self.xs = xs
        self.fs = fs

    @classmethod
    def identity(cls, lo: float, hi: float) -> "PiecewiseLinearCDF":
        return cls([lo, hi], [0.0, 1.0])

    @property
    def lo(self) -> float:
        return float(self.xs[0])

    @property
    def hi(self) -> float:
        return float(self.xs[-1])

    def __call__(self, x):
        return np.interp(x, self.xs, self.fs)

    def inverse(self, u):
        return np.interp(u, self.fs, self.xs)

    def breakpoints(self) -> list[list[float]]:
        return [[float(x), float(f)] for x, f in zip(self.xs, self.fs)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PiecewiseLinearCDF)
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.fs, other.fs)
        )

    def __repr__(self) -> str:
        return f"PiecewiseLinearCDF({self.breakpoints()!r})"


@dataclass(frozen=True)
class Segment:
    index: int
    z_minus: float
    z_plus: float
    p: float
    cdf: PiecewiseLinearCDF = field(compare=False)

    @property
    def length(self) -> float:
        return self.z_plus - self.z_minus

    def contains(self, x: float) -> bool:
        """Closed membership; voter endpoints may sit on the boundary."""
        return self.z_minus <= x <= self.z_plus


@dataclass(frozen=True)
class VoterInterval:
    segment: int
    a: float
    b: float

    def approves(self, x: float) -> bool:
        return self.a <= x <= self.b


@dataclass(frozen=True)
class VoterSample:
    """Column-oriented batch of sampled voters."""

    segment: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(self.segment.size)

    def __getitem__(self, i: int) -> VoterInterval:
        return VoterInterval(int(self.segment[i]), float(self.a[i]), float(self.b[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


class RivModel:
    """An RIV model; either ``uniform`` or ``general``.

    Use :meth:`uniform_from_weights` or :meth:`general` rather than the raw
    constructor, which trusts its input apart from the invariant checks.
    """

    def __init__(self, segments: Sequence[Segment], kind: str):
        if kind not in ("uniform", "general"):
            raise ModelError("kind", f"unknown model kind {kind!r}")
        self.segments = tuple(segments)
        self.kind = kind
        self._validate()
        self.weights = np.array([s.p for s in self.segments], dtype=float)
        self._z_minus = [s.z_minus for s in self.segments]
        self._cum = np.cumsum(self.weights)

    # construction -----------------------------------------------------

    @classmethod
    def uniform_from_weights(cls, weights: Sequence[float]) -> "RivModel":
        segs = [
            Segment(t, float(t), float(t + 1), float(p), PiecewiseLinearCDF.identity(t, t + 1))
            for t, p in enumerate(weights, start=1)
        ]
        return cls(segs, "uniform")

    @classmethod
    def general(cls, specs: Iterable[dict]) -> "RivModel":
        """Build from ``{"z_minus", "z_plus", "p", "cdf_breakpoints"}`` records.

        ``cdf_breakpoints`` may be omitted for a uniform CDF on the segment.
        Records are sorted by position before indexing.
        """
        specs = sorted(specs, key=lambda s: float(s["z_minus"]))
        segs = []
        for t, spec in enumerate(specs, start=1):
            lo, hi = float(spec["z_minus"]), float(spec["z_plus"])
            if not lo < hi:
                raise ModelError("segment_nonempty", f"segment {t} has z_minus >= z_plus")
            bps = spec.get("cdf_breakpoints")
            if bps is None:
                cdf = PiecewiseLinearCDF.identity(lo, hi)
            else:
                xs, fs = zip(*bps)
                cdf = PiecewiseLinearCDF(xs, fs)
            segs.append(Segment(t, lo, hi, float(spec["p"]), cdf))
        return cls(segs, "general")

    def _validate(self) -> None:
        if not self.segments:
            raise ModelError("nonempty", "model needs at least one segment")
        for t, s in enumerate(self.segments, start=1):
            if s.index != t:
                raise ModelError("segment_index", f"segment at position {t} has index {s.index}")
            if not (0.0 <= s.p <= 1.0) or math.isnan(s.p):
                raise ModelError("weight_range", f"p_{t} = {s.p} is outside [0, 1]")
            if not s.z_minus < s.z_plus:
                raise ModelError("segment_nonempty", f"segment {t} is empty")
            if s.cdf.lo != s.z_minus or s.cdf.hi != s.z_plus:
                raise ModelError("cdf_support", f"CDF of segment {t} does not span its interval")
            if self.kind == "uniform" and (s.z_minus != t or s.z_plus != t + 1):
                raise ModelError("uniform_geometry", f"uniform segment {t} must be [{t}, {t + 1}]")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.z_minus < prev.z_plus:
                raise ModelError("segment_order", f"segments {prev.index} and {cur.index} overlap")
        total = math.fsum(s.p for s in self.segments)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ModelError("weights_sum_to_one", f"weights sum to {total!r}")

    # geometry ----------------------------------------------------------

    @property
    def sigma(self) -> int:
        return len(self.segments)

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def segment(self, t: int) -> Segment:
        return self.segments[t - 1]

    def segment_of(self, x: float) -> int:
        """Index of the segment containing ``x``.

        A point shared by two touching segments belongs to the right one,
        except the very last endpoint.
        """
        i = bisect_right(self._z_minus, x) - 1
        if i < 0:
            raise ModelError("outside_segments", f"position {x!r} lies left of every segment")
        seg = self.segments[i]
        if x > seg.z_plus:
            raise ModelError("outside_segments", f"position {x!r} lies outside every segment")
        return seg.index

    def anchors(self) -> list[float]:
        """All segment endpoints (the non-candidate positions interval queries may use)."""
        out = set()
        for s in self.segments:
            out.add(s.z_minus)
            out.add(s.z_plus)
        return sorted(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RivModel):
            return NotImplemented
        return self.kind == other.kind and all(
            a == b and a.cdf == b.cdf for a, b in zip(self.segments, other.segments)
        ) and self.sigma == other.sigma

    def __repr__(self) -> str:
        return f"RivModel(kind={self.kind!r}, sigma={self.sigma}, weights={self.weights.tolist()})"

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        if self.is_uniform:
            return {"kind": "uniform", "sigma": self.sigma,
                    "segments": [{"p": s.p} for s in self.segments]}
        return {
            "kind": "general",
            "sigma": self.sigma,
            "segments": [
                {"z_minus": s.z_minus, "z_plus": s.z_plus, "p": s.p,
                 "cdf_breakpoints": s.cdf.breakpoints()}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RivModel":
        if not isinstance(data, dict) or "segments" not in data:
            raise ModelError("format", "model document needs a 'segments' list")
        kind = data.get("kind", "uniform")
        segs = data["segments"]
        if "sigma" in data and int(data["sigma"]) != len(segs):
            raise ModelError("sigma", f"sigma={data['sigma']} but {len(segs)} segments listed")
        try:
            if kind == "uniform":
                return cls.uniform_from_weights([float(s["p"]) for s in segs])
            return cls.general(segs)
        except (KeyError, TypeError) as exc:
            raise ModelError("format", f"malformed segment record: {exc}") from exc


def load_model(path: str | Path) -> RivModel:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError("format", f"not valid JSON: {exc}") from exc
    return RivModel.from_dict(data)


def save_model(model: RivModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


# candidates --------------------------------------------------------------


class CandidateSet:
    """Sorted, distinct candidate positions, each strictly inside a segment."""

    def __init__(self, positions: Iterable[float], model: RivModel):
        pos = np.asarray(sorted(float(x) for x in positions), dtype=float)
        if pos.size and np.any(np.diff(pos) <= 0):
            dup = pos[np.flatnonzero(np.diff(pos) <= 0)[0]]
            raise ModelError("candidates_distinct", f"duplicate candidate position {dup!r}")
        seg = np.empty(pos.size, dtype=np.int64)
        for i, x in enumerate(pos):
            t = model.segment_of(x)
            s = model.segment(t)
            if not s.z_minus < x < s.z_plus:
                raise ModelError(
                    "candidate_interior",
                    f"candidate {x!r} sits on the boundary of segment {t}",
                )
            seg[i] = t
        self.model = model
        self.positions = pos
        self.segment = seg
        self._list = pos.tolist()
        self._by_segment: dict[int, list[float]] = {
            t: pos[seg == t].tolist() for t in range(1, model.sigma + 1)
        }

    def __len__(self) -> int:
        return int(self.positions.size)

    def __iter__(self):
        return iter(self._list)

    def __contains__(self, x) -> bool:
        i = bisect_left(self._list, x)
        return i < len(self._list) and self._list[i] == x

    def as_list(self) -> list[float]:
        return list(self._list)

    def in_segment(self, t: int) -> list[float]:
        """Sorted candidates of segment ``t`` (do not mutate)."""
        return self._by_segment[t]

    def index_of(self, x: float) -> int:
        i = bisect_left(self._list, x)
        if i == len(self._list) or self._list[i] != x:
            raise KeyError(x)
        return i

    def segments_hit(self, subset: Iterable[float]) -> list[int]:
        return sorted({self.model.segment_of(x) for x in subset})

    def __repr__(self) -> str:
        return f"CandidateSet(m={len(self)}, sigma={self.model.sigma})"


# sampling ------------------------------------------------------------------


def sample_voters(model: RivModel, n: int, rng) -> VoterSample:
    """Draw ``n`` voters.

    Each voter consumes three uniforms, in order: the two endpoint draws
    and the segment draw.
    """
    u = np.asarray(rng.random((n, 3)), dtype=float).reshape(n, 3)
    idx = np.searchsorted(model._cum, u[:, 2], side="right")
    positive = np.flatnonzero(model.weights > 0)
    idx = np.minimum(idx, positive[-1])
    # rounding in the cumulative sum must never land on a zero-weight segment
    bad = model.weights[idx] == 0
    if np.any(bad):
        idx[bad] = positive[np.searchsorted(positive, idx[bad]).clip(max=positive.size - 1)]
    x = np.empty(n)
    y = np.empty(n)
    for i in np.unique(idx):
        sel = idx == i
        cdf = model.segments[i].cdf
        x[sel] = cdf.inverse(u[sel, 0])
        y[sel] = cdf.inverse(u[sel, 1])
    return VoterSample(idx + 1, np.minimum(x, y), np.maximum(x, y))


def sample_voter(model: RivModel, rng) -> VoterInterval:
    return sample_voters(model, 1, rng)[0]


# uniformisation ---------------------------------------------------------------


class PositionMap:
    """The map x -> t + F_t(x) from a general model onto its uniform image."""

    def __init__(self, model: RivModel):
        self.model = model

    def __call__(self, x: float) -> float:
        t = self.model.segment_of(x)
        return t + float(self.model.segment(t).cdf(x))

    def inverse(self, y: float) -> float:
        t = int(math.floor(y))
        if y == self.model.sigma + 1:
            t = self.model.sigma
        if not 1 <= t <= self.model.sigma:
            raise ModelError("outside_segments", f"{y!r} is not in [1, sigma + 1]")
        return float(self.model.segment(t).cdf.inverse(y - t))

    def map_array(self, xs: np.ndarray, segments: np.ndarray) -> np.ndarray:
        """Vectorised forward map when segment labels are already known."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty_like(xs)
        for t in np.unique(segments):
            sel = segments == t
            out[sel] = t + self.model.segment(int(t)).cdf(xs[sel])
        return out

    def map_voters(self, voters: VoterSample) -> VoterSample:
        return VoterSample(
            voters.segment.copy(),
            self.map_array(voters.a, voters.segment),
            self.map_array(voters.b, voters.segment),
        )


def uniformize(model: RivModel, candidates: Iterable[float]):
    """Return ``(uniform_model, mapped_candidates, position_map)``.

    Candidates outside every segment raise :class:`ModelError` naming the
    offending position.
    """
    mu = PositionMap(model)
    uniform = RivModel.uniform_from_weights(model.weights.tolist())
    mapped = []
    for x in candidates:
        mapped.append(mu(float(x)))
    return uniform, CandidateSet(mapped, uniform), mu


# neighbours and closed-form probabilities ---------------------------------------


def neighbor(x: float, T: Sequence[float], side: str, model: RivModel,
             segment: int | None = None) -> tuple[float, bool]:
    """Closest element of sorted ``T`` at or beyond ``x`` on ``side``.

    Only elements of the segment containing ``x`` count; when none exists
    the segment endpoint is returned.  The second value reports whether that
    endpoint fallback fired.  Pass ``segment`` to disambiguate points on a
    shared segment boundary.
    """
    t = model.segment_of(x) if segment is None else segment
    seg = model.segment(t)
    if side == LEFT:
        i = bisect_right(T, x) - 1
        if i >= 0 and T[i] >= seg.z_minus:
            return float(T[i]), False
        return seg.z_minus, True
    if side == RIGHT:
        i = bisect_left(T, x)
        if i < len(T) and T[i] <= seg.z_plus:
            return float(T[i]), False
        return seg.z_plus, True
    raise ValueError(f"side must be {LEFT!r} or {RIGHT!r}, got {side!r}")


def approval_probability(c: float, S: Sequence[float], model: RivModel) -> float:
    """P[voter approves c and no member of S].

    For general models the distances are measured in CDF units, which is
    the same thing as evaluating the uniform image.
    """
    S = sorted(S)
    if c in S:
        raise ValueError(f"candidate {c!r} is in S; the event has probability 0 by definition")
    t = model.segment_of(c)
    seg = model.segment(t)
    lo, _ = neighbor(c, S, LEFT, model, t)
    hi, _ = neighbor(c, S, RIGHT, model, t)
    if model.is_uniform:
        return 2.0 * seg.p * (c - lo) * (hi - c)
    F = seg.cdf
    return 2.0 * seg.p * float(F(c) - F(lo)) * float(F(hi) - F(c))


def _segment_slice(c: float, W: Sequence[float], model: RivModel) -> tuple[int, list[float]]:
    t = model.segment_of(c)
    seg = model.segment(t)
    return t, [w for w in W if seg.z_minus <= w <= seg.z_plus]


def gap_distance(c: float, W: Sequence[float], r: int, side: str, model: RivModel) -> float:
    """Distance from ``c`` to the (r+1)-th committee member on ``side``.

    Only members in the segment of ``c`` count; running out of members
    measures to the segment endpoint instead.
    """
    if not model.is_uniform:
        raise ModelError("uniform_required", "gap distances are defined on uniform models")
    if r < 0:
        raise ValueError("r must be non-negative")
    t, Wt = _segment_slice(c, sorted(W), model)
    if c in Wt:
        raise ValueError(f"candidate {c!r} is a committee member")
    rho = bisect_left(Wt, c)
    if side == RIGHT:
        i = rho + r
        return (Wt[i] if i < len(Wt) else t + 1.0) - c
    if side == LEFT:
        i = rho - r - 1
        return c - (Wt[i] if i >= 0 else float(t))
    raise ValueError(f"side must be {LEFT!r} or {RIGHT!r}, got {side!r}")


def window_probability(ell: int, c: float, j: int, W: Sequence[float], model: RivModel) -> float:
    """P[voter approves c and every approved member of W is in the window around c].

    The window holds the j members left of ``c`` and the ell-1-j members to
    its right, within the segment of ``c``.
    """
    if not 0 <= j < ell:
        raise ValueError(f"need 0 <= j < ell, got j={j}, ell={ell}")
    t = model.segment_of(c)
    return (
        2.0
        * model.segment(t).p
        * gap_distance(c, W, j, LEFT, model)
        * gap_distance(c, W, ell - 1 - j, RIGHT, model)
    )
