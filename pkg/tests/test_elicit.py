import math

import numpy as np
import pytest

from rivpjr.elicit import (
    NO_POINT_APPROVED,
    RESOLVED_EMPTY,
    RESOLVED_FALLBACK,
    RESOLVED_NONEMPTY,
    SEGMENT_NOT_FOUND,
    elicit_full,
    resolve,
    segment_search,
)
from rivpjr.model import CandidateSet, VoterInterval, sample_voters
from rivpjr.oracle import INTERVAL, POINT, QueryContext, VoterOracle

from conftest import random_candidates, uniform_model

EXAMPLE_CANDIDATES = [7.1, 7.15, 7.2, 7.3, 7.4, 7.6] + [t + 0.5 for t in range(1, 9) if t != 7]
# the example's interval is open at 7.1; the next float up is its closed equivalent
EXAMPLE_VOTER = VoterInterval(7, float(np.nextafter(7.1, 8.0)), 7.35)


def example_oracle():
    model = uniform_model([1 / 8] * 8)
    ctx = QueryContext(model, CandidateSet(EXAMPLE_CANDIDATES, model))
    return VoterOracle(EXAMPLE_VOTER, ctx)


def truth(voter, P):
    return tuple(x for x in sorted(P) if voter.a <= x <= voter.b)


class TestSegmentSearch:
    def test_example(self):
        o = example_oracle()
        assert segment_search(o, list(range(1, 9))) == 7
        first = [(e.query.positions, e.answer) for e in o.log[:2]]
        assert first == [((1.0, 5.0), False), ((5.0, 7.0), False)]
        assert o.stats()["total"] <= math.ceil(math.log2(8)) + 1

    def test_singleton(self):
        model = uniform_model([0.25] * 4)
        o = VoterOracle(VoterInterval(3, 3.2, 3.4), QueryContext(model, CandidateSet([3.5], model)))
        assert segment_search(o, [3]) == 3
        assert o.stats()["total"] == 1

    def test_not_found(self):
        model = uniform_model([0.2] * 5)
        o = VoterOracle(VoterInterval(5, 5.2, 5.4), QueryContext(model, CandidateSet([5.5], model)))
        assert segment_search(o, [1, 2]) is None

    def test_all_segments(self, rng):
        model = uniform_model([0.1] * 10)
        ctx = QueryContext(model, CandidateSet([t + 0.5 for t in range(1, 11)], model))
        for v in sample_voters(model, 500, rng):
            o = VoterOracle(v, ctx)
            assert segment_search(o, list(range(1, 11))) == v.segment
            assert o.stats()["total"] <= math.ceil(math.log2(10)) + 1


class TestResolve:
    def test_example(self):
        o = example_oracle()
        out = resolve(o, EXAMPLE_CANDIDATES)
        assert out.status == RESOLVED_NONEMPTY
        assert out.approved == (7.15, 7.2, 7.3)
        trace = [(e.query.kind, e.query.positions, e.answer) for e in o.log]
        assert trace == [
            (INTERVAL, (1.0, 5.0), False),
            (INTERVAL, (5.0, 7.0), False),
            (INTERVAL, (7.0, 8.0), True),
            (POINT, (7.4,), False),
            (POINT, (7.6,), False),
            (INTERVAL, (7.4, 7.6), False),
            (INTERVAL, (7.6, 8.0), False),
            (POINT, (7.2,), True),
            (POINT, (7.3,), True),
            (POINT, (7.1,), False),
            (POINT, (7.15,), True),
        ]
        assert o.stats()["total"] == 11

    def test_example_restricted(self):
        o = example_oracle()
        out = resolve(o, [7.1, 7.15, 7.2, 7.3, 7.4, 7.6])
        assert out.approved == (7.15, 7.2, 7.3)
        assert out.segment == 7

    def test_round_one(self):
        model = uniform_model([1.0])
        C = CandidateSet([1.1, 1.3, 1.5, 1.7, 1.9], model)
        o = VoterOracle(VoterInterval(1, 1.45, 1.55), QueryContext(model, C))
        out = resolve(o, C.as_list())
        assert out.status == RESOLVED_NONEMPTY and out.round_reached == 1
        assert out.approved == (1.5,)

    def test_empty_certificate(self):
        model = uniform_model([1.0])
        C = CandidateSet([1.1, 1.3, 1.5, 1.7, 1.9], model)
        o = VoterOracle(VoterInterval(1, 1.55, 1.65), QueryContext(model, C))
        out = resolve(o, C.as_list())
        assert out.status == RESOLVED_EMPTY and out.approved == ()

    def test_segment_without_candidates(self):
        model = uniform_model([0.5, 0.5])
        C = CandidateSet([1.5], model)
        o = VoterOracle(VoterInterval(2, 2.1, 2.2), QueryContext(model, C))
        assert resolve(o, [1.5]).status == SEGMENT_NOT_FOUND

    def test_no_point_approved(self):
        # a voter approving a candidate outside P but none inside it
        model = uniform_model([1.0])
        C = CandidateSet([1.2, 1.4, 1.41, 1.6, 1.8], model)
        o = VoterOracle(VoterInterval(1, 1.405, 1.415), QueryContext(model, C))
        out = resolve(o, [1.2, 1.6, 1.8])
        assert out.approved == ()
        assert out.status in (NO_POINT_APPROVED, RESOLVED_NONEMPTY)

    def test_singleton_p(self):
        model = uniform_model([1.0])
        C = CandidateSet([1.5], model)
        o = VoterOracle(VoterInterval(1, 1.4, 1.6), QueryContext(model, C))
        out = resolve(o, [1.5])
        assert out.approved == (1.5,) and out.status == RESOLVED_FALLBACK
        assert o.stats()["total"] <= 2

    def test_empty_p_rejected(self):
        with pytest.raises(ValueError):
            resolve(example_oracle(), [])

    def test_known_segment_skips_search(self):
        o = example_oracle()
        out = resolve(o, [7.1, 7.15, 7.2, 7.3], known_segment=7, redundant_search=False)
        assert out.approved == (7.15, 7.2, 7.3)
        assert all(e.query.positions != (7.0, 8.0) for e in o.log)

    @pytest.mark.parametrize("sigma, m", [(1, 16), (3, 60), (4, 256)])
    def test_exact_against_ground_truth(self, sigma, m):
        rng = np.random.default_rng(sigma * 1000 + m)
        model = uniform_model([1 / sigma] * sigma)
        C = random_candidates(rng, model, m)
        ctx = QueryContext(model, C)
        cand = C.as_list()
        for v in sample_voters(model, 2000, rng):
            P = sorted(rng.choice(cand, size=int(rng.integers(1, m + 1)), replace=False).tolist())
            out = resolve(VoterOracle(v, ctx), P)
            if out.status == SEGMENT_NOT_FOUND:
                assert v.segment not in C.segments_hit(P)
                continue
            assert out.approved == truth(v, P)
            if out.status == RESOLVED_EMPTY:
                assert truth(v, cand) == ()

    def test_full_elicitation(self):
        rng = np.random.default_rng(77)
        model = uniform_model([0.5, 0.5])
        C = random_candidates(rng, model, 256)
        ctx = QueryContext(model, C)
        for v in sample_voters(model, 3000, rng):
            assert elicit_full(VoterOracle(v, ctx)) == truth(v, C.as_list())

    def test_single_candidate_full(self):
        model = uniform_model([1.0])
        C = CandidateSet([1.5], model)
        o = VoterOracle(VoterInterval(1, 1.2, 1.8), QueryContext(model, C))
        assert elicit_full(o) == (1.5,)
        assert o.stats()["total"] <= 3
