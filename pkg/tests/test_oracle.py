import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivpjr.model import CandidateSet, VoterInterval, sample_voters
from rivpjr.oracle import (
    INTERVAL,
    POINT,
    ProtocolViolation,
    QueryContext,
    VoterOracle,
    make_oracles,
    query_stats,
    read_dialogues,
    replay,
    write_dialogues,
)
from rivpjr.elicit import elicit_full

from conftest import random_candidates, uniform_model

EXAMPLE_CANDIDATES = [7.1, 7.15, 7.2, 7.3, 7.4, 7.6] + [t + 0.5 for t in range(1, 9) if t != 7]


@pytest.fixture
def example_ctx():
    model = uniform_model([1 / 8] * 8)
    return QueryContext(model, CandidateSet(EXAMPLE_CANDIDATES, model))


def oracle_for(ctx, a, b, voter_id=0):
    return VoterOracle(VoterInterval(ctx.model.segment_of(a), a, b), ctx, voter_id)


class TestAnswers:
    def test_point_examples(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        assert o.point(7.2) is True
        assert o.point(7.4) is False
        assert o.point(7.1) is True  # closed at the endpoint

    def test_interval_examples(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        assert o.interval(1.0, 5.0) is False
        assert o.interval(7.0, 8.0) is True
        assert o.interval(7.4, 7.6) is False
        assert o.interval(7.1, 7.4) is True  # closed containment

    def test_degenerate_voter(self, example_ctx):
        o = oracle_for(example_ctx, 7.2, 7.2)
        assert o.point(7.2) and not o.point(7.15)
        assert o.interval(7.2, 7.2)


class TestCounting:
    def test_fresh(self, example_ctx):
        assert query_stats(oracle_for(example_ctx, 7.1, 7.35)) == {
            "point_count": 0, "interval_count": 0, "total": 0, "gross_total": 0}

    def test_dedupe(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        for _ in range(3):
            o.point(7.2)
            o.interval(7.0, 8.0)
        s = o.stats()
        assert (s["point_count"], s["interval_count"], s["total"], s["gross_total"]) == (1, 1, 2, 6)

    def test_counters_match_log(self, example_ctx, rng):
        o = oracle_for(example_ctx, 7.12, 7.5)
        anchors = sorted(example_ctx.anchor_set)
        for _ in range(200):
            if rng.random() < 0.5:
                o.point(EXAMPLE_CANDIDATES[rng.integers(len(EXAMPLE_CANDIDATES))])
            else:
                x, y = sorted(rng.choice(anchors, 2))
                o.interval(float(x), float(y))
            kinds = [e.query.kind for e in o.log]
            assert o.point_count == kinds.count(POINT)
            assert o.interval_count == kinds.count(INTERVAL)

    def test_full_elicitation_bound(self):
        model = uniform_model([0.25] * 4)
        C = random_candidates(np.random.default_rng(1), model, 40)
        ctx = QueryContext(model, C)
        for v in sample_voters(model, 300, np.random.default_rng(2)):
            o = VoterOracle(v, ctx)
            elicit_full(o)
            # the full probe schedule runs at most 2 + 2 + ... for ceil(log2 m) rounds
            assert o.stats()["total"] <= 3 * 2 ** (int(np.ceil(np.log2(len(C)))) + 1) + len(C) + 3


class TestGrammar:
    def test_point_off_candidate(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        with pytest.raises(ProtocolViolation):
            o.point(7.25)
        with pytest.raises(ProtocolViolation):
            o.point(7.0)  # segment endpoints are not candidates
        assert len(o.violations) == 2 and len(o) == 0

    def test_interval_bad_endpoints(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        with pytest.raises(ProtocolViolation):
            o.interval(7.05, 8.0)
        with pytest.raises(ProtocolViolation):
            o.interval(7.6, 7.4)
        assert o.stats()["total"] == 0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 10, allow_nan=False), st.floats(0, 10, allow_nan=False))
    def test_fuzz(self, x, y):
        model = uniform_model([1 / 8] * 8)
        ctx = QueryContext(model, CandidateSet(EXAMPLE_CANDIDATES, model))
        o = oracle_for(ctx, 7.1, 7.35)
        try:
            o.point(x)
            assert x in ctx.candidate_set
        except ProtocolViolation:
            assert x not in ctx.candidate_set
        try:
            o.interval(x, y)
            assert x in ctx.anchor_set and y in ctx.anchor_set and x <= y
        except ProtocolViolation:
            assert x not in ctx.anchor_set or y not in ctx.anchor_set or x > y


class TestDialogues:
    def test_round_trip_and_replay(self):
        model = uniform_model([0.5, 0.5])
        C = random_candidates(np.random.default_rng(3), model, 30)
        voters = sample_voters(model, 50, np.random.default_rng(4))
        oracles = make_oracles(voters, QueryContext(model, C))
        for o in oracles:
            elicit_full(o)
        buf = io.StringIO()
        write_dialogues(oracles, buf, [{"voter_id": 0, "kind": "trace"}])
        buf.seek(0)
        back = read_dialogues(buf)
        for o in oracles:
            assert back[o.voter_id] == o.log  # bit-exact positions and order
            assert replay(back[o.voter_id], o.hidden)

    def test_replay_detects_tampering(self, example_ctx):
        o = oracle_for(example_ctx, 7.1, 7.35)
        o.point(7.2)
        o.interval(7.4, 7.6)
        entries = o.log
        assert replay(entries, o.hidden)
        forged = [type(entries[0])(entries[0].query, not entries[0].answer)] + entries[1:]
        assert not replay(forged, o.hidden)
