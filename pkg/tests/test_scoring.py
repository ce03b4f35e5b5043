import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcompress.errors import InputError
from ctxcompress.model import Query, Turn, make_turns
from ctxcompress.scoring import (
    ScoredTurn,
    ScoringWeights,
    coherence,
    contradiction_prob,
    dependency,
    dependency_scores,
    get_scorer,
    importance,
    importance_for,
    rank_order,
    recency,
    register_scorer,
    score_turns,
    selection_score,
    similarity,
)

import oracles


class TestSimilarity:
    def test_identity(self):
        assert similarity("the cat sat", "the cat sat") == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        assert similarity("alpha beta", "gamma delta") == 0.0

    def test_one_shared_of_three(self):
        # unit vectors of length sqrt(3) sharing one term: 1 / 3
        assert similarity("cat sat mat", "cat ran home") == pytest.approx(1 / 3, abs=1e-12)

    def test_empty_side(self):
        assert similarity("the of", "cat") == 0.0


class TestRecency:
    def test_zero_gap(self):
        assert recency(5, 5, 10.0) == 1.0

    def test_gap_equals_rho(self):
        assert recency(0, 10, 10.0) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_far_gap(self):
        assert 0.0 <= recency(0, 100000, 1.0) < 1e-300

    def test_future_turn_rejected(self):
        with pytest.raises(InputError):
            recency(3, 2, 1.0)


class TestDependency:
    def test_last_turn(self):
        turns = make_turns([("u", "paris trip"), ("u", "paris only")])
        assert dependency(turns[1], []) == 0.0

    def test_half_referenced(self):
        turns = make_turns([("u", "paris trip"), ("u", "back to paris soon")])
        assert dependency(turns[0], turns[1:]) == 0.5

    def test_fully_referenced(self):
        turns = make_turns([("u", "paris trip"), ("u", "the trip"), ("u", "paris")])
        assert dependency(turns[0], turns[1:]) == 1.0

    def test_later_turns_must_follow(self):
        turns = make_turns([("u", "a"), ("u", "b")])
        with pytest.raises(InputError):
            dependency(turns[1], turns[:1])

    def test_inverted_index_matches_pairwise(self):
        rng = random.Random(3)
        vocab = "paris trip hotel cat dog music rain soup budget".split()
        for _ in range(50):
            turns = make_turns([("u", " ".join(rng.choices(vocab, k=rng.randint(0, 5)))) for _ in range(rng.randint(1, 12))])
            fast = dependency_scores(turns)
            slow = [dependency(t, turns[t.index + 1 :]) for t in turns]
            assert fast == slow


class TestImportance:
    def test_all_ones(self):
        assert importance(1, 1, 1, ScoringWeights(0.2, 0.7, 3.0)) == pytest.approx(1.0)

    def test_single_term(self):
        assert importance(0.4, 0.9, 0.9, ScoringWeights(1, 0, 0)) == pytest.approx(0.4)

    def test_mixed(self):
        # 0.5*0.2 + 0.3*1.0 + 0.2*0.5 = 0.5
        assert importance(0.2, 1.0, 0.5, ScoringWeights(0.5, 0.3, 0.2)) == pytest.approx(0.5, abs=1e-12)

    def test_weights_validated(self):
        with pytest.raises(InputError):
            ScoringWeights(0, 0, 0)
        with pytest.raises(InputError):
            ScoringWeights(rho=0)
        with pytest.raises(InputError):
            ScoringWeights(alpha=-1)

    def test_importance_for_turn(self):
        turns = make_turns([("u", "paris trip"), ("u", "paris")])
        s = importance_for(turns[0], Query("paris", 1), turns[1:], ScoringWeights(1, 1, 1, 1))
        assert s == pytest.approx((similarity("paris trip", "paris") + math.exp(-1) + 0.5) / 3)


class TestContradiction:
    def test_absent_prev(self):
        assert contradiction_prob("anything", None) == 0.0

    def test_disjoint(self):
        assert contradiction_prob("cats are great", "not the weather") == 0.0

    def test_negated_restatement(self):
        assert contradiction_prob("the meeting is on friday", "the meeting is not on friday") == 1.0

    def test_both_negated_is_not_contradiction(self):
        assert contradiction_prob("the meeting is not on friday", "no meeting on friday") == 0.0

    def test_nt_marker(self):
        assert contradiction_prob("the meeting isn't on friday", "the meeting is on friday") == 1.0

    def test_partial_overlap(self):
        # content {meeting, friday} vs {meeting, monday}: J = 1/3
        assert contradiction_prob("meeting friday", "never meeting monday") == pytest.approx(1 / 3)

    @pytest.mark.parametrize("p, c", [(0.0, 1.0), (1.0, 0.0), (0.25, 0.75)])
    def test_coherence_complement(self, p, c):
        assert coherence("x", "y", lambda a, b: p) == c

    def test_plugin_out_of_range(self):
        with pytest.raises(InputError):
            coherence("x", "y", lambda a, b: 1.5)


class TestSelectionScore:
    def test_examples(self):
        assert selection_score(1.0, 1.0) == 1.0
        assert selection_score(0.8, 0.5) == pytest.approx(0.4)
        assert selection_score(0.7, 0.0) == 0.0

    def test_out_of_range(self):
        with pytest.raises(InputError):
            selection_score(1.2, 0.5)


def test_rank_order_tie_break():
    scored = [ScoredTurn("b", 1, 0.5, 1, 0.5), ScoredTurn("a", 0, 0.5, 1, 0.5), ScoredTurn("c", 2, 0.9, 1, 0.9)]
    assert [s.turn_id for s in rank_order(scored)] == ["c", "a", "b"]


def test_registry():
    register_scorer("similarity", "always-half", lambda a, b: 0.5)
    assert get_scorer("similarity", "always-half")("x", "y") == 0.5
    with pytest.raises(InputError):
        get_scorer("similarity", "missing")
    with pytest.raises(InputError):
        register_scorer("bogus", "x", print)


def test_score_turns_matches_trace(toy):
    cfg = {"scoring": {"alpha": 0.5, "beta": 0.3, "gamma": 0.2, "rho": 10.0},
           "budget": {"b_max": 10, "b_min": 0, "lambda": 0, "window": 10},
           "thresholds": {"q_s": 0.7, "q_l": 0.3, "phi": 0.6, "cap_fraction": 0.25}}
    prev = toy.turns[-1].text
    got = score_turns(toy.turns, Query("When is the meeting?", 8), ScoringWeights(), prev)
    want = oracles.trace_step([(t.turn_id, t.text) for t in toy.turns], "When is the meeting?", 8, cfg, prev)["scored"]
    for g, w in zip(got, want):
        assert (g.s, g.c, g.z) == pytest.approx((w["s"], w["c"], w["z"]), abs=1e-12)


# properties -------------------------------------------------------------------

texts = st.text(max_size=60)


@given(texts, texts)
def test_similarity_symmetric_and_bounded(a, b):
    x, y = similarity(a, b), similarity(b, a)
    assert abs(x - y) <= 1e-12
    assert 0.0 <= x <= 1.0


@given(texts, st.one_of(st.none(), texts))
def test_contradiction_bounded_and_complement(a, b):
    p = contradiction_prob(a, b)
    assert 0.0 <= p <= 1.0
    assert coherence(a, b) + p == 1.0


@given(st.lists(texts, min_size=1, max_size=8), texts)
@settings(max_examples=60)
def test_score_turns_bounded(ts, q):
    turns = make_turns([("u", t) for t in ts])
    for st_ in score_turns(turns, Query(q, len(turns)), ScoringWeights(), ts[-1]):
        assert 0.0 <= st_.s <= 1.0 and 0.0 <= st_.c <= 1.0 and 0.0 <= st_.z <= 1.0
        assert st_.z == st_.s * st_.c


@given(st.integers(0, 50), st.integers(0, 50), st.floats(0.1, 100))
def test_recency_monotone(i1, gap, rho):
    t = i1 + gap + 1
    i2 = i1 + 1
    assert recency(i1, t, rho) <= recency(i2, t, rho)
    if recency(i2, t, rho) > 0:
        assert recency(i1, t, rho) < recency(i2, t, rho) or recency(i1, t, rho) == 0.0
