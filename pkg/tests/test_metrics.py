import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ctxcompress.errors import InputError
from ctxcompress.metrics import (
    ObjectiveWeights,
    bleu,
    bleu_tokens,
    coherence_loss,
    compose,
    reconstruction_loss,
    task_loss,
    token_f1,
    token_loss,
)
from ctxcompress.scoring import ScoredTurn

# reference value produced by an established BLEU implementation (method1-style
# smoothing disabled; no zero counts occur for this pair)
CAND = "the quick brown fox jumps over the lazy dog today"
REF = "the quick brown fox leaps over the lazy dog today"
REF_BLEU = 0.6580370064762462


class TestBleu:
    def test_identity(self):
        assert bleu(REF, REF) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint(self):
        assert bleu("alpha beta gamma delta", "one two three four") == 0.0

    def test_reference_vector(self):
        assert bleu(CAND, REF) == pytest.approx(REF_BLEU, abs=1e-6)
        # by hand: p1 9/10, p2 7/9, p3 5/8, p4 3/7, no brevity penalty
        assert bleu(CAND, REF) == pytest.approx((0.9 * 7 / 9 * 5 / 8 * 3 / 7) ** 0.25, abs=1e-12)

    def test_brevity_penalty(self):
        cand, ref = "a b c d".split(), "a b c d e f g h".split()
        assert bleu_tokens(cand, ref) == pytest.approx(math.exp(1 - 8 / 4))

    def test_smoothing_zero_order(self):
        cand, ref = "a b c a".split(), "a b x c a y".split()
        # p4 has no match -> (0+1)/(1+1)
        assert bleu_tokens(cand, ref) == pytest.approx(oracles.bleu_fraction(cand, ref), abs=1e-12)

    def test_short_candidate_skips_orders(self):
        assert bleu_tokens(["a", "b"], ["a", "b"]) == pytest.approx(1.0)

    def test_empty_flag(self):
        flags = set()
        assert bleu("", "text", flags) == 0.0 and flags == {"bleu-empty-input"}

    def test_reconstruction(self):
        assert reconstruction_loss(REF, REF) == pytest.approx(0.0, abs=1e-9)
        assert reconstruction_loss(REF, "") == 1.0
        with pytest.raises(InputError):
            reconstruction_loss("", "x")


@given(
    st.lists(st.sampled_from("abcdef"), min_size=0, max_size=15),
    st.lists(st.sampled_from("abcdefg"), min_size=0, max_size=15),
)
def test_bleu_matches_exact_oracle(cand, ref):
    got = bleu_tokens(cand, ref)
    assert 0.0 <= got <= 1.0
    assert got == pytest.approx(min(1.0, oracles.bleu_fraction(cand, ref)), abs=1e-12)


class TestTaskLoss:
    def test_f1(self):
        assert token_f1("paris france", "paris") == pytest.approx(2 / 3)
        assert task_loss("paris france", "paris") == pytest.approx(1 / 3)
        assert task_loss("Thursday", "thursday") == 0.0
        assert task_loss("nothing", "thursday") == 1.0

    def test_missing(self):
        flags = set()
        assert task_loss(None, "x", flags) == 0.0 and flags == {"no-qa-pairs"}


def test_coherence_loss():
    dropped = [ScoredTurn("a", 0, 0.8, 0.5, 0.4), ScoredTurn("b", 1, 0.2, 1.0, 0.2)]
    assert coherence_loss(dropped) == pytest.approx((0.8 * 0.5 + 0.0) / 2)
    assert coherence_loss([]) == 0.0


def test_token_loss():
    assert token_loss(0.4) == 0.4
    with pytest.raises(InputError):
        token_loss(1.2)


class TestCompose:
    def test_defaults(self):
        rep = compose(0.2, 0.1, 0.5, 0.3, ObjectiveWeights())
        assert rep.l_comp == pytest.approx(0.2 + 0.1 + 0.25)
        assert rep.l_final == pytest.approx(0.55 + 0.3)

    def test_all_zero(self):
        rep = compose(0, 0, 0, 0, ObjectiveWeights())
        assert rep.l_comp == rep.l_final == 0

    def test_invalid(self):
        with pytest.raises(InputError):
            compose(float("nan"), 0, 0, 0, ObjectiveWeights())
        with pytest.raises(InputError):
            compose(-1, 0, 0, 0, ObjectiveWeights())
        with pytest.raises(InputError):
            ObjectiveWeights(eta1=-1)


@given(*(st.floats(0, 10) for _ in range(4)), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 3))
def test_compose_linear(lt, lc, lk, lr, e1, e2, e3, k):
    w = ObjectiveWeights(e1, e2, e3)
    a = compose(lt, lc, lk, lr, w)
    b = compose(k * lt, k * lc, k * lk, k * lr, w)
    assert b.l_final == pytest.approx(k * a.l_final, rel=1e-9, abs=1e-12)
    assert a.l_final >= a.l_comp >= 0


def test_bleu_bounds_random_text():
    rng = random.Random(5)
    vocab = "red green blue cyan pink gold".split()
    for _ in range(200):
        a = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        b = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        assert 0.0 <= bleu(a, b) <= 1.0
