import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udgan.eval import (
    bleu_avg, bleu_n, lcs_length, rouge_l, rouge_l_sum, sentiment_report, timing_compare,
)
from udgan.features import default_analyzer


def toks(s):
    return s.split()


# ---------------------------------------------------------------- BLEU

def test_bleu_worked_example():
    c, r = [toks("a b c d")], [toks("a b c e")]
    assert bleu_n(c, r, 1) == pytest.approx(3 / 4, abs=1e-12)
    assert bleu_n(c, r, 2) == pytest.approx(2 / 3, abs=1e-12)
    assert bleu_n(c, r, 3) == pytest.approx(1 / 2, abs=1e-12)
    assert bleu_avg(c, r) == pytest.approx((0.75 + 2 / 3 + 0.5) / 3, abs=1e-9)


def test_bleu_identity_and_disjoint():
    assert bleu_avg([toks("x y z w")], [toks("x y z w")]) == 1.0
    assert bleu_avg([toks("p q r")], [toks("x y z")]) == 0.0


def test_bleu_clipping_and_brevity():
    # "the the the" against "the cat": clipped unigram matches 1 of 3; c=3 > r=2 so no penalty
    assert bleu_n([toks("the the the")], [toks("the cat")], 1) == pytest.approx(1 / 3)
    # short candidate: c=2, closest r=4 -> BP = exp(1 - 4/2)
    assert bleu_n([toks("a b")], [toks("a b c d")], 1) == pytest.approx(math.exp(-1.0))


def test_bleu_multi_reference_clip_uses_best_reference():
    refs = [toks("a a b"), toks("a c")]
    assert bleu_n([toks("a a a")], refs, 1) == pytest.approx(2 / 3)


def test_bleu_empty_candidates_are_excluded():
    assert bleu_avg([toks("a b c d"), []], [toks("a b c d")]) == 1.0
    with pytest.raises(ValueError):
        bleu_avg([[]], [toks("a")])


def _bleu_oracle(cands, refs, n):
    # direct transcription of the definition with list-based counting
    matched = total = c_len = r_len = 0
    for c in cands:
        grams = [tuple(c[i:i + n]) for i in range(len(c) - n + 1)]
        for g in set(grams):
            best = max(sum(1 for i in range(len(r) - n + 1) if tuple(r[i:i + n]) == g) for r in refs)
            matched += min(grams.count(g), best)
        total += len(grams)
        c_len += len(c)
        r_len += sorted((abs(len(r) - len(c)), len(r)) for r in refs)[0][1]
    if matched == 0:
        return 0.0
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return bp * matched / total


sentence = st.lists(st.sampled_from("abcde"), min_size=1, max_size=7)


@settings(max_examples=200, deadline=None)
@given(st.lists(sentence, min_size=1, max_size=4), st.lists(sentence, min_size=1, max_size=3), st.integers(1, 3))
def test_bleu_matches_definition(cands, refs, n):
    assert bleu_n(cands, refs, n) == pytest.approx(_bleu_oracle(cands, refs, n), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(sentence, min_size=1, max_size=5), st.lists(sentence, min_size=1, max_size=3), st.randoms())
def test_bleu_bounded_and_order_invariant(cands, refs, rnd):
    v = bleu_avg(cands, refs)
    assert 0.0 <= v <= 1.0
    shuffled = list(cands)
    rnd.shuffle(shuffled)
    assert bleu_avg(shuffled, refs) == pytest.approx(v, abs=1e-12)


# ---------------------------------------------------------------- ROUGE-L

def test_rouge_worked_examples():
    assert rouge_l(toks("a x b"), toks("a b c")) == pytest.approx(2 / 3, abs=1e-12)
    assert rouge_l(toks("a b c"), toks("a b c")) == 1.0
    assert rouge_l(toks("x y"), toks("a b c")) == 0.0
    with pytest.raises(ValueError):
        rouge_l(toks("a"), [])


def test_rouge_f_measure():
    # LCS 2, precision 2/3, recall 2/4
    p, r = 2 / 3, 2 / 4
    assert rouge_l(toks("a x b"), toks("a b c d"), f_measure=True) == pytest.approx(2 * p * r / (p + r))


def test_rouge_sum_is_linear():
    topic = toks("a b c")
    assert rouge_l_sum([toks("a x b")] * 5, topic) == pytest.approx(5 * 2 / 3)


def _lcs_brute(a, b):
    for k in range(min(len(a), len(b)), 0, -1):
        subs = set(itertools.combinations(b, k))
        if any(c in subs for c in itertools.combinations(a, k)):
            return k
    return 0


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=7), st.lists(st.sampled_from("abc"), max_size=7))
def test_lcs_matches_brute_force(a, b):
    assert lcs_length(a, b) == _lcs_brute(a, b)


# ---------------------------------------------------------------- sentiment / timing

def test_sentiment_report():
    assert sentiment_report([toks("the plan ."), toks("a report")]) == (0.0, 0.0, 1.0)
    half = sentiment_report([["good"], toks("the plan")])
    assert half == pytest.approx((0.5, 0.0, 0.5))
    lex = default_analyzer()
    mixed = [toks("not good ."), toks("very good"), toks("the plan")]
    expected = [sum(lex.proportions(c)[i] for c in mixed) / 3 for i in range(3)]
    assert sentiment_report(mixed) == pytest.approx(expected, abs=1e-12)
    assert sum(sentiment_report(mixed)) == pytest.approx(1.0, abs=1e-12)


def test_timing_compare():
    rep = {"update_total": 10.0, "pretrain": 6.0, "generator": 1.0, "dgeneral": 3.0, "dspecial": 0.0}
    assert timing_compare(rep, rep)["ratio"] == 1.0
    follow = {"update_total": 6.0, "pretrain": 6.0}
    assert timing_compare(rep, follow)["ratio"] == pytest.approx(0.6)
    warned = timing_compare(rep, rep, {"batch_size": 16}, {"batch_size": 8})
    assert "batch_size" in warned["warning"]


def test_text_report():
    from udgan.eval import text_report
    from udgan.features import TfidfModel
    cands = [toks("a good plan"), toks("the plan")]
    topic = toks("the good plan")
    tf = TfidfModel.fit(cands)
    rep = text_report(cands, topic, references=cands, tfidf=tf)
    assert rep["sentences"] == 2 and rep["bleu_avg"] == 1.0
    assert rep["rouge_l_mean"] == pytest.approx((2 / 3 + 2 / 3) / 2)
    assert 0.0 < rep["tfidf_cosine_mean"] < 1.0
    assert rep["p_pos"] == pytest.approx(sentiment_report(cands)[0])
    assert "bleu_avg" not in text_report(cands, topic)
