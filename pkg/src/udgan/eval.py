"""Evaluation metrics: averaged BLEU, summed ROUGE-L, sentiment means, retrain-time comparison."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Hashable, Sequence

import numpy as np

from .features import SentimentAnalyzer, TfidfModel, default_analyzer, tfidf_cosine

log = logging.getLogger(__name__)

Tokens = Sequence[Hashable]


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(c: int, ref_lengths: Sequence[int]) -> int:
    return min(ref_lengths, key=lambda r: (abs(r - c), r))


def bleu_n(candidates: Sequence[Tokens], references: Sequence[Tokens], n: int) -> float:
    """Corpus BLEU-n: brevity penalty times the clipped n-gram precision of order ``n`` alone.

    Every candidate is compared against the whole reference set; a candidate
    n-gram's count is clipped by its largest count in any single reference.
    """
    cands = [list(c) for c in candidates if len(c) > 0]
    if len(cands) < len(candidates):
        log.warning("bleu: %d empty candidates excluded", len(candidates) - len(cands))
    refs = [list(r) for r in references if len(r) > 0]
    if not cands or not refs:
        raise ValueError("bleu needs nonempty candidates and references")
    max_ref: Counter = Counter()
    for r in refs:
        for g, k in ngrams(r, n).items():
            if k > max_ref[g]:
                max_ref[g] = k
    ref_lengths = sorted({len(r) for r in refs})
    matched = total = 0
    c_len = r_len = 0
    for c in cands:
        counts = ngrams(c, n)
        matched += sum(min(k, max_ref[g]) for g, k in counts.items())
        total += sum(counts.values())
        c_len += len(c)
        r_len += _closest_ref_length(len(c), ref_lengths)
    if total == 0 or matched == 0:
        return 0.0
    bp = 1.0 if c_len > r_len else float(np.exp(1.0 - r_len / c_len))
    return bp * matched / total


def bleu_avg(candidates: Sequence[Tokens], references: Sequence[Tokens], orders: Sequence[int] = (1, 2, 3)) -> float:
    """Equal-weight mean of BLEU-1, BLEU-2 and BLEU-3."""
    return float(np.mean([bleu_n(candidates, references, n) for n in orders]))


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, topic: Tokens, f_measure: bool = False) -> float:
    """LCS recall against the topic sentence, or the balanced F-measure."""
    if len(topic) == 0:
        raise ValueError("topic must be nonempty")
    lcs = lcs_length(candidate, topic)
    recall = lcs / len(topic)
    if not f_measure:
        return recall
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    return 2 * precision * recall / (precision + recall)


def rouge_l_sum(candidates: Sequence[Tokens], topic: Tokens, f_measure: bool = False) -> float:
    return float(sum(rouge_l(c, topic, f_measure) for c in candidates))


def sentiment_report(candidates: Sequence[Sequence[str]], lexicon: SentimentAnalyzer | None = None):
    """Mean (p_pos, p_neg, p_neu) over candidate sentences."""
    if not candidates:
        raise ValueError("sentiment report needs candidates")
    lexicon = lexicon or default_analyzer()
    P = np.array([lexicon.proportions(list(c)) for c in candidates])
    return tuple(float(v) for v in P.mean(axis=0))


def text_report(candidates: Sequence[Sequence[str]], topic: Sequence[str], references=None,
                tfidf: TfidfModel | None = None, lexicon: SentimentAnalyzer | None = None) -> dict:
    """Per-sentence means of sentiment, ROUGE-L and TF-IDF cosine, plus avg-BLEU when references are given."""
    pos, neg, neu = sentiment_report(candidates, lexicon)
    out = {"sentences": len(candidates), "p_pos": pos, "p_neg": neg, "p_neu": neu,
           "rouge_l_mean": rouge_l_sum(candidates, topic) / len(candidates)}
    if tfidf is not None:
        out["tfidf_cosine_mean"] = float(np.mean([tfidf_cosine(tfidf, topic, c) for c in candidates]))
    if references is not None:
        out["bleu_avg"] = bleu_avg(candidates, references)
    return out


def timing_compare(initial: dict, followup: dict, initial_config: dict | None = None,
                   followup_config: dict | None = None) -> dict:
    """Update-time totals of an initial and a follow-up run and their ratio."""
    a, b = float(initial["update_total"]), float(followup["update_total"])
    table = {"initial_update": a, "followup_update": b, "ratio": b / a if a > 0 else float("inf")}
    for key in ("pretrain", "generator", "dgeneral", "dspecial"):
        table[f"initial_{key}"] = float(initial.get(key, 0.0))
        table[f"followup_{key}"] = float(followup.get(key, 0.0))
    if initial_config is not None and followup_config is not None:
        diff = sorted(k for k in set(initial_config) | set(followup_config)
                      if initial_config.get(k) != followup_config.get(k) and k != "seed")
        if diff:
            table["warning"] = "config differs: " + ",".join(diff)
    return table


def format_metrics(metrics: dict) -> str:
    lines = []
    for k, v in metrics.items():
        lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(lines) + "\n"
