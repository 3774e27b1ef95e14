"""The five-element sentence descriptor fed to the special discriminator."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .sentiment import SentimentAnalyzer
from .tfidf import TfidfModel, batch_cosine, tfidf_cosine

OPTIMAL_LENGTH_PENALTY = 0.5

_TARGET_SENTIMENT = {"positive": (1.0, 0.0, 0.0), "negative": (0.0, 1.0, 0.0), "neutral": (0.0, 0.0, 1.0)}


class FeatureVector(NamedTuple):
    topic_sim: float
    length_penalty: float
    p_pos: float
    p_neg: float
    p_neu: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


class LengthStats(NamedTuple):
    """Extremes of ``|len_g - len_topic|`` over a batch of generated sentences."""

    topic_length: int
    lo: int
    hi: int

    @classmethod
    def of(cls, gen_lengths: Sequence[int], topic_length: int) -> "LengthStats":
        if len(gen_lengths) == 0:
            raise ValueError("length penalty needs a nonempty batch")
        d = np.abs(np.asarray(gen_lengths) - topic_length)
        return cls(topic_length, int(d.min()), int(d.max()))

    def penalty(self, lengths) -> np.ndarray:
        """Min-max normalized distance; 0.5 everywhere when the batch is degenerate.

        Lengths outside the batch's range (e.g. rollout completions) are clipped to [0, 1].
        """
        d = np.abs(np.asarray(lengths, dtype=np.float64) - self.topic_length)
        if self.hi == self.lo:
            return np.full(d.shape, OPTIMAL_LENGTH_PENALTY)
        return np.clip((d - self.lo) / (self.hi - self.lo), 0.0, 1.0)


def length_penalty_batch(gen_lengths: Sequence[int], topic_length: int) -> list[float]:
    return LengthStats.of(gen_lengths, topic_length).penalty(gen_lengths).tolist()


def feature_vector(model: TfidfModel, lex: SentimentAnalyzer, topic: Sequence, s: Sequence,
                   batch_penalty: float, surface: Sequence[str] | None = None) -> FeatureVector:
    """Descriptor of sentence ``s`` against ``topic``.

    ``s`` and ``topic`` are compared as TF-IDF bags; sentiment reads ``surface``
    (defaults to ``s`` itself, which then must be a sequence of strings).
    """
    p = lex.proportions(list(surface if surface is not None else s))
    return FeatureVector(tfidf_cosine(model, topic, s), float(batch_penalty), *p)


def feature_matrix(model: TfidfModel, lex: SentimentAnalyzer, itos: Sequence[str], topic: Sequence[int],
                   sentences: Sequence[Sequence[int]], penalties: np.ndarray) -> np.ndarray:
    """Rows of FeatureVectors for id-sentences, vectorized where possible."""
    X = np.empty((len(sentences), 5))
    X[:, 0] = batch_cosine(model, sentences, topic, len(itos))
    X[:, 1] = penalties
    for i, s in enumerate(sentences):
        X[i, 2:] = lex.proportions(tuple(itos[t] for t in s))
    return X


def synthetic_target(sentiment: str, n: int) -> np.ndarray:
    """``n`` copies of the idealized descriptor for the requested sentiment class."""
    if n < 1:
        raise ValueError("n must be >= 1")
    row = np.array((1.0, OPTIMAL_LENGTH_PENALTY) + _TARGET_SENTIMENT[sentiment])
    return np.tile(row, (n, 1))
