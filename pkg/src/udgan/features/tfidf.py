from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class TfidfModel:
    """Smoothed idf over sentence-documents: ``ln((1+N)/(1+df)) + 1``; tf is the raw count."""

    idf: dict[Hashable, float]
    n_docs: int
    scale: float = 1.0
    _dense: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def fit(cls, sentences: Iterable[Sequence[Hashable]]) -> "TfidfModel":
        df: Counter = Counter()
        n = 0
        for s in sentences:
            n += 1
            df.update(set(s))
        idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
        return cls(idf, n)

    def weight(self, token: Hashable) -> float:
        w = self.idf.get(token)
        return self.unseen_idf if w is None else w

    @property
    def unseen_idf(self) -> float:
        return self.scale * (math.log(1 + self.n_docs) + 1.0)

    def scaled(self, c: float) -> "TfidfModel":
        return TfidfModel({t: c * w for t, w in self.idf.items()}, self.n_docs, c * self.scale)

    def vector(self, sentence: Sequence[Hashable]) -> dict[Hashable, float]:
        return {t: n * self.weight(t) for t, n in Counter(sentence).items()}

    def dense_idf(self, vocab_size: int) -> np.ndarray:
        """idf indexed by integer token id (for id-based sentences)."""
        if vocab_size not in self._dense:
            arr = np.full(vocab_size, self.unseen_idf)
            for t, w in self.idf.items():
                if isinstance(t, (int, np.integer)) and 0 <= t < vocab_size:
                    arr[t] = w
            self._dense[vocab_size] = arr
        return self._dense[vocab_size]


def tfidf_cosine(model: TfidfModel, a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    va, vb = model.vector(a), model.vector(b)
    na = math.sqrt(sum(w * w for w in va.values()))
    nb = math.sqrt(sum(w * w for w in vb.values()))
    if na == 0 or nb == 0:
        return 0.0
    dot = sum(w * vb[t] for t, w in va.items() if t in vb)
    return min(1.0, max(0.0, dot / (na * nb)))


def batch_cosine(model: TfidfModel, sentences: Sequence[Sequence[int]], reference: Sequence[int],
                 vocab_size: int) -> np.ndarray:
    """Cosine of each id-sentence against ``reference``, vectorized over the batch."""
    out = np.zeros(len(sentences))
    if not reference or not sentences:
        return out
    idf = model.dense_idf(vocab_size)
    ref = np.bincount(np.asarray(reference), minlength=vocab_size) * idf
    rows = np.repeat(np.arange(len(sentences)), [len(s) for s in sentences])
    cols = np.fromiter((t for s in sentences for t in s), dtype=np.int64, count=len(rows))
    counts = np.zeros((len(sentences), vocab_size))
    np.add.at(counts, (rows, cols), 1.0)
    W = counts * idf
    norms = np.linalg.norm(W, axis=1) * np.linalg.norm(ref)
    dots = W @ ref
    nz = norms > 0
    out[nz] = dots[nz] / norms[nz]
    return np.clip(out, 0.0, 1.0)
