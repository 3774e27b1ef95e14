"""Paragraph-structured corpus loading, vocabulary and batching.

Corpus format: one whitespace-tokenized sentence per line; a blank line ends a
paragraph. Files are read byte-transparently (undecodable bytes survive as
surrogate escapes).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, BOS, SEP, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<sep>", "<unk>")
SENTIMENTS = ("positive", "negative", "neutral")

Sentence = tuple[int, ...]
Paragraph = list[Sentence]


class DataError(ValueError):
    pass


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.itos[:len(RESERVED)]) != RESERVED:
            raise DataError("vocabulary must start with the reserved tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, counts: Counter, min_count: int) -> "Vocabulary":
        kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(list(RESERVED) + kept)

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def tokens(self, ids: Sequence[int]) -> list[str]:
        n = len(self.itos)
        for i in ids:
            if not 0 <= int(i) < n:
                raise DataError(f"invalid token id {i}")
        return [self.itos[int(i)] for i in ids]


def encode(vocab: Vocabulary, text: str, max_len: int | None = None) -> Sentence:
    toks = text.split()
    if not toks:
        raise DataError("empty sentence")
    if max_len is not None and len(toks) > max_len:
        raise DataError(f"sentence has {len(toks)} tokens, limit is {max_len}")
    return tuple(vocab.id(t) for t in toks)


def decode(vocab: Vocabulary, ids: Sequence[int]) -> str:
    return " ".join(vocab.tokens(ids))


@dataclass(frozen=True)
class UserSpec:
    """The user's topic sentence and target sentiment class."""

    topic_text: str
    topic: Sentence
    sentiment: str

    def __post_init__(self):
        if not self.topic:
            raise DataError("topic sentence must be nonempty")
        if self.sentiment not in SENTIMENTS:
            raise DataError(f"sentiment must be one of {SENTIMENTS}, got {self.sentiment!r}")

    @classmethod
    def from_text(cls, vocab: Vocabulary, topic: str, sentiment: str) -> "UserSpec":
        return cls(topic, encode(vocab, topic), sentiment)


def read_paragraphs(path) -> list[list[list[str]]]:
    try:
        text = Path(path).read_bytes().decode("utf-8", errors="surrogateescape")
    except OSError as e:
        raise OSError(f"cannot read corpus {path}: {e}") from e
    paragraphs, current = [], []
    for line in text.splitlines():
        toks = line.split()
        if toks:
            current.append(toks)
        elif current:
            paragraphs.append(current)
            current = []
    if current:
        paragraphs.append(current)
    return paragraphs


def load_corpus(path, max_len: int = 45, min_count: int = 2) -> tuple[Vocabulary, list[Paragraph]]:
    raw = read_paragraphs(path)
    kept = []
    dropped = 0
    for para in raw:
        sents = [s for s in para if len(s) <= max_len]
        dropped += len(para) - len(sents)
        if sents:
            kept.append(sents)
    if not kept:
        raise DataError(f"corpus {path} is empty after filtering sentences longer than {max_len}")
    if dropped:
        log.info("dropped %d sentences longer than %d tokens", dropped, max_len)
    counts = Counter(t for para in kept for s in para for t in s)
    vocab = Vocabulary.build(counts, min_count)
    data = [[tuple(vocab.id(t) for t in s) for s in para] for para in kept]
    return vocab, data


def split_heldout(data: list[Paragraph], fraction: float = 0.1, seed: int = 0):
    """Deterministic (train, held-out) split of paragraphs."""
    order = np.random.default_rng(seed).permutation(len(data))
    n_held = max(1, int(round(fraction * len(data)))) if len(data) > 1 else 0
    held = sorted(order[:n_held].tolist())
    train = sorted(order[n_held:].tolist())
    return [data[i] for i in train], [data[i] for i in held]


class ParagraphBatch(NamedTuple):
    paragraphs: list[Paragraph]
    tokens: np.ndarray  # (B, S, L) right-padded with PAD
    lengths: np.ndarray  # (B, S) sentence lengths, 0 for padded slots


def pad_paragraphs(paragraphs: list[Paragraph]) -> ParagraphBatch:
    S = max(len(p) for p in paragraphs)
    L = max(len(s) for p in paragraphs for s in p)
    tokens = np.full((len(paragraphs), S, L), PAD, dtype=np.int64)
    lengths = np.zeros((len(paragraphs), S), dtype=np.int64)
    for b, p in enumerate(paragraphs):
        for s, sent in enumerate(p):
            tokens[b, s, :len(sent)] = sent
            lengths[b, s] = len(sent)
    return ParagraphBatch(paragraphs, tokens, lengths)


def batch_paragraphs(data: list[Paragraph], batch_size: int, seed: int) -> Iterator[ParagraphBatch]:
    """One shuffled pass over ``data`` in padded batches (last batch may be short)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(data))
    for start in range(0, len(order), batch_size):
        yield pad_paragraphs([data[i] for i in order[start:start + batch_size]])


def sample_paragraphs(data: list[Paragraph], n: int, rng: np.random.Generator) -> list[Paragraph]:
    idx = rng.choice(len(data), size=n, replace=n > len(data))
    return [data[i] for i in idx]
