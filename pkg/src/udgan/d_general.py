"""Hierarchical real-vs-generated sentence discriminator.

Each sentence is read by a stacked LSTM over word embeddings; its final top
state is the sentence feature. A bidirectional LSTM then runs over the
sentence features of a paragraph. Both levels are projected to a shared
width and mixed as ``(1 - beta) * sentence + beta * paragraph`` with
``beta = sigmoid(raw)``, followed by a two-way softmax (class 1 = real).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import nn
from .corpus import PAD, Paragraph, Sentence
from .nn import ops
from .nn.autograd import DTYPE, ConfigError, Tensor, TrainingError, UsageError
from .nn.checkpoint import load as load_checkpoint
from .nn.checkpoint import save as save_checkpoint

MODEL_KIND = "d-general"
LOSSES = ("bce", "expectation")
_CHUNK = 512


class DGeneralModel:
    def __init__(self, vocab_size: int, emb_dim: int = 128, hidden: int = 64, layers: int = 3,
                 proj_dim: int = 128, seed: int = 0, zero_head: bool = False):
        self.vocab_size, self.emb_dim, self.hidden = vocab_size, emb_dim, hidden
        self.layers, self.proj_dim, self.seed = layers, proj_dim, seed
        rng = np.random.default_rng(seed)
        self.store = nn.ParamStore()
        self.embed = nn.Embedding(self.store, "embed", vocab_size, emb_dim, rng)
        self.bottom = nn.LSTMStack(self.store, "bottom", emb_dim, hidden, layers, rng)
        self.top = nn.BiLSTM(self.store, "top", hidden, hidden, rng)
        self.proj_sent = nn.Linear(self.store, "proj_sent", hidden, proj_dim, rng)
        self.proj_para = nn.Linear(self.store, "proj_para", 2 * hidden, proj_dim, rng)
        self.beta_raw = self.store.add("beta_raw", np.zeros(1))
        self.head = nn.Linear(self.store, "head", proj_dim, 2, rng)
        if zero_head:
            self.head.W.data[:] = 0.0
            self.head.b.data[:] = 0.0

    @property
    def beta(self) -> float:
        return float(ops.stable_sigmoid(self.beta_raw.data)[0])

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim, "hidden": self.hidden,
                "layers": self.layers, "proj_dim": self.proj_dim}

    def layer_specs(self) -> list[dict]:
        layers = (self.embed, self.bottom, self.top, self.proj_sent, self.proj_para, self.head)
        return [layer.spec.to_dict() for layer in layers]

    def num_params(self) -> int:
        return self.store.num_params()

    def save(self, path) -> str:
        return save_checkpoint(path, MODEL_KIND, self.store.state(), self.layer_specs(), self.seed, self.config())

    @classmethod
    def load(cls, path, expected: dict | None = None) -> "DGeneralModel":
        """Load a checkpoint; ``expected`` (a config dict) must match the stored one when given."""
        header, tensors = load_checkpoint(path, MODEL_KIND)
        if expected is not None and expected != header["config"]:
            raise ConfigError(f"d-general checkpoint config {header['config']} != expected {expected}")
        model = cls(seed=header["seed"], **header["config"])
        if model.layer_specs() != header["layer_specs"]:
            raise ConfigError("d-general checkpoint layer specs do not match its config")
        model.store.load_state(tensors)
        return model

    # -- forward -----------------------------------------------------------

    def encode_sentences(self, sentences: Sequence[Sentence]) -> Tensor:
        """Final top-layer state per sentence, (U, hidden); processed in length-sorted chunks."""
        order = sorted(range(len(sentences)), key=lambda i: len(sentences[i]))
        parts = []
        for start in range(0, len(order), _CHUNK):
            rows = order[start:start + _CHUNK]
            L = max(len(sentences[i]) for i in rows)
            tok = np.full((L, len(rows)), PAD, dtype=np.int64)
            mask = np.zeros((L, len(rows)), dtype=DTYPE)
            for j, i in enumerate(rows):
                n = len(sentences[i])
                tok[:n, j] = sentences[i]
                mask[:n, j] = 1.0
            # masked steps freeze the state, so the last time step holds every row's final state
            parts.append(ops.index_first(self.bottom(self.embed(tok), mask), L - 1))
        feats = parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)
        inverse = np.empty(len(order), dtype=np.int64)
        inverse[order] = np.arange(len(order))
        return ops.take_rows(feats, inverse)

    def logits(self, paragraphs: Sequence[Paragraph]) -> Tensor:
        """Two-class logits for every sentence, paragraph-major order."""
        if not paragraphs or any(len(p) == 0 for p in paragraphs):
            raise UsageError("d-general needs nonempty paragraphs")
        if any(len(s) == 0 for p in paragraphs for s in p):
            raise UsageError("d-general cannot score an empty sentence")
        uniq: dict[Sentence, int] = {}
        for p in paragraphs:
            for s in p:
                uniq.setdefault(tuple(s), len(uniq))
        feats = self.encode_sentences(list(uniq))
        S, B = max(len(p) for p in paragraphs), len(paragraphs)
        layout = np.zeros((S, B), dtype=np.int64)
        lengths = np.array([len(p) for p in paragraphs])
        flat_sent, flat_pos = [], []
        for b, p in enumerate(paragraphs):
            for s, sent in enumerate(p):
                layout[s, b] = uniq[tuple(sent)]
                flat_sent.append(layout[s, b])
                flat_pos.append(s * B + b)
        ctx = self.top.outputs(ops.take_rows(feats, layout), lengths)
        ctx = ops.take_rows(ops.reshape(ctx, (S * B, 2 * self.hidden)), np.array(flat_pos))
        beta = ops.sigmoid(self.beta_raw)
        mixed = ops.add(ops.mul(self.proj_sent(ops.take_rows(feats, np.array(flat_sent))), ops.sub(1.0, beta)),
                        ops.mul(self.proj_para(ctx), beta))
        return self.head(mixed)

    def score_paragraphs(self, paragraphs: Sequence[Paragraph]) -> list[np.ndarray]:
        """p(real) of each sentence, grouped per paragraph."""
        with nn.no_grad():
            p = ops.softmax_np(self.logits(paragraphs).data)[:, 1]
        out, i = [], 0
        for par in paragraphs:
            out.append(p[i:i + len(par)])
            i += len(par)
        return out

    def score_sentences(self, paragraph: Paragraph) -> np.ndarray:
        return self.score_paragraphs([paragraph])[0]

    def score_last(self, contexts: Sequence[Paragraph]) -> np.ndarray:
        """p(real) of the final sentence of each context paragraph."""
        return np.array([s[-1] for s in self.score_paragraphs(contexts)])

    # -- training ----------------------------------------------------------

    def loss(self, real: Sequence[Paragraph], fake: Sequence[Paragraph], kind: str = "bce") -> Tensor:
        if not real or not fake:
            raise UsageError("d-general training needs nonempty real and generated batches")
        if kind not in LOSSES:
            raise ConfigError(f"unknown d-general loss {kind!r}")
        logits = self.logits(list(real) + list(fake))
        n_real = sum(len(p) for p in real)
        labels = np.zeros(logits.shape[0], dtype=np.int64)
        labels[:n_real] = 1
        if kind == "bce":
            return ops.cross_entropy(logits, labels)
        p_real = ops.slice_last(ops.softmax(logits), 1, 2)
        w = np.where(labels == 1, 1.0 / n_real, -1.0 / (len(labels) - n_real))[:, None]
        # -(E_real[R] + E_fake[1 - R])
        return ops.sub(-1.0, ops.sum(ops.mul(p_real, w)))

    def accuracy(self, real: Sequence[Paragraph], fake: Sequence[Paragraph]) -> float:
        r = np.concatenate(self.score_paragraphs(real))
        f = np.concatenate(self.score_paragraphs(fake))
        return float(((r > 0.5).sum() + (f <= 0.5).sum()) / (len(r) + len(f)))


def train_step(model: DGeneralModel, opt: nn.Adam, real: Sequence[Paragraph], fake: Sequence[Paragraph],
               lr: float | None = None, kind: str = "bce") -> float:
    loss = model.loss(real, fake, kind)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"d-general loss is not finite ({value})")
    loss.backward()
    opt.step(lr)
    return value
