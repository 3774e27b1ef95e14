"""GRU language model over paragraph token streams.

A paragraph is generated as one stream ``w w w <sep> w w <sep> ...`` that
starts from ``<bos>``; the hidden state carries over sentence boundaries so
later sentences see earlier ones. Sampling is constrained: ``<pad>`` and
``<bos>`` are never emitted, a sentence cannot be empty, and a sentence that
reaches ``max_len`` words is closed with a forced ``<sep>``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .corpus import BOS, PAD, SEP, Paragraph, batch_paragraphs
from .nn import ops
from .nn.autograd import DTYPE, TrainingError, UsageError
from .nn.checkpoint import load as load_checkpoint
from .nn.checkpoint import save as save_checkpoint
from .nn.recurrent import gru_forward_np

log = logging.getLogger(__name__)

MASKED = -1e9
MODEL_KIND = "generator"


class GeneratorModel:
    def __init__(self, vocab_size: int, emb_dim: int = 32, hidden: int = 32, max_len: int = 45,
                 seed: int = 0, constrained: bool = True):
        self.vocab_size, self.emb_dim, self.hidden = vocab_size, emb_dim, hidden
        self.max_len, self.seed, self.constrained = max_len, seed, constrained
        rng = np.random.default_rng(seed)
        self.store = nn.ParamStore()
        self.embed = nn.Embedding(self.store, "embed", vocab_size, emb_dim, rng)
        self.gru = nn.GRUCell(self.store, "gru", emb_dim, hidden, rng)
        self.out = nn.Linear(self.store, "out", hidden, vocab_size, rng)

    # -- bookkeeping -------------------------------------------------------

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim, "hidden": self.hidden,
                "max_len": self.max_len, "constrained": self.constrained}

    def layer_specs(self) -> list[dict]:
        return [layer.spec.to_dict() for layer in (self.embed, self.gru, self.out)]

    def num_params(self) -> int:
        return self.store.num_params()

    def save(self, path) -> str:
        return save_checkpoint(path, MODEL_KIND, self.store.state(), self.layer_specs(), self.seed, self.config())

    @classmethod
    def load(cls, path) -> "GeneratorModel":
        header, tensors = load_checkpoint(path, MODEL_KIND)
        model = cls(seed=header["seed"], **header["config"])
        if model.layer_specs() != header["layer_specs"]:
            raise nn.ConfigError("generator checkpoint layer specs do not match its config")
        model.store.load_state(tensors)
        return model

    # -- constraints -------------------------------------------------------

    def logit_mask(self, sent_len: np.ndarray) -> np.ndarray:
        """Additive logit mask given the number of words already in the current sentence."""
        sent_len = np.asarray(sent_len)
        m = np.zeros(sent_len.shape + (self.vocab_size,), dtype=DTYPE)
        if not self.constrained:
            return m
        m[..., PAD] = MASKED
        m[..., BOS] = MASKED
        m[..., SEP] = np.where(sent_len == 0, MASKED, 0.0)
        full = sent_len >= self.max_len
        m[full] = MASKED
        m[full, SEP] = 0.0
        return m

    # -- numpy inference path ---------------------------------------------

    def np_step(self, tok: np.ndarray, h: np.ndarray) -> np.ndarray:
        x = self.embed.table.data[tok][None]
        g = self.gru
        return gru_forward_np(x, None, h, g.wx.data, g.wh.data, g.bx.data, g.bh.data)[0][0]

    def np_log_probs(self, h: np.ndarray, sent_len: np.ndarray) -> np.ndarray:
        return ops.log_softmax_np(self.out.np_forward(h) + self.logit_mask(sent_len))


@dataclass
class GenerationResult:
    """One sampled paragraph stream (without the leading ``<bos>``)."""

    tokens: list[int]
    log_probs: np.ndarray
    states: np.ndarray | None = field(default=None, repr=False)  # states[t] predicts tokens[t]

    @property
    def boundaries(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t == SEP]

    @property
    def sentences(self) -> Paragraph:
        out, cur = [], []
        for t in self.tokens:
            if t == SEP:
                out.append(tuple(cur))
                cur = []
            else:
                cur.append(t)
        if cur:
            out.append(tuple(cur))
        return out

    def sentence_ids(self) -> np.ndarray:
        """Index of the sentence each token belongs to (a ``<sep>`` closes its own sentence)."""
        seps = np.cumsum(np.asarray(self.tokens) == SEP)
        return np.concatenate([[0], seps[:-1]]).astype(np.int64) if self.tokens else np.zeros(0, np.int64)


def paragraph_stream(paragraph: Paragraph) -> list[int]:
    out = []
    for s in paragraph:
        out.extend(s)
        out.append(SEP)
    return out


def _sentence_lengths(inputs: np.ndarray) -> np.ndarray:
    """Words in the current sentence after consuming each input token; ``inputs`` is (T, B)."""
    L = np.zeros(inputs.shape, dtype=np.int64)
    cur = np.zeros(inputs.shape[1], dtype=np.int64)
    for t in range(inputs.shape[0]):
        tok = inputs[t]
        cur = np.where((tok == BOS) | (tok == SEP), 0, cur + 1)
        L[t] = cur
    return L


def _prefix_state(tokens: Sequence[int]) -> tuple[int, int]:
    """(words in the unfinished sentence, separators so far) for a stream prefix."""
    seps = sum(1 for t in tokens if t == SEP)
    last = max((i for i, t in enumerate(tokens) if t == SEP), default=-1)
    return len(tokens) - 1 - last, seps


def _pad_streams(streams: Sequence[Sequence[int]]):
    """Time-major inputs/targets (T, B) plus validity mask for ``<bos>``-prefixed streams."""
    if not streams or any(len(s) == 0 for s in streams):
        raise UsageError("streams must be nonempty")
    T = max(len(s) for s in streams)
    B = len(streams)
    targets = np.full((T, B), PAD, dtype=np.int64)
    mask = np.zeros((T, B), dtype=DTYPE)
    for b, s in enumerate(streams):
        targets[:len(s), b] = s
        mask[:len(s), b] = 1.0
    inputs = np.concatenate([np.full((1, B), BOS, dtype=np.int64), targets[:-1]], axis=0)
    return inputs, targets, mask


def token_log_probs(model: GeneratorModel, streams: Sequence[Sequence[int]]):
    """Recorded log-probabilities of each stream token; returns (Tensor (T, B), mask (T, B))."""
    inputs, targets, mask = _pad_streams(streams)
    T, B = targets.shape
    Hs = model.gru.sequence(model.embed(inputs), mask)
    logits = ops.add(model.out(Hs), model.logit_mask(_sentence_lengths(inputs)))
    logp = ops.pick(ops.log_softmax(ops.reshape(logits, (T * B, model.vocab_size))), targets.reshape(-1))
    return ops.reshape(logp, (T, B)), mask


def mle_loss(model: GeneratorModel, streams: Sequence[Sequence[int]]):
    """Mean per-token negative log-likelihood."""
    logp, mask = token_log_probs(model, streams)
    return ops.mul(ops.sum(ops.mul(logp, mask)), -1.0 / mask.sum())


def mean_nll(model: GeneratorModel, data: Sequence[Paragraph], batch_size: int = 64) -> float:
    total, count = 0.0, 0.0
    with nn.no_grad():
        for i in range(0, len(data), batch_size):
            streams = [paragraph_stream(p) for p in data[i:i + batch_size]]
            logp, mask = token_log_probs(model, streams)
            total -= float((logp.data * mask).sum())
            count += float(mask.sum())
    return total / count


def mle_pretrain(model: GeneratorModel, data: Sequence[Paragraph], epochs: int, lr: float = 1e-2,
                 batch_size: int = 32, seed: int = 0, heldout: Sequence[Paragraph] | None = None,
                 opt: nn.Adam | None = None) -> list[dict]:
    """Teacher-forced maximum likelihood; returns one log record per epoch."""
    if not data:
        raise UsageError("mle_pretrain needs a nonempty corpus")
    opt = opt or nn.Adam(model.store, lr=lr)
    history = []
    for epoch in range(epochs):
        total, n = 0.0, 0
        for batch in batch_paragraphs(list(data), batch_size, seed + epoch):
            loss = mle_loss(model, [paragraph_stream(p) for p in batch.paragraphs])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"generator MLE diverged at epoch {epoch + 1} (loss={value})")
            loss.backward()
            opt.step(lr)
            total += value
            n += 1
        rec = {"epoch": epoch + 1, "train_nll": total / n}
        if heldout:
            rec["heldout_nll"] = mean_nll(model, heldout)
        log.info("mle epoch %d %s", epoch + 1, rec)
        history.append(rec)
    return history


# ---------------------------------------------------------------------------
# sampling and rollouts


def _draw(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row; zero-probability entries are never returned."""
    c = np.cumsum(np.exp(logp), axis=1)
    c /= c[:, -1:]
    u = rng.random(len(c))
    return np.minimum((c <= u[:, None]).sum(axis=1), c.shape[1] - 1)


def _continue(model: GeneratorModel, h: np.ndarray, tok: np.ndarray, sent_len: np.ndarray,
              seps_left: np.ndarray, budget: np.ndarray, rng: np.random.Generator, keep_states: bool = False):
    """Sample forward from ``K`` states until each row has emitted ``seps_left`` separators or used its budget.

    ``h`` is the state *before* consuming ``tok``. Returns per-row token lists, log-prob lists and
    (optionally) the state that predicted each token.
    """
    K = len(tok)
    toks = [[] for _ in range(K)]
    lps = [[] for _ in range(K)]
    sts = [[] for _ in range(K)]
    active = np.flatnonzero((seps_left > 0) & (budget > 0))
    h, tok, L = h.copy(), tok.copy(), sent_len.copy()
    seps_left, budget = seps_left.copy(), budget.copy()
    while active.size:
        h[active] = model.np_step(tok[active], h[active])
        logp = model.np_log_probs(h[active], L[active])
        nxt = _draw(logp, rng)
        chosen = logp[np.arange(active.size), nxt]
        for j, r in enumerate(active):
            toks[r].append(int(nxt[j]))
            lps[r].append(float(chosen[j]))
            if keep_states:
                sts[r].append(h[r].copy())
        is_sep = nxt == SEP
        tok[active] = nxt
        L[active] = np.where(is_sep, 0, L[active] + 1)
        seps_left[active] -= is_sep
        budget[active] -= 1
        active = active[(seps_left[active] > 0) & (budget[active] > 0)]
    return toks, lps, sts


def sample_batch(model: GeneratorModel, n: int, rng: np.random.Generator, s_max: int = 5,
                 max_tokens: int | None = None) -> list[GenerationResult]:
    """Sample ``n`` paragraph streams of up to ``s_max`` sentences."""
    max_tokens = s_max * (model.max_len + 1) if max_tokens is None else max_tokens
    h = np.zeros((n, model.hidden), dtype=DTYPE)
    toks, lps, sts = _continue(
        model, h, np.full(n, BOS), np.zeros(n, np.int64), np.full(n, s_max), np.full(n, max_tokens), rng,
        keep_states=True,
    )
    return [GenerationResult(t, np.asarray(lp), np.asarray(st).reshape(len(t), model.hidden))
            for t, lp, st in zip(toks, lps, sts)]


def sample_paragraph(model: GeneratorModel, max_tokens: int | None = None, s_max: int = 5,
                     seed: int = 0) -> GenerationResult:
    return sample_batch(model, 1, np.random.default_rng(seed), s_max, max_tokens)[0]


def _state_after(model: GeneratorModel, prefix: Sequence[int]) -> np.ndarray:
    """Hidden state after consuming ``<bos>`` and all but the last prefix token."""
    h = np.zeros((1, model.hidden), dtype=DTYPE)
    for t in [BOS, *prefix[:-1]]:
        h = model.np_step(np.array([t]), h)
    return h[0]


def rollout(model: GeneratorModel, prefix: Sequence[int], n_rollouts: int, seed: int,
            until: str = "paragraph", s_max: int = 5, max_tokens: int | None = None) -> list[list[int]]:
    """Complete ``prefix`` ``n_rollouts`` times, to the end of its sentence or of the paragraph."""
    if len(prefix) < 1:
        raise UsageError("rollout prefix must contain at least one token")
    if until not in ("sentence", "paragraph"):
        raise UsageError(f"unknown rollout horizon {until!r}")
    if n_rollouts == 0:
        return []
    max_tokens = s_max * (model.max_len + 1) if max_tokens is None else max_tokens
    prefix = [int(t) for t in prefix]
    sent_len, seps = _prefix_state(prefix)
    if until == "sentence":
        seps_left = 0 if prefix[-1] == SEP else 1
    else:
        seps_left = max(s_max - seps, 0)
    budget = max_tokens - len(prefix)
    if seps_left == 0 or budget <= 0:
        return [list(prefix) for _ in range(n_rollouts)]
    h = np.tile(_state_after(model, prefix), (n_rollouts, 1))
    toks, _, _ = _continue(
        model, h, np.full(n_rollouts, prefix[-1]), np.full(n_rollouts, sent_len),
        np.full(n_rollouts, seps_left), np.full(n_rollouts, budget), np.random.default_rng(seed),
    )
    return [prefix + t for t in toks]


def complete_sentences(model: GeneratorModel, states: np.ndarray, last_tok: np.ndarray, sent_len: np.ndarray,
                       rng: np.random.Generator) -> list[list[int]]:
    """Batched sentence completion from recorded states (the state that predicted ``last_tok``).

    Returns the sampled continuation of each row, ending with ``<sep>``.
    """
    K = len(last_tok)
    toks, _, _ = _continue(model, states, last_tok, sent_len, np.ones(K, np.int64),
                           np.full(K, model.max_len + 1), rng)
    return toks


# ---------------------------------------------------------------------------
# policy gradient


def policy_gradient_loss(model: GeneratorModel, streams: Sequence[Sequence[int]],
                         rewards: Sequence[np.ndarray], baseline: bool = False):
    """``-(1/B) sum_b sum_t Q[b,t] log G(y_t | y_<t)``; minimizing it ascends the expected reward."""
    if len(streams) != len(rewards):
        raise UsageError(f"{len(streams)} sequences but {len(rewards)} reward rows")
    for s, q in zip(streams, rewards):
        if len(s) != len(q):
            raise UsageError(f"sequence of length {len(s)} has {len(q)} rewards")
    logp, mask = token_log_probs(model, streams)
    Q = np.zeros(mask.shape, dtype=DTYPE)
    for b, q in enumerate(rewards):
        Q[:len(q), b] = q
    if baseline:
        Q = (Q - (Q * mask).sum() / mask.sum()) * mask
    return ops.mul(ops.sum(ops.mul(logp, Q)), -1.0 / len(streams))


def policy_gradient_step(model: GeneratorModel, streams: Sequence[Sequence[int]], rewards: Sequence[np.ndarray],
                         opt, lr: float | None = None, baseline: bool = False) -> float:
    loss = policy_gradient_loss(model, streams, rewards, baseline)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"policy-gradient loss is not finite ({value})")
    loss.backward()
    opt.step(lr)
    return value


def two_token_bandit(steps: int = 200, lr: float = 1.0, seed: int = 0) -> list[float]:
    """Exact-gradient REINFORCE on a single-step, two-token generator.

    Token 0 pays 1, token 1 pays 0; the output layer starts at zero so the
    initial expected reward is exactly 0.5. Returns the expected reward before
    each step and after the last one.
    """
    model = GeneratorModel(2, emb_dim=2, hidden=2, seed=seed, constrained=False)
    model.out.W.data[:] = 0.0
    model.out.b.data[:] = 0.0
    payoff = np.array([1.0, 0.0])

    def expected() -> float:
        with nn.no_grad():
            logp, _ = token_log_probs(model, [[0], [1]])
        return float(np.exp(logp.data[0]) @ payoff)

    trace = [expected()]
    for _ in range(steps):
        with nn.no_grad():
            p = np.exp(token_log_probs(model, [[0], [1]])[0].data[0])
        # sum_a p(a) r(a) grad log p(a), with the probability weights held fixed
        loss = policy_gradient_loss(model, [[0], [1]], [np.array([2 * p[0] * payoff[0]]),
                                                          np.array([2 * p[1] * payoff[1]])])
        loss.backward()
        nn.sgd_step(model.store, lr)
        trace.append(expected())
    return trace
