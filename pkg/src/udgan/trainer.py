"""Initial and follow-up adversarial training.

Initial training builds all three networks: MLE-pretrain the generator,
pretrain both discriminators, then alternate generator policy-gradient
steps with discriminator updates. Follow-up training loads a frozen
general discriminator and only rebuilds the generator and the special
discriminator for a new topic/sentiment.

Only gradient work (taped forward, backward, optimizer update) is counted as
update time. Sampling, rollouts and reward scoring go to separate clocks.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import nn
from .corpus import SEP, Paragraph, UserSpec, Vocabulary, sample_paragraphs
from .d_general import DGeneralModel
from .d_general import train_step as dgeneral_step
from .d_special import DSpecialModel
from .d_special import train_step as dspecial_step
from .features import LengthStats, LexiconSentiment, TfidfModel, default_analyzer, feature_matrix, synthetic_target
from .generator import (
    GenerationResult, GeneratorModel, complete_sentences, mle_pretrain, paragraph_stream, policy_gradient_step,
    sample_batch,
)
from .nn.autograd import ConfigError
from .nn.checkpoint import dumps, file_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    adversarial_epochs: int = 20
    generator_steps: int = 1
    dgeneral_steps: int = 4
    dspecial_steps: int = 2
    mix: float = 0.8
    n_rollouts: int = 8
    s_max: int = 5
    max_len: int = 45
    batch_size: int = 16
    # generator
    g_emb: int = 32
    g_hidden: int = 32
    g_pretrain_epochs: int = 15
    g_pretrain_lr: float = 1e-2
    g_pretrain_batch: int = 32
    g_lr: float = 1e-2
    baseline: bool = False
    # general discriminator
    dg_emb: int = 128
    dg_hidden: int = 64
    dg_layers: int = 3
    dg_proj: int = 128
    dg_pretrain_steps: int = 150
    dg_lr: float = 1e-3
    dg_loss: str = "bce"
    # special discriminator
    ds_hidden: int = 32
    ds_pretrain_steps: int = 20
    ds_lr: float = 2e-3
    use_dspecial: bool = True
    # follow-up
    followup_pretrain: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mix <= 1.0:
            raise ConfigError(f"mix (lambda) must be in [0, 1], got {self.mix}")
        for k in ("adversarial_epochs", "generator_steps", "dgeneral_steps", "dspecial_steps",
                  "g_pretrain_epochs", "dg_pretrain_steps", "ds_pretrain_steps"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be >= 0")
        for k in ("n_rollouts", "s_max", "max_len", "batch_size", "g_pretrain_batch"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")
        if self.dg_loss not in ("bce", "expectation"):
            raise ConfigError(f"unknown dg_loss {self.dg_loss!r}")
        if not self.use_dspecial and self.mix != 1.0:
            raise ConfigError("without the special discriminator the mix must be 1")

    def replace(self, **kw) -> "TrainingConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dgeneral_config(self, vocab_size: int) -> dict:
        return {"vocab_size": vocab_size, "emb_dim": self.dg_emb, "hidden": self.dg_hidden,
                "layers": self.dg_layers, "proj_dim": self.dg_proj}

    @classmethod
    def parse(cls, text: str, base: "TrainingConfig | None" = None) -> "TrainingConfig":
        """``key=value`` lines; ``#`` starts a comment. Unknown keys are an error."""
        base = base or cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            kw[key] = _coerce(key, types[key], value)
        return base.replace(**kw)

    @classmethod
    def from_file(cls, path, base: "TrainingConfig | None" = None) -> "TrainingConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"), base)

    def dumps(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_dict().items())


def _coerce(key: str, typ: str, value: str):
    try:
        if typ == "bool":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        return value
    except ValueError as e:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {typ}") from e


def _fmt(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


# ---------------------------------------------------------------------------
# rewards


class SentenceScorer(Protocol):
    def score_last(self, contexts: Sequence[Paragraph]) -> np.ndarray: ...


class FeatureScorer(Protocol):
    def score(self, X) -> np.ndarray: ...


@dataclass
class RewardContext:
    """What the special discriminator needs to describe a sentence against the user's request."""

    vocab: Vocabulary
    spec: UserSpec
    tfidf: TfidfModel
    lexicon: LexiconSentiment

    @classmethod
    def build(cls, vocab: Vocabulary, corpus: Sequence[Paragraph], spec: UserSpec,
              lexicon: LexiconSentiment | None = None) -> "RewardContext":
        tfidf = TfidfModel.fit(s for p in corpus for s in p)
        return cls(vocab, spec, tfidf, lexicon or default_analyzer())

    def features(self, sentences: Sequence[Sequence[int]], stats: LengthStats) -> np.ndarray:
        return feature_matrix(self.tfidf, self.lexicon, self.vocab.itos, self.spec.topic, sentences,
                              stats.penalty([len(s) for s in sentences]))

    def length_stats(self, sentences: Sequence[Sequence[int]]) -> LengthStats:
        return LengthStats.of([len(s) for s in sentences], len(self.spec.topic))

    def positives(self, n: int) -> np.ndarray:
        return synthetic_target(self.spec.sentiment, n)


@dataclass
class RewardTable:
    rows: list[np.ndarray]

    def __post_init__(self):
        for q in self.rows:
            if q.size and (q.min() < 0.0 or q.max() > 1.0):
                raise ValueError("rewards must lie in [0, 1]")


def compute_rewards(gen: GeneratorModel, dg: SentenceScorer, ds: FeatureScorer | None, ctx: RewardContext,
                    results: Sequence[GenerationResult], cfg: TrainingConfig,
                    rng: np.random.Generator) -> RewardTable:
    """Per-token Q = mix * D_general + (1 - mix) * D_special, averaged over sentence rollouts.

    A token that closes its sentence (or ends a truncated stream) is scored
    directly; any other token is scored through ``n_rollouts`` completions of
    its sentence. The general discriminator sees the completed sentence after
    the paragraph's earlier sentences.
    """
    if ds is None and cfg.mix != 1.0:
        raise ConfigError("rewards without a special discriminator require mix = 1")
    n_roll = cfg.n_rollouts
    sentences = [r.sentences for r in results]
    direct: list[tuple[int, int, int]] = []  # (result, token position, sentence index)
    pending: list[tuple[int, int, int, int]] = []  # (result, token position, sentence index, words so far)
    for b, r in enumerate(results):
        sid = r.sentence_ids()
        words = 0
        for t, tok in enumerate(r.tokens):
            if tok != SEP:
                words += 1
            if tok == SEP or t == len(r.tokens) - 1:
                direct.append((b, t, int(sid[t])))
                words = 0
            else:
                pending.append((b, t, int(sid[t]), words))

    queries = [(b, s, sentences[b][s]) for b, _, s in direct]
    if pending:
        states = np.repeat(np.stack([results[b].states[t] for b, t, _, _ in pending]), n_roll, axis=0)
        last_tok = np.repeat([results[b].tokens[t] for b, t, _, _ in pending], n_roll)
        sent_len = np.repeat([n for *_, n in pending], n_roll)
        tails = complete_sentences(gen, states, last_tok, sent_len, rng)
        for k, (b, t, s, n) in enumerate(pending):
            head = tuple(results[b].tokens[t - n + 1:t + 1])
            queries.extend((b, s, head + tuple(tail[:-1])) for tail in tails[k * n_roll:(k + 1) * n_roll])

    contexts = [tuple(sentences[b][:s]) + (sent,) for b, s, sent in queries]
    batch_sentences = [s for p in sentences for s in p]
    scores = _mixed_scores(dg, ds, ctx, contexts, [q[2] for q in queries], batch_sentences, cfg.mix)
    rows = [np.zeros(len(r.tokens)) for r in results]
    for i, (b, t, _) in enumerate(direct):
        rows[b][t] = scores[i]
    if pending:
        rolled = scores[len(direct):].reshape(len(pending), n_roll).mean(axis=1)
        for k, (b, t, _, _) in enumerate(pending):
            rows[b][t] = rolled[k]
    return RewardTable(rows)


def _mixed_scores(dg, ds, ctx: RewardContext, contexts, sentences, batch_sentences, mix: float) -> np.ndarray:
    """Score every (context, sentence) query once per distinct input."""
    empty = [i for i, s in enumerate(sentences) if len(s) == 0]
    if empty:
        raise ValueError("cannot score an empty sentence")
    uniq_ctx: dict = {}
    ctx_idx = np.array([uniq_ctx.setdefault(c, len(uniq_ctx)) for c in contexts])
    general = np.zeros(len(contexts))
    if mix > 0.0:
        general = np.asarray(dg.score_last([list(c) for c in uniq_ctx]))[ctx_idx]
    special = np.zeros(len(contexts))
    if mix < 1.0:
        uniq_s: dict = {}
        s_idx = np.array([uniq_s.setdefault(s, len(uniq_s)) for s in sentences])
        X = ctx.features(list(uniq_s), ctx.length_stats(batch_sentences))
        special = np.asarray(ds.score(X))[s_idx]
    return mix * general + (1.0 - mix) * special


# ---------------------------------------------------------------------------
# bookkeeping


class Clock:
    """Named wall-clock accumulators."""

    UPDATE_KEYS = ("pretrain", "generator", "dgeneral", "dspecial")

    def __init__(self):
        self.totals: dict[str, float] = {}

    @contextmanager
    def measure(self, key: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[key] = self.totals.get(key, 0.0) + time.perf_counter() - t0

    def report(self) -> dict[str, float]:
        out = {k: self.totals.get(k, 0.0) for k in self.UPDATE_KEYS + ("sampling", "rewards")}
        out["update_total"] = sum(out[k] for k in self.UPDATE_KEYS)
        return out


@dataclass
class RunResult:
    generator: GeneratorModel
    dgeneral: DGeneralModel
    dspecial: DSpecialModel | None
    timing: dict
    events: list[dict]
    pretrain_log: list[dict]
    config: TrainingConfig
    checkpoints: dict = field(default_factory=dict)  # name -> {"path", "sha256"}
    dgeneral_hash_loaded: str | None = None
    dgeneral_hash_after: str | None = None

    def step_counts(self) -> dict[int, dict[str, int]]:
        counts: dict[int, dict[str, int]] = {}
        for e in self.events:
            if e["epoch"] > 0:
                c = counts.setdefault(e["epoch"], {"generator": 0, "dgeneral": 0, "dspecial": 0})
                c[e["stage"]] += 1
        return counts

    def log_lines(self) -> list[str]:
        lines = [f"stage={e['stage']} epoch={e['epoch']} loss={e['loss']:.6f}" for e in self.events]
        for epoch, c in sorted(self.step_counts().items()):
            lines.append(f"epoch={epoch} generator_steps={c['generator']} dgeneral_steps={c['dgeneral']} "
                         f"dspecial_steps={c['dspecial']}")
        return lines

    def timing_lines(self) -> list[str]:
        return [f"{k}={v:.6f}" for k, v in self.timing.items()]


def _state_hash(model) -> str:
    return hashlib.sha256(dumps("d-general", model.store.state(), model.layer_specs(), model.seed,
                                model.config())).hexdigest()


class _Run:
    """Shared state of one training run."""

    def __init__(self, cfg: TrainingConfig, corpus: Sequence[Paragraph], vocab: Vocabulary, spec: UserSpec):
        if not corpus:
            raise ValueError("training corpus is empty")
        self.cfg, self.corpus, self.vocab = cfg, list(corpus), vocab
        self.ctx = RewardContext.build(vocab, corpus, spec)
        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        self.rng_sample, self.rng_data, self.rng_roll, _ = (np.random.default_rng(s) for s in seeds)
        self.clock = Clock()
        self.events: list[dict] = []

    def new_generator(self) -> GeneratorModel:
        c = self.cfg
        return GeneratorModel(len(self.vocab), c.g_emb, c.g_hidden, c.max_len, seed=c.seed)

    def new_dspecial(self) -> DSpecialModel:
        return DSpecialModel(self.cfg.ds_hidden, seed=self.cfg.seed + 2)

    def sample(self, gen: GeneratorModel, n: int) -> list[GenerationResult]:
        with self.clock.measure("sampling"):
            return sample_batch(gen, n, self.rng_sample, self.cfg.s_max)

    def real(self) -> list[Paragraph]:
        return sample_paragraphs(self.corpus, self.cfg.batch_size, self.rng_data)

    def record(self, stage: str, epoch: int, loss: float) -> None:
        self.events.append({"stage": stage, "epoch": epoch, "loss": float(loss)})

    def pretrain_generator(self, gen: GeneratorModel) -> list[dict]:
        c = self.cfg
        with self.clock.measure("pretrain"):
            return mle_pretrain(gen, self.corpus, c.g_pretrain_epochs, c.g_pretrain_lr, c.g_pretrain_batch, c.seed)

    def dspecial_batch(self, gen: GeneratorModel):
        fake = [s for r in self.sample(gen, self.cfg.batch_size) for s in r.sentences]
        with self.clock.measure("sampling"):
            neg = self.ctx.features(fake, self.ctx.length_stats(fake))
        return self.ctx.positives(len(neg)), neg

    def dgeneral_update(self, gen, dg, opt, stage_key: str, epoch: int) -> None:
        real = self.real()
        fake = [r.sentences for r in self.sample(gen, len(real))]
        with self.clock.measure(stage_key):
            loss = dgeneral_step(dg, opt, real, fake, kind=self.cfg.dg_loss)
        self.record("dgeneral", epoch, loss)

    def dspecial_update(self, gen, ds, opt, stage_key: str, epoch: int) -> None:
        pos, neg = self.dspecial_batch(gen)
        with self.clock.measure(stage_key):
            loss = dspecial_step(ds, opt, pos, neg)
        self.record("dspecial", epoch, loss)

    def generator_update(self, gen, dg, ds, opt, epoch: int) -> None:
        results = self.sample(gen, self.cfg.batch_size)
        with self.clock.measure("rewards"):
            table = compute_rewards(gen, dg, ds if self.cfg.use_dspecial else None, self.ctx, results,
                                    self.cfg, self.rng_roll)
        with self.clock.measure("generator"):
            loss = policy_gradient_step(gen, [r.tokens for r in results], table.rows, opt,
                                        baseline=self.cfg.baseline)
        self.record("generator", epoch, loss)
        self.events[-1]["mean_reward"] = float(np.mean(np.concatenate(table.rows)))


def _save(result: RunResult, out_dir, names: Sequence[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = {"generator": result.generator, "dgeneral": result.dgeneral, "dspecial": result.dspecial}
    for name in names:
        if models[name] is None:
            continue
        path = out / f"{name}.ckpt"
        result.checkpoints[name] = {"path": str(path), "sha256": models[name].save(path)}


def algorithm1(cfg: TrainingConfig, corpus: Sequence[Paragraph], vocab: Vocabulary, spec: UserSpec,
               out_dir=None) -> RunResult:
    """Initial training of the generator and both discriminators."""
    run = _Run(cfg, corpus, vocab, spec)
    gen = run.new_generator()
    dg = DGeneralModel(len(vocab), cfg.dg_emb, cfg.dg_hidden, cfg.dg_layers, cfg.dg_proj, seed=cfg.seed + 1)
    ds = run.new_dspecial() if cfg.use_dspecial else None

    stage = "pretrain-generator"
    try:
        pre_log = run.pretrain_generator(gen)
        stage = "pretrain-dgeneral"
        dg_opt = nn.Adam(dg.store, lr=cfg.dg_lr)
        for _ in range(cfg.dg_pretrain_steps):
            run.dgeneral_update(gen, dg, dg_opt, "pretrain", 0)
        stage = "pretrain-dspecial"
        ds_opt = nn.Adam(ds.store, lr=cfg.ds_lr) if ds else None
        for _ in range(cfg.ds_pretrain_steps if ds else 0):
            run.dspecial_update(gen, ds, ds_opt, "pretrain", 0)
        g_opt = nn.Adam(gen.store, lr=cfg.g_lr)
        for epoch in range(1, cfg.adversarial_epochs + 1):
            stage = f"adversarial-epoch-{epoch}"
            for _ in range(cfg.generator_steps):
                run.generator_update(gen, dg, ds, g_opt, epoch)
            for _ in range(cfg.dgeneral_steps):
                run.dgeneral_update(gen, dg, dg_opt, "dgeneral", epoch)
            for _ in range(cfg.dspecial_steps if ds else 0):
                run.dspecial_update(gen, ds, ds_opt, "dspecial", epoch)
            log.info("initial epoch %d done", epoch)
    except (nn.TrainingError, FloatingPointError) as e:
        raise nn.TrainingError(f"[{stage}] {e}") from e

    result = RunResult(gen, dg, ds, run.clock.report(), run.events, pre_log, cfg)
    if out_dir is not None:
        _save(result, out_dir, ("generator", "dgeneral", "dspecial"))
    return result


def algorithm2(cfg: TrainingConfig, corpus: Sequence[Paragraph], vocab: Vocabulary, spec: UserSpec,
               dgeneral_checkpoint, out_dir=None, generator_init=None) -> RunResult:
    """Follow-up training for a new request against a frozen general discriminator.

    With ``followup_pretrain`` off, the generator starts from ``generator_init``
    instead of being re-pretrained.
    """
    loaded_hash = file_hash(dgeneral_checkpoint)
    dg = DGeneralModel.load(dgeneral_checkpoint, expected=cfg.dgeneral_config(len(vocab)))
    frozen = dg.store.state()
    run = _Run(cfg, corpus, vocab, spec)
    gen = run.new_generator()
    ds = run.new_dspecial() if cfg.use_dspecial else None

    stage = "pretrain-generator"
    try:
        if cfg.followup_pretrain:
            pre_log = run.pretrain_generator(gen)
        else:
            if generator_init is None:
                raise ConfigError("followup_pretrain=false needs a generator checkpoint to start from")
            gen = GeneratorModel.load(generator_init)
            pre_log = []
        stage = "pretrain-dspecial"
        ds_opt = nn.Adam(ds.store, lr=cfg.ds_lr) if ds else None
        for _ in range(cfg.ds_pretrain_steps if ds else 0):
            run.dspecial_update(gen, ds, ds_opt, "pretrain", 0)
        g_opt = nn.Adam(gen.store, lr=cfg.g_lr)
        for epoch in range(1, cfg.adversarial_epochs + 1):
            stage = f"followup-epoch-{epoch}"
            for _ in range(cfg.generator_steps):
                run.generator_update(gen, dg, ds, g_opt, epoch)
            for _ in range(cfg.dspecial_steps if ds else 0):
                run.dspecial_update(gen, ds, ds_opt, "dspecial", epoch)
    except (nn.TrainingError, FloatingPointError) as e:
        raise nn.TrainingError(f"[{stage}] {e}") from e

    after = dg.store.state()
    if any(not np.array_equal(frozen[k], after[k]) for k in frozen):
        raise nn.TrainingError("general discriminator parameters changed during follow-up training")
    result = RunResult(gen, dg, ds, run.clock.report(), run.events, pre_log, cfg,
                       dgeneral_hash_loaded=loaded_hash, dgeneral_hash_after=_state_hash(dg))
    if out_dir is not None:
        _save(result, out_dir, ("generator", "dspecial"))
    return result


def updated_parameter_counts(cfg: TrainingConfig, vocab_size: int) -> dict[str, int]:
    """Parameters touched by gradient updates in initial vs follow-up training."""
    g = GeneratorModel(vocab_size, cfg.g_emb, cfg.g_hidden, cfg.max_len).num_params()
    d = DGeneralModel(vocab_size, cfg.dg_emb, cfg.dg_hidden, cfg.dg_layers, cfg.dg_proj).num_params()
    s = DSpecialModel(cfg.ds_hidden).num_params() if cfg.use_dspecial else 0
    return {"initial": g + d + s, "followup": g + s}


__all__ = [
    "Clock", "RewardContext", "RewardTable", "RunResult", "TrainingConfig", "algorithm1", "algorithm2",
    "compute_rewards", "paragraph_stream", "updated_parameter_counts",
]
