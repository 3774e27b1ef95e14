import numpy as np
import pytest

from udgan.corpus import SEP
from udgan.generator import GeneratorModel, sample_batch
from udgan.nn import ConfigError
from udgan.trainer import (
    Clock, RewardContext, RewardTable, TrainingConfig, algorithm1, algorithm2, compute_rewards,
    updated_parameter_counts,
)


class ConstGeneral:
    def __init__(self, a):
        self.a = a
        self.seen = []

    def score_last(self, contexts):
        self.seen.extend(contexts)
        return np.full(len(contexts), self.a)


class ConstSpecial:
    def __init__(self, b):
        self.b = b

    def score(self, X):
        return np.full(len(X), self.b)


class LengthGeneral:
    """Scores a sentence by its length so rollouts produce spread."""

    def score_last(self, contexts):
        return np.array([min(len(c[-1]) / 10.0, 1.0) for c in contexts])


@pytest.fixture(scope="module")
def setup(small_corpus, positive_spec):
    _, vocab, data = small_corpus
    ctx = RewardContext.build(vocab, data, positive_spec)
    gen = GeneratorModel(len(vocab), 8, 8, max_len=12, seed=0)
    results = sample_batch(gen, 3, np.random.default_rng(0), s_max=2)
    return gen, ctx, results


# ---------------------------------------------------------------- config


def test_config_defaults_and_validation():
    c = TrainingConfig()
    assert (c.adversarial_epochs, c.generator_steps, c.dgeneral_steps, c.dspecial_steps) == (20, 1, 4, 2)
    assert c.mix == 0.8 and c.n_rollouts >= 1
    for bad in ({"mix": 1.5}, {"mix": -0.1}, {"n_rollouts": 0}, {"dgeneral_steps": -1},
                {"dg_loss": "hinge"}, {"use_dspecial": False}):
        with pytest.raises(ConfigError):
            TrainingConfig(**bad)
    TrainingConfig(use_dspecial=False, mix=1.0)


def test_config_text_roundtrip():
    c = TrainingConfig(mix=0.5, seed=7, baseline=True, dg_loss="expectation")
    assert TrainingConfig.parse(c.dumps()) == c
    parsed = TrainingConfig.parse("# comment\nmix = 0.25  # trailing\n\nbatch_size=3\n")
    assert parsed.mix == 0.25 and parsed.batch_size == 3 and parsed.seed == 0
    for text in ("nonsense", "unknown_key=1", "batch_size=abc", "baseline=maybe"):
        with pytest.raises(ConfigError):
            TrainingConfig.parse(text)


# ---------------------------------------------------------------- rewards


@pytest.mark.parametrize("mix", [0.0, 0.8, 1.0])
def test_constant_discriminators_give_exact_mixture(setup, mix):
    gen, ctx, results = setup
    a, b = 0.3, 0.9
    cfg = TrainingConfig(mix=mix, n_rollouts=3)
    table = compute_rewards(gen, ConstGeneral(a), ConstSpecial(b), ctx, results, cfg, np.random.default_rng(1))
    expected = mix * a + (1 - mix) * b
    for r, q in zip(results, table.rows):
        assert q.shape == (len(r.tokens),)
        assert np.all(np.abs(q - expected) <= 1e-12)


def test_rewards_lie_in_unit_interval_and_shape(setup):
    gen, ctx, results = setup
    dg = LengthGeneral()
    table = compute_rewards(gen, dg, ConstSpecial(0.5), ctx, results, TrainingConfig(n_rollouts=2),
                            np.random.default_rng(2))
    q = np.concatenate(table.rows)
    assert q.min() >= 0.0 and q.max() <= 1.0


def test_sentence_end_scored_directly_with_paragraph_context(setup):
    gen, ctx, results = setup
    r = results[0]
    dg = LengthGeneral()
    table = compute_rewards(gen, dg, None, ctx, [r], TrainingConfig(mix=1.0, use_dspecial=False, n_rollouts=2),
                            np.random.default_rng(3))
    seps = [t for t, tok in enumerate(r.tokens) if tok == SEP]
    for s, t in enumerate(seps):
        assert table.rows[0][t] == pytest.approx(min(len(r.sentences[s]) / 10.0, 1.0))


def test_general_discriminator_sees_preceding_sentences(setup):
    gen, ctx, results = setup
    dg = ConstGeneral(0.5)
    multi = [r for r in results if len(r.sentences) > 1] or results
    compute_rewards(gen, dg, None, ctx, multi, TrainingConfig(mix=1.0, use_dspecial=False, n_rollouts=1),
                    np.random.default_rng(4))
    firsts = {tuple(r.sentences[0]) for r in multi}
    assert any(len(c) > 1 and tuple(c[0]) in firsts for c in dg.seen)


def test_mix_without_special_discriminator_is_rejected(setup):
    gen, ctx, results = setup
    with pytest.raises(ConfigError):
        compute_rewards(gen, ConstGeneral(0.5), None, ctx, results, TrainingConfig(), np.random.default_rng(0))


def test_reward_table_rejects_out_of_range():
    with pytest.raises(ValueError):
        RewardTable([np.array([0.2, 1.5])])


def test_more_rollouts_reduce_reward_variance(setup):
    gen, ctx, results = setup
    r = results[0]
    dg = LengthGeneral()

    def spread(n):
        cfg = TrainingConfig(mix=1.0, use_dspecial=False, n_rollouts=n)
        draws = [compute_rewards(gen, dg, None, ctx, [r], cfg, np.random.default_rng(k)).rows[0] for k in range(20)]
        return np.var(np.stack(draws), axis=0).mean()

    assert spread(64) < spread(1) / 4


# ---------------------------------------------------------------- clock


def test_clock_update_total_excludes_sampling():
    c = Clock()
    c.totals.update(pretrain=1.0, generator=2.0, dgeneral=3.0, dspecial=0.5, sampling=9.0, rewards=9.0)
    assert c.report()["update_total"] == pytest.approx(6.5)


# ---------------------------------------------------------------- algorithms


@pytest.fixture(scope="module")
def initial_run(small_corpus, positive_spec, tmp_path_factory):
    _, vocab, data = small_corpus
    cfg = TrainingConfig(
        adversarial_epochs=2, n_rollouts=2, batch_size=4, g_emb=8, g_hidden=8, g_pretrain_epochs=1,
        dg_emb=8, dg_hidden=6, dg_layers=1, dg_proj=8, dg_pretrain_steps=2, ds_hidden=4, ds_pretrain_steps=2,
    )
    out = tmp_path_factory.mktemp("alg1")
    return cfg, out, algorithm1(cfg, data, vocab, positive_spec, out_dir=out)


def test_initial_schedule_step_counts(initial_run):
    cfg, _, res = initial_run
    assert res.step_counts() == {1: {"generator": 1, "dgeneral": 4, "dspecial": 2},
                                 2: {"generator": 1, "dgeneral": 4, "dspecial": 2}}
    assert any("generator_steps=1 dgeneral_steps=4 dspecial_steps=2" in line for line in res.log_lines())


def test_initial_run_writes_checkpoints_and_timing(initial_run):
    _, out, res = initial_run
    for name in ("generator", "dgeneral", "dspecial"):
        assert (out / f"{name}.ckpt").exists()
        assert res.checkpoints[name]["sha256"]
    t = res.timing
    assert t["update_total"] == pytest.approx(t["pretrain"] + t["generator"] + t["dgeneral"] + t["dspecial"])
    assert all(v >= 0 for v in t.values())


def test_zero_epochs_still_writes_checkpoints(small_corpus, positive_spec, tiny_cfg, tmp_path):
    _, vocab, data = small_corpus
    res = algorithm1(tiny_cfg.replace(adversarial_epochs=0), data, vocab, positive_spec, out_dir=tmp_path)
    assert res.step_counts() == {}
    assert {p.name for p in tmp_path.iterdir()} >= {"generator.ckpt", "dgeneral.ckpt", "dspecial.ckpt"}


def test_runs_are_deterministic(small_corpus, positive_spec, tiny_cfg, tmp_path):
    _, vocab, data = small_corpus
    cfg = tiny_cfg.replace(adversarial_epochs=1)
    a = algorithm1(cfg, data, vocab, positive_spec, out_dir=tmp_path / "a")
    b = algorithm1(cfg, data, vocab, positive_spec, out_dir=tmp_path / "b")
    for name in ("generator", "dgeneral", "dspecial"):
        assert (tmp_path / "a" / f"{name}.ckpt").read_bytes() == (tmp_path / "b" / f"{name}.ckpt").read_bytes()
    assert a.checkpoints["generator"]["sha256"] == b.checkpoints["generator"]["sha256"]


def test_followup_keeps_general_discriminator_frozen(initial_run, small_corpus, positive_spec, tmp_path):
    cfg, out, _ = initial_run
    _, vocab, data = small_corpus
    before = (out / "dgeneral.ckpt").read_bytes()
    res = algorithm2(cfg.replace(seed=3), data, vocab, positive_spec, out / "dgeneral.ckpt", out_dir=tmp_path)
    assert (out / "dgeneral.ckpt").read_bytes() == before
    assert res.dgeneral_hash_loaded is not None and res.dgeneral_hash_after is not None
    assert res.step_counts() == {1: {"generator": 1, "dgeneral": 0, "dspecial": 2},
                                 2: {"generator": 1, "dgeneral": 0, "dspecial": 2}}
    assert res.timing["dgeneral"] == 0.0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["dspecial.ckpt", "generator.ckpt"]


def test_followup_rejects_mismatched_checkpoint(initial_run, small_corpus, positive_spec):
    cfg, out, _ = initial_run
    _, vocab, data = small_corpus
    with pytest.raises(ConfigError):
        algorithm2(cfg.replace(dg_hidden=7), data, vocab, positive_spec, out / "dgeneral.ckpt")


def test_followup_from_existing_generator(initial_run, small_corpus, positive_spec):
    cfg, out, _ = initial_run
    _, vocab, data = small_corpus
    c = cfg.replace(followup_pretrain=False, adversarial_epochs=1)
    res = algorithm2(c, data, vocab, positive_spec, out / "dgeneral.ckpt", generator_init=out / "generator.ckpt")
    assert res.pretrain_log == []
    with pytest.raises(ConfigError):
        algorithm2(c, data, vocab, positive_spec, out / "dgeneral.ckpt")


def test_ablation_runs_without_special_discriminator(initial_run, small_corpus, positive_spec):
    cfg, out, _ = initial_run
    _, vocab, data = small_corpus
    res = algorithm2(cfg.replace(mix=1.0, use_dspecial=False, adversarial_epochs=1), data, vocab, positive_spec,
                     out / "dgeneral.ckpt")
    assert res.dspecial is None
    assert res.step_counts()[1]["dspecial"] == 0


def test_followup_updates_under_ten_percent_of_parameters(small_corpus):
    _, vocab, _ = small_corpus
    counts = updated_parameter_counts(TrainingConfig(), len(vocab))
    assert counts["followup"] < 0.10 * counts["initial"]
