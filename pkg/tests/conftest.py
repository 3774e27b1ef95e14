import pytest

from udgan.corpus import UserSpec, load_corpus
from udgan.synthetic import DEFAULT_TOPIC, make_corpus, write_corpus
from udgan.trainer import TrainingConfig


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """40 paragraphs x 5 sentences = 200 synthetic sentences."""
    path = write_corpus(tmp_path_factory.mktemp("corpus") / "small.txt", make_corpus(0, n_paragraphs=40))
    vocab, data = load_corpus(path)
    return path, vocab, data


@pytest.fixture(scope="session")
def positive_spec(small_corpus):
    return UserSpec.from_text(small_corpus[1], DEFAULT_TOPIC, "positive")


@pytest.fixture
def tiny_cfg():
    return TrainingConfig(
        adversarial_epochs=2, n_rollouts=2, batch_size=4, g_emb=8, g_hidden=8, g_pretrain_epochs=1,
        dg_emb=8, dg_hidden=6, dg_layers=1, dg_proj=8, dg_pretrain_steps=2, ds_hidden=4, ds_pretrain_steps=2,
    )
