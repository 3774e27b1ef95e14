"""Fast built-in checks: gradients, feature invariants, and the bandit sanity run."""

from __future__ import annotations

import time

import numpy as np

from .corpus import SEP
from .d_general import DGeneralModel
from .d_special import DSpecialModel
from .features import LengthStats, default_analyzer
from .generator import GeneratorModel, policy_gradient_loss, two_token_bandit
from .nn.gradcheck import check_gradients

Check = tuple[str, bool, str]


def _grad(name: str, loss_fn, store) -> Check:
    res = check_gradients(loss_fn, dict(store.items()))
    return name, bool(res.ok(1e-3)), f"max_rel_error={res.max_rel_error:.2e}"


def gradient_checks() -> list[Check]:
    gen = GeneratorModel(12, emb_dim=6, hidden=5, max_len=6, seed=0)
    streams = [[5, 6, SEP, 7, SEP], [8, SEP]]
    rewards = [np.array([0.3, 0.9, 0.1, 0.5, 0.7]), np.array([0.2, 0.6])]
    out = [_grad("grad-generator", lambda: policy_gradient_loss(gen, streams, rewards), gen.store)]

    dg = DGeneralModel(12, emb_dim=4, hidden=3, layers=2, proj_dim=4, seed=1)
    real, fake = [[(5, 6, 7), (8, 9)], [(5, 5)]], [[(3, 4, 5), (4,)]]
    for kind in ("bce", "expectation"):
        out.append(_grad(f"grad-dgeneral-{kind}", lambda k=kind: dg.loss(real, fake, k), dg.store))

    ds = DSpecialModel(seed=2)
    rng = np.random.default_rng(0)
    while True:
        pos, neg = rng.uniform(size=(3, 5)), rng.uniform(size=(2, 5))
        if np.abs(np.vstack([pos, neg]) @ ds.fc1.W.data + ds.fc1.b.data).min() > 1e-2:
            break
    out.append(_grad("grad-dspecial", lambda: ds.loss(pos, neg), ds.store))
    return out


def feature_checks(n: int = 2000, seed: int = 0) -> list[Check]:
    lex = default_analyzer()
    words = sorted(lex.lexicon)[:300] + ["the", "plan", "not", "very", "!", "but", "."]
    rng = np.random.default_rng(seed)
    sents = [list(rng.choice(words, size=rng.integers(1, 15))) for _ in range(n)]
    P = np.array([lex.proportions(s) for s in sents])
    sums_ok = bool(np.all(np.abs(P.sum(axis=1) - 1.0) <= 1e-9))
    range_ok = bool(P.min() >= 0.0 and P.max() <= 1.0)
    lengths = [len(s) for s in sents]
    pen = LengthStats.of(lengths, 7).penalty(lengths)
    ends_ok = bool(pen.min() == 0.0 and pen.max() == 1.0 and np.all((pen >= 0) & (pen <= 1)))
    return [("sentiment-sums-to-one", sums_ok and range_ok, f"n={n}"),
            ("length-penalty-range", ends_ok, f"min={pen.min()} max={pen.max()}")]


def bandit_check() -> Check:
    t = time.perf_counter()
    trace = two_token_bandit(200)
    dt = time.perf_counter() - t
    ok = bool(abs(trace[0] - 0.5) < 1e-12 and max(trace) > 0.9 and dt < 10.0)
    return "bandit", ok, f"start={trace[0]:.3f} end={trace[-1]:.3f} seconds={dt:.2f}"


def run_all() -> list[Check]:
    return [*gradient_checks(), *feature_checks(), bandit_check()]
