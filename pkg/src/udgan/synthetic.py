"""Seeded template grammar for the desk-scale corpus.

Paragraphs stick to one subject family. Each sentence draws a sentiment
class, which fills its adjective slots (usually two) and its optional
booster. One subject family (military withdrawal) supplies the default user
topic. The positive and negative adjectives come from the sentiment lexicon,
so topic relevance and sentiment are both learnable signals.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

TOPIC_FAMILY = (
    "troops soldiers military base forces border army convoy commanders patrol "
    "deployment navy pulled pull out indicated occurred days withdrew region"
).split()

FAMILIES = {
    "military": TOPIC_FAMILY,
    "economy": "market trade prices jobs tariffs economy bank tax budget exports investors wages "
               "factories rates inflation stocks firms sales loans industry".split(),
    "schools": "school teachers students education classes university exams campus lessons "
               "courses parents tuition grades degree curriculum library principal district "
               "scholarship semester".split(),
    "health": "hospital doctors patients clinic vaccine nurses medicine surgery treatment "
              "insurance virus symptoms beds pharmacy therapy diagnosis staff wards trials "
              "prescriptions".split(),
    "climate": "climate emissions carbon weather storm coast water rainfall drought floods "
               "temperatures glaciers forests fuel pollution rivers oceans wind solar farms".split(),
}

POSITIVE = ("good great happy excellent wonderful hopeful proud strong successful brilliant "
            "pleasant impressive beautiful fantastic glad grateful helpful peaceful safe "
            "generous honest encouraging confident").split()
NEGATIVE = ("bad terrible sad awful angry poor weak dangerous disappointing violent hostile "
            "cruel unfair tragic bitter painful").split()
NEUTRAL = ("new recent local federal national public current large small early late major "
           "regional annual daily foreign domestic official final second former western "
           "northern usual").split()

SUBJECTS = "officials people leaders residents experts analysts reporters observers voters".split()
VERBS = "announced reported noted suggested confirmed described discussed visited signed said".split()
PRESENT = "believes expects claims thinks says knows insists".split()
TIMES = "last week|this month|on DATE|after the vote|during the talks|in recent days|this year".split("|")
CONNECTORS = "and|but|so|meanwhile ,|also ,|then|still ,|in addition ,".split("|")
BOOSTERS = "very really extremely quite".split()
NAMES = "PERSON ORGANIZATION".split()

DEFAULT_TOPIC = ("the troops in LOCATION pulled out days after PERSON indicated that the "
                 "military convoy withdrew .")

_TEMPLATES = [
    "the {n1} in LOCATION {verb} {time} .",
    "{name} said that the {n1} was {adv}{adj} and {adj2} .",
    "the {adj} {n1} {verb} the {adj2} {n2} {time} .",
    "{subj} in LOCATION {present} the {n1} will be {adv}{adj} and {adj2} .",
    "it was a {adv}{adj} and {adj2} {n1} for the {n2} in LOCATION .",
    "the {n1} and the {n2} were {adv}{adj} {time} .",
    "{name} {verb} a {adj} plan for the {adj2} {n1} .",
    "{subj} {present} that the {n1} is {adv}{adj} for the {n2} .",
    "the report on the {n1} was {adv}{adj} and {adj2} , {subj} said .",
    "a {adj} {n1} {verb} the {n2} of LOCATION {time} .",
]


def _sentence(rng: np.random.Generator, family: list[str], sentiment: str, first: bool) -> str:
    pool = {"positive": POSITIVE, "negative": NEGATIVE, "neutral": NEUTRAL}[sentiment]
    n1, n2 = rng.choice(family, size=2, replace=False)
    adj, adj2 = rng.choice(pool, size=2, replace=False)
    adv = rng.choice(BOOSTERS) + " " if sentiment != "neutral" and rng.random() < 0.3 else ""
    text = rng.choice(_TEMPLATES).format(
        n1=n1, n2=n2, adj=adj, adj2=adj2, adv=adv, verb=rng.choice(VERBS),
        present=rng.choice(PRESENT), time=rng.choice(TIMES), name=rng.choice(NAMES),
        subj=rng.choice(SUBJECTS),
    )
    if not first and rng.random() < 0.5:
        text = rng.choice(CONNECTORS) + " " + text
    return text


def make_corpus(seed: int = 0, n_paragraphs: int = 400, sentences_per_paragraph: int = 5,
                p_positive: float = 0.2, p_negative: float = 0.15) -> list[list[str]]:
    """Return paragraphs as lists of sentence strings."""
    rng = np.random.default_rng(seed)
    names = list(FAMILIES)
    paragraphs = []
    for _ in range(n_paragraphs):
        family = FAMILIES[names[rng.integers(len(names))]]
        para = []
        for s in range(sentences_per_paragraph):
            u = rng.random()
            sentiment = "positive" if u < p_positive else "negative" if u < p_positive + p_negative else "neutral"
            para.append(_sentence(rng, family, sentiment, first=s == 0))
        paragraphs.append(para)
    return paragraphs


def write_corpus(path, paragraphs: list[list[str]]) -> Path:
    path = Path(path)
    path.write_text("\n\n".join("\n".join(p) for p in paragraphs) + "\n", encoding="utf-8")
    return path
