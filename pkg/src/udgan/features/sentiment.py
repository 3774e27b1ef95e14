"""Rule-based lexicon sentiment proportions in the style of VADER.

Per lexicon token, in order: negation window, booster adjustment, all-caps
amplification. Exclamation marks then amplify the dominant polarity and a
contrastive conjunction reweights tokens before (x0.5) and after (x1.5) it.
Proportions are ``S+ / Z``, ``S- / Z`` and ``N0 / Z`` with ``Z = S+ + S- + N0``,
where ``N0`` counts tokens that carry no sentiment (negators and boosters
included).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

_DATA = resources.files("udgan.features") / "data"


class SentimentAnalyzer(Protocol):
    def proportions(self, tokens: Sequence[str] | str) -> tuple[float, float, float]: ...


@dataclass(frozen=True)
class RuleConstants:
    negation_scalar: float = -0.74
    negation_window: int = 3
    booster_increment: float = 0.293
    booster_decrement: float = -0.293
    booster_distance_damping: tuple[float, ...] = (1.0, 0.95, 0.9)
    caps_increment: float = 0.733
    exclamation_increment: float = 0.292
    exclamation_max: int = 4
    contrast_before: float = 0.5
    contrast_after: float = 1.5
    contrastive: frozenset = frozenset({"but"})
    negators: frozenset = frozenset()
    boosters_up: frozenset = frozenset()
    boosters_down: frozenset = frozenset()


_FLOAT_KEYS = {"negation_scalar", "booster_increment", "booster_decrement", "caps_increment",
               "exclamation_increment", "contrast_before", "contrast_after"}
_INT_KEYS = {"negation_window", "exclamation_max"}
_SET_KEYS = {"contrastive", "negators", "boosters_up", "boosters_down"}


def parse_rules(text: str) -> RuleConstants:
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"rules line {lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in _FLOAT_KEYS:
            kw[key] = float(value)
        elif key in _INT_KEYS:
            kw[key] = int(value)
        elif key in _SET_KEYS:
            kw[key] = frozenset(w.strip().lower() for w in value.split(",") if w.strip())
        elif key == "booster_distance_damping":
            kw[key] = tuple(float(v) for v in value.split(","))
        else:
            raise ValueError(f"rules line {lineno}: unknown key {key!r}")
    return RuleConstants(**kw)


def parse_lexicon(text: str) -> dict[str, float]:
    lex = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.rstrip("\r").split("\t")
        if len(parts) < 2:
            raise ValueError(f"lexicon line {lineno}: expected token<TAB>valence")
        lex[parts[0]] = float(parts[1])
    return lex


@dataclass(frozen=True, eq=False)
class LexiconSentiment:
    lexicon: dict[str, float]
    rules: RuleConstants = field(default_factory=RuleConstants)

    @classmethod
    def from_files(cls, lexicon_path=None, rules_path=None) -> "LexiconSentiment":
        lex_text = (Path(lexicon_path).read_text(encoding="utf-8") if lexicon_path
                    else (_DATA / "vader_lexicon.tsv").read_text(encoding="utf-8"))
        rules_text = (Path(rules_path).read_text(encoding="utf-8") if rules_path
                      else (_DATA / "vader_rules.conf").read_text(encoding="utf-8"))
        return cls(parse_lexicon(lex_text), parse_rules(rules_text))

    def _is_negator(self, w: str) -> bool:
        return w in self.rules.negators or w.endswith("n't")

    def _booster(self, w: str) -> float:
        if w in self.rules.boosters_up:
            return self.rules.booster_increment
        if w in self.rules.boosters_down:
            return self.rules.booster_decrement
        return 0.0

    def valences(self, tokens: Sequence[str]) -> list[float | None]:
        """Rule-adjusted valence per token; ``None`` for tokens without sentiment."""
        r = self.rules
        words = list(tokens)
        lower = [w.lower() for w in words]
        n_caps = sum(w.isupper() for w in words)
        cap_diff = 0 < n_caps < len(words)
        vals: list[float | None] = []
        for i, w in enumerate(lower):
            v = self.lexicon.get(w)
            if v is None or self._is_negator(w) or self._booster(w) != 0.0:
                vals.append(None)
                continue
            for k in range(1, r.negation_window + 1):
                if i - k >= 0 and self._is_negator(lower[i - k]):
                    v *= r.negation_scalar
            for k, damp in enumerate(r.booster_distance_damping, 1):
                if i - k >= 0 and lower[i - k] not in self.lexicon:
                    s = self._booster(lower[i - k]) * damp
                    v += s if v >= 0 else -s
            if words[i].isupper() and cap_diff:
                v += r.caps_increment if v > 0 else -r.caps_increment
            vals.append(v)
        if any(w in r.contrastive for w in lower):
            pivot = next(i for i, w in enumerate(lower) if w in r.contrastive)
            vals = [v if v is None or i == pivot else v * (r.contrast_before if i < pivot else r.contrast_after)
                    for i, v in enumerate(vals)]
        return vals

    def sums(self, tokens: Sequence[str]) -> tuple[float, float, int]:
        """``(S+, S-, N0)`` after all rules."""
        vals = self.valences(tokens)
        s_pos = sum(v for v in vals if v is not None and v > 0)
        s_neg = -sum(v for v in vals if v is not None and v < 0)
        n0 = sum(1 for v in vals if v is None or v == 0)
        bangs = min(sum(t.count("!") for t in tokens), self.rules.exclamation_max)
        amp = bangs * self.rules.exclamation_increment
        if s_pos > s_neg:
            s_pos += amp
        elif s_neg > s_pos:
            s_neg += amp
        return s_pos, s_neg, n0

    def proportions(self, tokens: Sequence[str] | str) -> tuple[float, float, float]:
        if isinstance(tokens, str):
            tokens = tokens.split()
        return self._cached(tuple(tokens))

    @lru_cache(maxsize=65536)
    def _cached(self, tokens: tuple[str, ...]) -> tuple[float, float, float]:
        s_pos, s_neg, n0 = self.sums(tokens)
        z = s_pos + s_neg + n0
        if z == 0:
            return 0.0, 0.0, 1.0
        return s_pos / z, s_neg / z, n0 / z


def sentiment_proportions(lex: SentimentAnalyzer, s: Sequence[str] | str) -> tuple[float, float, float]:
    return lex.proportions(s)


_DEFAULT: LexiconSentiment | None = None


def default_analyzer() -> LexiconSentiment:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = LexiconSentiment.from_files()
    return _DEFAULT
