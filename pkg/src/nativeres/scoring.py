"""Answer scoring: answer-type rules, normalization, unit variants, EM and ANLS.

Short answers (number, date, identifier, phrase) are scored by exact match
after normalization; long ones (address, sentence) by ANLS. Golds carrying a
unit (``"9 cm"``, ``"$193"``) are expanded to the bare number and both unit
orders, with and without a space.

The unit lexicon, address keywords and date patterns live in
``data/scoring_rules.json`` and can be replaced via ``ScoringConfig.rules_path``.
"""

from __future__ import annotations

import json
import os
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Literal

from .errors import EmptyAnswerError, ParseError, ValidationError
from .io import iter_jsonl

_NUMBER = r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?"
_TRAILING_PUNCT = re.compile(r"[\s.!?;:。！？；：]+$")


class AnswerType(str, Enum):
    NUMBER = "number"
    DATE = "date"
    IDENTIFIER = "identifier"
    PHRASE = "phrase"
    ADDRESS = "address"
    SENTENCE = "sentence"


EM_TYPES = frozenset({AnswerType.NUMBER, AnswerType.DATE, AnswerType.IDENTIFIER, AnswerType.PHRASE})


@dataclass(frozen=True)
class Rules:
    currency_units: tuple[str, ...]
    measurement_units: tuple[str, ...]
    address_keywords: tuple[str, ...]
    date_patterns: tuple[re.Pattern[str], ...]
    suffix_unit: re.Pattern[str]
    prefix_unit: re.Pattern[str]

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> Rules:
        try:
            currency = tuple(u.lower() for u in obj["currency_units"])
            measure = tuple(u.lower() for u in obj["measurement_units"])
            address = tuple(k.lower() for k in obj["address_keywords"])
            dates = tuple(re.compile(p, re.IGNORECASE) for p in obj["date_patterns"])
        except (KeyError, TypeError, AttributeError, re.error) as exc:
            raise ValidationError(f"bad scoring rules: {exc}") from None

        def alternation(units: Iterable[str]) -> str:
            return "|".join(re.escape(u) for u in sorted(set(units), key=lambda u: (-len(u), u)))

        # Any unit may follow the number; only currencies and multi-letter
        # units may precede it, so identifiers like "A12" stay identifiers.
        suffix = re.compile(rf"^(?P<num>{_NUMBER})\s*(?P<unit>{alternation(currency + measure)})$", re.IGNORECASE)
        prefix_units = currency + tuple(u for u in measure if len(u) > 1)
        prefix = re.compile(rf"^(?P<unit>{alternation(prefix_units)})\s*(?P<num>{_NUMBER})$", re.IGNORECASE)
        return cls(currency, measure, address, dates, suffix, prefix)


@lru_cache(maxsize=8)
def load_rules(path: str | None = None) -> Rules:
    if path is None:
        text = resources.files("nativeres").joinpath("data/scoring_rules.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        return Rules.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scoring rules {path}: invalid JSON: {exc.msg}") from None


@dataclass(frozen=True)
class ScoringConfig:
    tau: float = 0.5
    sentence_tokens: int = 8
    rules_path: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError("tau must be in [0, 1]")
        if self.sentence_tokens < 1:
            raise ValidationError("sentence_tokens must be >= 1")

    @property
    def rules(self) -> Rules:
        return load_rules(self.rules_path)


DEFAULT = ScoringConfig()


# ---------------------------------------------------------------------------
# Normalization and variants


def _core(text: str) -> str:
    return _TRAILING_PUNCT.sub("", " ".join(text.split()))


def normalize(answer: str) -> str:
    """Case-fold, collapse whitespace, drop trailing sentence punctuation."""
    return _core(answer.casefold())


def _split_unit(text: str, rules: Rules) -> tuple[str, str] | None:
    m = rules.suffix_unit.match(text) or rules.prefix_unit.match(text)
    return (m["num"], m["unit"]) if m else None


def expand_variants(gold: str, cfg: ScoringConfig = DEFAULT) -> set[str]:
    core = _core(gold)
    parts = _split_unit(core, cfg.rules)
    if parts is None:
        return {core}
    num, unit = parts
    return {num, f"{num} {unit}", f"{num}{unit}", f"{unit} {num}", f"{unit}{num}"}


# ---------------------------------------------------------------------------
# Answer types


def classify_answer(gold: str, cfg: ScoringConfig = DEFAULT) -> AnswerType:
    text = normalize(gold)
    if not text:
        raise EmptyAnswerError("cannot classify an empty answer")
    rules = cfg.rules
    if any(p.match(text) for p in rules.date_patterns):
        return AnswerType.DATE
    if re.fullmatch(_NUMBER, text) or _split_unit(text, rules):
        return AnswerType.NUMBER
    tokens = text.split()
    if len(tokens) == 1 and re.search(r"\d", text) and re.search(r"[^\W\d_]", text):
        return AnswerType.IDENTIFIER
    if len(tokens) >= cfg.sentence_tokens:
        return AnswerType.SENTENCE
    if len(tokens) >= 2 and _has_address_keyword(text, rules):
        return AnswerType.ADDRESS
    return AnswerType.PHRASE


def _has_address_keyword(text: str, rules: Rules) -> bool:
    words = {w.strip(".,") for w in re.split(r"[\s,]+", text)}
    for kw in rules.address_keywords:
        if kw.isascii():
            if (" " in kw and kw in text) or kw in words or kw.rstrip(".") in words:
                return True
        elif kw in text:
            return True
    return False


# ---------------------------------------------------------------------------
# Metrics


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (two-row dynamic programme)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _gold_variants(golds: Iterable[str], cfg: ScoringConfig) -> list[str]:
    out: list[str] = []
    for g in golds:
        for v in sorted(expand_variants(g, cfg)):
            n = normalize(v)
            if n not in out:
                out.append(n)
    if not out:
        raise EmptyAnswerError("gold answer list is empty")
    return out


def _exact(pred: str, golds: Iterable[str], cfg: ScoringConfig) -> tuple[int, str | None]:
    p = normalize(pred)
    for v in _gold_variants(golds, cfg):
        if p == v:
            return 1, v
    return 0, None


def exact_match(pred: str, golds: Iterable[str], cfg: ScoringConfig = DEFAULT) -> int:
    return _exact(pred, golds, cfg)[0]


def nls(a: str, b: str) -> float:
    """Normalized Levenshtein similarity of two already-normalized strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _anls(pred: str, golds: Iterable[str], tau: float, cfg: ScoringConfig) -> tuple[float, str]:
    p = normalize(pred)
    best, best_gold = 0.0, None
    for v in _gold_variants(golds, cfg):
        s = nls(p, v)
        s = s if s >= tau else 0.0
        if best_gold is None or s > best:
            best, best_gold = s, v
    assert best_gold is not None
    return best, best_gold


def anls(pred: str, golds: Iterable[str], tau: float | None = None, cfg: ScoringConfig = DEFAULT) -> float:
    """Best thresholded similarity of ``pred`` against any gold (or gold variant)."""
    tau = cfg.tau if tau is None else tau
    if not 0.0 <= tau <= 1.0:
        raise ValidationError("tau must be in [0, 1]")
    return _anls(pred, golds, tau, cfg)[0]


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class ScoredAnswer:
    id: str
    answer_type: AnswerType
    metric: Literal["EM", "ANLS"]
    score: float
    matched: str | None
    prediction: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "answer_type": self.answer_type.value,
            "metric": self.metric,
            "score": self.score,
            "matched": self.matched,
            "prediction": self.prediction,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> ScoredAnswer:
        try:
            score = float(obj["score"])
            metric = obj["metric"]
            if metric not in ("EM", "ANLS") or not 0.0 <= score <= 1.0:
                raise ValueError(f"bad metric/score {metric!r}/{score!r}")
            return cls(
                id=str(obj["id"]),
                answer_type=AnswerType(obj["answer_type"]),
                metric=metric,
                score=score,
                matched=obj.get("matched"),
                prediction=obj.get("prediction", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad scored answer: {exc}") from None


def score_record(pred: str, record: Any, cfg: ScoringConfig = DEFAULT) -> ScoredAnswer:
    """Score one prediction against a record's golds.

    ``record`` needs ``id``, ``answers`` and optional ``answer_type``; an
    explicit type wins over the rule-based classification of the first gold.
    """
    golds = list(record.answers)
    if not golds or not any(normalize(g) for g in golds):
        raise EmptyAnswerError(f"record {record.id!r} has no non-empty gold answer")
    kind = AnswerType(record.answer_type) if record.answer_type else classify_answer(golds[0], cfg)
    if kind in EM_TYPES:
        score, matched = _exact(pred, golds, cfg)
        return ScoredAnswer(record.id, kind, "EM", float(score), matched, pred)
    value, matched_gold = _anls(pred, golds, cfg.tau, cfg)
    return ScoredAnswer(record.id, kind, "ANLS", value, matched_gold, pred)


def load_predictions(path: str | os.PathLike[str]) -> dict[str, str]:
    """Read ``{"id": ..., "prediction": ...}`` lines into an id -> prediction map."""
    preds: dict[str, str] = {}
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not isinstance(obj.get("prediction"), str):
            raise ParseError(lineno, "prediction lines need string fields 'id' and 'prediction'")
        if obj["id"] in preds:
            raise ParseError(lineno, f"duplicate prediction id {obj['id']!r}")
        preds[obj["id"]] = obj["prediction"]
    return preds


def load_scored(path: str | os.PathLike[str]) -> list[ScoredAnswer]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(ScoredAnswer.from_dict(obj))
        except ValidationError as exc:
            raise ParseError(lineno, str(exc)) from None
    return out
