import json
import random
import string
import sys
from functools import lru_cache

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nativeres.errors import EmptyAnswerError, ParseError, ValidationError
from nativeres.manifest import Record
from nativeres.scoring import (
    AnswerType,
    ScoredAnswer,
    ScoringConfig,
    anls,
    classify_answer,
    exact_match,
    expand_variants,
    levenshtein,
    load_predictions,
    load_scored,
    nls,
    normalize,
    score_record,
)

text = st.text(alphabet=string.ascii_lowercase[:6] + " .", max_size=20)


def lev_oracle(a: str, b: str) -> int:
    """Textbook recursive definition, memoized."""
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4000))

    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def _rec(answers, answer_type=None):
    return Record("r1", "x.png", "q", tuple(answers), answer_type=answer_type)


# --- classification -------------------------------------------------------------


@pytest.mark.parametrize(
    "gold,kind",
    [
        ("2021-03-04", AnswerType.DATE),
        ("March 4, 2021", AnswerType.DATE),
        ("193 $", AnswerType.NUMBER),
        ("$193", AnswerType.NUMBER),
        ("9 cm", AnswerType.NUMBER),
        ("1,234.5", AnswerType.NUMBER),
        ("A12", AnswerType.IDENTIFIER),
        ("paris", AnswerType.PHRASE),
        ("The quick brown fox jumps over the lazy dog today", AnswerType.SENTENCE),
        ("12 Main Street, Springfield", AnswerType.ADDRESS),
    ],
)
def test_classify(gold, kind):
    assert classify_answer(gold) is kind


def test_classify_empty():
    with pytest.raises(EmptyAnswerError):
        classify_answer("   ")


# --- normalization and variants ---------------------------------------------------


@pytest.mark.parametrize("raw,norm", [("  Hello   World. ", "hello world"), ("9 CM", "9 cm"), ("", ""), ("Yes!?", "yes")])
def test_normalize(raw, norm):
    assert normalize(raw) == norm


@given(st.text(max_size=30))
def test_normalize_idempotent(s):
    assert normalize(normalize(s)) == normalize(s)


def test_variants():
    assert expand_variants("9 cm") == {"9", "9 cm", "9cm", "cm 9", "cm9"}
    assert {"193", "193 $", "$ 193"} <= expand_variants("$193")
    assert expand_variants("paris") == {"paris"}


# --- metrics ------------------------------------------------------------------------


def test_exact_match_examples():
    assert exact_match("9cm", ["9 cm"]) == 1
    assert exact_match("nine", ["9"]) == 0
    assert exact_match("", ["x"]) == 0
    assert exact_match("Paris.", ["paris"]) == 1


@pytest.mark.parametrize("a,b,d", [("abc", "abc", 0), ("kitten", "sitting", 3), ("", "abc", 3), ("flaw", "lawn", 2)])
def test_levenshtein_examples(a, b, d):
    assert levenshtein(a, b) == d == lev_oracle(a, b)


def test_anls_examples():
    assert anls("sitting", ["sitting"]) == 1.0
    assert abs(anls("kitten", ["sitting"], tau=0.5) - (1 - 3 / 7)) <= 1e-9
    assert anls("xyz", ["sitting"], tau=0.5) == 0.0
    assert anls("kitten", ["sitting", "kitten"]) == 1.0
    with pytest.raises(ValidationError):
        anls("a", ["a"], tau=1.5)


def test_levenshtein_matches_oracle_on_random_pairs():
    rng = random.Random(11)
    for _ in range(300):
        a = "".join(rng.choices("abcd", k=rng.randint(0, 30)))
        b = "".join(rng.choices("abcd", k=rng.randint(0, 30)))
        assert levenshtein(a, b) == lev_oracle(a, b)


@given(text, text)
def test_levenshtein_symmetric(a, b):
    assert levenshtein(a, b) == levenshtein(b, a)


@given(text, text, text)
def test_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


@given(text, st.lists(text.filter(lambda s: normalize(s)), min_size=1, max_size=3))
def test_em_implies_perfect_anls(pred, golds):
    if exact_match(pred, golds) == 1:
        assert anls(pred, golds) == 1.0
    assert 0.0 <= anls(pred, golds) <= 1.0


@given(st.integers(1, 12), st.data())
def test_anls_non_increasing_in_distance(n, data):
    # same length strings: score falls as edit distance grows
    gold = "a" * n
    d1 = data.draw(st.integers(0, n))
    d2 = data.draw(st.integers(d1, n))
    p1, p2 = "b" * d1 + "a" * (n - d1), "b" * d2 + "a" * (n - d2)
    assert nls(p1, gold) >= nls(p2, gold)
    assert anls(p1, [gold]) >= anls(p2, [gold])


# --- records -------------------------------------------------------------------------


def test_score_number():
    s = score_record("2021", _rec(["2021"], "number"))
    assert (s.metric, s.score) == ("EM", 1.0)


def test_score_address():
    gold, pred = "12 main st springfield", "12 main street springfield"
    s = score_record(pred, _rec([gold], "address"))
    assert s.metric == "ANLS"
    assert s.score == pytest.approx(1 - lev_oracle(pred, gold) / max(len(pred), len(gold)), abs=1e-12)


def test_score_currency_variant():
    s = score_record("193 $", _rec(["$193"]))
    assert (s.metric, s.score) == ("EM", 1.0)


def test_score_needs_gold():
    with pytest.raises(EmptyAnswerError):
        score_record("x", _rec([" "]))


def test_custom_rules(tmp_path):
    rules = {"currency_units": ["zł"], "measurement_units": ["px"], "address_keywords": ["ulica"], "date_patterns": []}
    p = tmp_path / "rules.json"
    p.write_text(json.dumps(rules))
    cfg = ScoringConfig(rules_path=str(p))
    assert exact_match("12", ["12 px"], cfg) == 1
    assert exact_match("12", ["12 cm"], cfg) == 0
    assert classify_answer("2021-03-04", cfg) is not AnswerType.DATE


def test_prediction_and_scored_files(tmp_path):
    p = tmp_path / "preds.jsonl"
    p.write_text('{"id": "a", "prediction": "x"}\n{"id": "b", "prediction": "y"}\n')
    assert load_predictions(p) == {"a": "x", "b": "y"}
    p.write_text('{"id": "a", "prediction": "x"}\n{"id": "a", "prediction": "y"}\n')
    with pytest.raises(ParseError):
        load_predictions(p)
    s = ScoredAnswer("a", AnswerType.PHRASE, "EM", 1.0, "x", "x")
    q = tmp_path / "scored.jsonl"
    q.write_text(json.dumps(s.to_dict()) + "\n" + '{"id": "b", "metric": "EM", "score": 2}\n')
    with pytest.raises(ParseError) as exc:
        load_scored(q)
    assert exc.value.line == 2
    q.write_text(json.dumps(s.to_dict()) + "\n")
    assert load_scored(q) == [s]
