import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures.metric_golden import GOLDEN
from vidqa.metrics import (
    SUFFIXES, EvalItem, bleu, evaluate_corpus, keyword_accuracy, meteor, report_schema, rouge_2, rouge_l, stem,
)
from vidqa.text import tokenize

WORDS = st.lists(st.sampled_from("the a lesion polyp snare is visible clear in on colon band yes no".split()),
                 min_size=1, max_size=10)


@pytest.mark.parametrize("case", GOLDEN, ids=[g["cand"] or "<empty>" for g in GOLDEN])
def test_golden_fixture(case):
    c, r = tokenize(case["cand"]), tokenize(case["ref"])
    assert abs(bleu(c, r, 4) - case["bleu4"]) < 1e-6
    assert abs(bleu(c, r, 3) - case["bleu3"]) < 1e-6
    assert abs(rouge_l(c, r) - case["rouge_l"]) < 1e-6
    assert abs(rouge_2(c, r) - case["rouge_2"]) < 1e-6
    assert abs(meteor(c, r) - case["meteor"]) < 1e-6
    assert keyword_accuracy(case["cand"], case["keywords"]) == case["kacc"]


def test_golden_fixture_size():
    assert len(GOLDEN) >= 10


def test_bleu_worked_example():
    got = bleu(tokenize("the cat"), tokenize("the cat sat on the mat"))
    assert abs(got - math.exp(-2) * 0.5) < 1e-12
    assert abs(got - 0.0677) < 1e-4


def test_empty_candidate_scores_zero():
    ref = tokenize("a catheter is visible")
    assert bleu([], ref) == rouge_l([], ref) == meteor([], ref) == rouge_2([], ref) == 0.0


def test_rouge_l_examples():
    assert abs(rouge_l(["the", "cat"], ["the", "cat", "sat"]) - 0.8) < 1e-12
    assert rouge_l(["a", "b"], ["c", "d"]) == 0.0


def test_meteor_examples():
    three = ["no", "tool", "visible"]
    assert abs(meteor(three, three) - 0.9815) < 1e-4
    assert meteor(["x"], ["y"]) == 0.0
    assert stem("visibly") == stem("visible") == "visib"
    assert meteor(["visibly"], ["visible"]) > 0


def test_suffix_table_shape():
    assert len(SUFFIXES) == 12
    assert stem("bed") == "bed"  # stem would drop below three letters
    assert stem("operational") == "oper"


def test_keyword_accuracy_examples():
    assert keyword_accuracy("a catheter is visible", ["catheter"]) == 1
    assert keyword_accuracy("a catheterization device", ["catheter"]) == 0
    assert keyword_accuracy("narrow band imaging active", ["narrow", "band"]) == 1
    assert keyword_accuracy("narrow imaging", ["narrow", "band"]) == 0
    assert keyword_accuracy("anything", []) is None


def test_identity_scores_one():
    x = tokenize("the lesion is small measuring 6 mm")
    assert bleu(x, x) == rouge_l(x, x) == rouge_2(x, x) == 1.0
    assert keyword_accuracy(" ".join(x), ["small"]) == 1


def test_corpus_examples():
    perfect = [EvalItem("yes the snare is being used", "yes the snare is being used", ("snare",))] * 3
    rep = evaluate_corpus(perfect)
    assert rep.overall["bleu4"] == rep.overall["rouge_l"] == rep.overall["k_acc"] == 100.0
    single = evaluate_corpus([EvalItem("the cat sat", "the cat", ("sat",))])
    assert single.overall["rouge_l"] == 80.0 and single.overall["k_acc"] == 0.0


def test_corpus_excludes_items_without_keywords():
    items = [EvalItem("a b", "a b", ("a",)), EvalItem("c d", "x y", ())]
    rep = evaluate_corpus(items)
    assert rep.overall["k_acc"] == 100.0 and rep.overall["n"] == 2


def test_corpus_groups_and_schema():
    jsonschema = pytest.importorskip("jsonschema")
    items = [EvalItem("yes", "yes", ("yes",), "flushing", "Operation Notes"),
             EvalItem("no", "yes", ("no",), "occlusion", "Operation Notes", out_of_template=True),
             EvalItem("advancing", "advancing", ("advancing",), "scope_motion", "Movement")]
    rep = evaluate_corpus(items)
    doc = json.loads(rep.dumps())
    jsonschema.validate(doc, report_schema())
    assert doc["in_template"]["n"] == 2 and doc["out_of_template"]["n"] == 1
    assert set(doc["by_domain"]) == {"Operation Notes", "Movement"}
    header = rep.table().splitlines()[0].split()
    assert header[1:5] == ["BLE-4", "ROU-L", "MET", "K-ACC"]


def test_empty_corpus_and_reference_rejected():
    with pytest.raises(ValueError):
        evaluate_corpus([])
    with pytest.raises(ValueError):
        EvalItem("", "x")


@settings(max_examples=200, deadline=None)
@given(WORDS, WORDS)
def test_scores_bounded(c, r):
    for fn in (bleu, rouge_l, rouge_2, meteor):
        assert 0.0 <= fn(c, r) <= 1.0 + 1e-12


@settings(max_examples=200, deadline=None)
@given(WORDS)
def test_identity_property(x):
    assert rouge_l(x, x) == 1.0
    m = len(x)
    assert abs(meteor(x, x) - (1 - 0.5 / m**3)) < 1e-12
    if m >= 4:
        assert bleu(x, x) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text("abcdefgh", min_size=1, max_size=4), min_size=4, max_size=9, unique=True))
def test_reversal_lowers_bleu(x):
    assert bleu(x[::-1], x) < bleu(x, x)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(WORDS, WORDS), min_size=1, max_size=6))
def test_macro_average_within_item_range(pairs):
    items = [EvalItem(" ".join(r), " ".join(c), (r[0],)) for c, r in pairs]
    rep = evaluate_corpus(items)
    for m in ("bleu4", "rouge_l", "meteor", "k_acc"):
        vals = [100 * row[m] for row in rep.items]
        assert min(vals) - 0.005 <= rep.overall[m] <= max(vals) + 0.005


@settings(max_examples=100, deadline=None)
@given(WORDS, st.sampled_from(["upper", "title", "spaced"]))
def test_keyword_accuracy_casing_and_punctuation(words, style):
    text = " ".join(words) + "."
    variant = {"upper": text.upper(), "title": text.title(), "spaced": " ".join(words) + " ."}[style]
    kws = [words[0]]
    assert keyword_accuracy(text, kws) == keyword_accuracy(variant, kws) == 1
