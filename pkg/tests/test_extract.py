import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densched.core import Reject, TokenSpan
from densched.extract import (
    EmptyCorpusError,
    RuleError,
    RuleSet,
    build_sample,
    density_stats,
    dumps_record,
    extract_code_dense,
    extract_dense,
    extract_math_dense,
    import_annotations,
    load_rules,
    merge_spans,
    sample_to_record,
    spans_to_indicator,
    tokenize,
)


def texts(answer, spans):
    return [answer[s.start:s.end] for s in spans]


def test_code_example_spans():
    answer = "if a < b:\n    return a + b"
    spans = extract_code_dense(answer)
    assert spans == [TokenSpan(3, 8), TokenSpan(21, 26)]
    assert texts(answer, spans) == ["a < b", "a + b"]


def test_code_no_rule_fires():
    assert extract_code_dense("x = 1") == []


def test_code_while_and_return():
    answer = "while n > 0:\n    n -= 1\nreturn n"
    assert texts(answer, extract_code_dense(answer)) == ["n > 0", "n"]


def test_code_ternary_guard():
    answer = "def sign(x):\n    y = 1 if x > 0 else -1\n    return y"
    assert texts(answer, extract_code_dense(answer)) == ["x > 0", "y"]


def test_math_example_spans():
    answer = "He has 3 + 4 = 7 apples. #### 7"
    spans = extract_math_dense(answer)
    assert texts(answer, spans) == ["3 + 4 = 7", "7"]
    assert spans[-1] == TokenSpan(len(answer) - 1, len(answer))


def test_math_no_numbers():
    assert extract_math_dense("The reasoning is qualitative.") == []


def test_math_two_chains_and_marker():
    answer = "2 * 3 = 6 and 6 - 1 = 5. #### 5"
    spans = extract_math_dense(answer)
    assert texts(answer, spans) == ["2 * 3 = 6", "6 - 1 = 5", "5"]
    assert all(a.end <= b.start for a, b in zip(spans, spans[1:]))


def test_math_calculator_annotation():
    answer = "She has 4 * 3 = <<4*3=12>>12 eggs.\n#### 12"
    got = texts(answer, extract_math_dense(answer))
    assert "4*3=12" in got and got[-1] == "12"


def test_merge_spans_overlaps_and_adjacency():
    # overlapping spans merge; touching ones stay separate but disjoint
    assert merge_spans([(5, 8), (0, 3), (2, 4), (8, 9)]) == [TokenSpan(0, 4), TokenSpan(5, 8), TokenSpan(8, 9)]
    assert merge_spans([(3, 3)]) == []


def test_indicator_examples():
    offs = [TokenSpan(0, 2), TokenSpan(3, 4), TokenSpan(5, 6)]
    assert spans_to_indicator([TokenSpan(3, 6)], offs).tolist() == [0, 1, 1, 0]
    assert spans_to_indicator([], offs).tolist() == [0, 0, 0, 0]
    assert spans_to_indicator([TokenSpan(1, 2)], offs).tolist() == [1, 0, 0, 0]
    assert spans_to_indicator([], offs, eos_is_dense=True).tolist() == [0, 0, 0, 1]


def test_rules_load_and_validate(tmp_path):
    assert load_rules("code").domain.value == "code"
    assert load_rules("math").domain.value == "math"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"domain": "code", "rules": [{"id": "x", "kind": "regex", "pattern": "("}]}))
    with pytest.raises(RuleError):
        load_rules(bad)
    with pytest.raises(RuleError):
        RuleSet.from_dict({"domain": "code"})
    custom = tmp_path / "r.json"
    custom.write_text(json.dumps({"domain": "other", "rules": [
        {"id": "kw", "kind": "regex", "pattern": "key", "capture": "whole_match"}]}))
    rs = load_rules(custom)
    assert extract_dense("a key here", rs) == [TokenSpan(2, 5)]
    assert load_rules(str(custom)).to_dict() == rs.to_dict()


def test_import_valid_records():
    recs = [{"id": str(i), "prompt": "p", "answer": "a b c", "domain": "code", "spans": [[0, 1]]} for i in range(3)]
    rejects = []
    assert len(list(import_annotations(recs, rejects))) == 3
    assert rejects == []


def test_import_span_out_of_bounds():
    rejects = []
    recs = [{"id": "r", "prompt": "p", "answer": "abc", "domain": "math", "spans": [[1, 9]]}]
    assert list(import_annotations(recs, rejects)) == []
    assert len(rejects) == 1 and isinstance(rejects[0], Reject)
    assert rejects[0].reasons == ("span out of bounds",)


def test_import_empty_spans_is_uniform():
    [s] = import_annotations([{"id": "r", "prompt": "p", "answer": "x = 1", "domain": "code", "spans": []}])
    assert set(s.indicator) == {0}


def test_import_rejects_bad_types():
    rejects = []
    recs = [{"id": "r", "prompt": "p", "answer": "abc", "domain": "poetry"},
            {"id": 5, "prompt": "p", "answer": "abc", "domain": "code"},
            {"id": "q", "prompt": "p", "answer": "abc", "domain": "code", "spans": [[0, "1"]]}]
    assert list(import_annotations(recs, rejects)) == []
    assert len(rejects) == 3


def test_round_trip_byte_identical(code_sample):
    line = dumps_record(sample_to_record(code_sample))
    [again] = import_annotations([json.loads(line)])
    assert again == code_sample
    assert dumps_record(sample_to_record(again)) == line


def test_custom_offsets_respected():
    answer = "abcdef"
    s = build_sample("x", "p", answer, "other", [(2, 3)], token_offsets=[[0, 3], [3, 6]])
    assert [t for t, _ in s.tokens] == ["abc", "def"]
    assert s.indicator == (1, 0, 0)


def test_density_stats():
    offs = [TokenSpan(i, i + 1) for i in range(0, 9, 2)]
    answer = "a b c d e"
    zero = build_sample("z", "p", answer, "code")
    assert density_stats([zero])["code"].rho == 0
    # 6 maskable positions each; 1 dense -> 1/6, 2 dense -> 2/6
    a = build_sample("a", "p", answer, "math", [(0, 1)])
    b = build_sample("b", "p", answer, "math", [(0, 3)])
    assert density_stats([a, b])["math"].rho == pytest.approx(0.25)
    assert sum(density_stats([a, b])["math"].histogram) == 2
    assert len(offs) == 5
    with pytest.raises(EmptyCorpusError):
        density_stats([])


def test_tokenize_offsets_cover_text():
    text = "for x in xs:\n    y += x*2"
    for tok, span in tokenize(text):
        assert text[span.start:span.end] == tok


# --- properties --------------------------------------------------------------

ALPHABET = "ab01 <>=+-*/#:\n\t.()ifelsreturnwhile"
CODE_RULES = load_rules("code")
MATH_RULES = load_rules("math")


def check_structure(text, spans):
    for s in spans:
        assert 0 <= s.start < s.end <= len(text)
    for a, b in zip(spans, spans[1:]):
        assert a.end <= b.start


fragments = st.lists(
    st.sampled_from(["if ", "elif ", "while ", "for ", "return ", " else ", "<<", ">>", "#### ",
                     "1", "2 ", "+ ", "= ", ":", "\n", "    ", "x", " ", "3.5", "*"]),
    max_size=30,
).map("".join)


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.text(ALPHABET, max_size=80), fragments))
def test_extractor_structure(text):
    check_structure(text, extract_dense(text, CODE_RULES))
    check_structure(text, extract_dense(text, MATH_RULES))


@settings(max_examples=200, deadline=None)
@given(st.text(ALPHABET, min_size=1, max_size=60), st.data())
def test_indicator_monotone(text, data):
    n = len(text)
    pair = st.tuples(st.integers(0, n - 1), st.integers(1, n)).filter(lambda p: p[0] < p[1])
    spans = [TokenSpan(*p) for p in data.draw(st.lists(pair, max_size=4))]
    extra = TokenSpan(*data.draw(pair))
    offs = [o for _, o in tokenize(text)]
    before = spans_to_indicator(spans, offs)
    after = spans_to_indicator(spans + [extra], offs)
    assert np.all(after >= before)
    # brute-force oracle for the >= 1 character overlap rule
    want = [int(any(o.overlaps(s) for s in spans)) for o in offs] + [0]
    assert before.tolist() == want


@settings(max_examples=100, deadline=None)
@given(fragments)
def test_import_round_trip_property(text):
    s = build_sample("id", "p", text, "math", extract_math_dense(text))
    line = dumps_record(sample_to_record(s))
    [again] = import_annotations([json.loads(line)])
    assert dumps_record(sample_to_record(again)) == line
