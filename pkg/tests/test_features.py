import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from worked_example import SENT_I, SENT_J, TABLE
from wikivandal.features import (ANCILLARY_INDEX, DIFF_ADD, DIFF_SUB, N_ANCILLARY, RATIO_NEG, RATIO_POS,
                                 Featurizer, LabeledInstance, ScalingSpec, SparseDataset, SparseVector,
                                 VocabMap, ancillary_features, assemble, featurize_cases, fit_scaler,
                                 format_instance, parse_instance, read_dataset, scale, sign_split,
                                 word_delta, write_dataset)
from wikivandal.ingest import RevisionCase
from wikivandal.tokens import TokenCounts, count_tokens, tokenize


def case(prev=SENT_I, cur=SENT_J, comment="", ip=10, minor=False, merged=1, label="legitimate"):
    return RevisionCase(1, prev, cur, comment, ip, minor, merged, label)


def counts(d):
    return TokenCounts(dict(d))


# --- word_delta / sign_split -------------------------------------------------

def test_worked_example_delta():
    diff, ratio = word_delta(count_tokens(tokenize(SENT_I)), count_tokens(tokenize(SENT_J)))
    for word, i, j, d, r in TABLE:
        assert count_tokens(tokenize(SENT_I))[word] == (i or 0)
        assert count_tokens(tokenize(SENT_J))[word] == (j or 0)
        assert diff.get(word) == d
        if r is not None:
            assert round(ratio[word], 4) == r
    assert set(diff) == {w for w, *_, d, _r in TABLE if d is not None}
    # blank ratio cell: the rule gives the same value as the identical rows
    assert ratio["of"] == -1.0


@pytest.mark.parametrize("i, j, d, r", [(3, 5, 2, 5 / 3), (1, 0, -1, -1.0), (0, 2, 2, 2.0), (4, 1, -3, -4.0)])
def test_delta_cells(i, j, d, r):
    diff, ratio = word_delta(counts({"w": i} if i else {}), counts({"w": j} if j else {}))
    assert diff == {"w": d}
    assert ratio["w"] == pytest.approx(r, rel=1e-15)


def test_unchanged_word_absent():
    diff, ratio = word_delta(counts({"science": 1}), counts({"science": 1}))
    assert diff == {} and ratio == {}


_COUNTS = st.dictionaries(st.sampled_from("abcdef"), st.integers(1, 6), max_size=6)


@given(_COUNTS, _COUNTS)
def test_delta_antisymmetric(a, b):
    d1, r1 = word_delta(counts(a), counts(b))
    d2, r2 = word_delta(counts(b), counts(a))
    assert d2 == {w: -v for w, v in d1.items()}
    assert r2 == {w: -v for w, v in r1.items()}


def test_sign_split():
    assert sign_split({"a": -1}, {}) == {("a", DIFF_SUB): 1.0}
    assert sign_split({",": 2}, {",": 5 / 3}) == {(",", DIFF_ADD): 2.0, (",", RATIO_POS): 5 / 3}
    assert sign_split({}, {}) == {}
    assert sign_split({"x": -2}, {"x": -2.0}) == {("x", DIFF_SUB): 2.0, ("x", RATIO_NEG): 2.0}


@given(_COUNTS, _COUNTS)
def test_sign_split_positive(a, b):
    assert all(v > 0 for v in sign_split(*word_delta(counts(a), counts(b))).values())


# --- ancillary ---------------------------------------------------------------

def anc(c):
    return ancillary_features(c, tokenize(c.prev_text), tokenize(c.cur_text), tokenize(c.comment))


def test_empty_text_flag():
    assert anc(case(cur=""))[ANCILLARY_INDEX["empty_text"]] == 1.0
    assert ANCILLARY_INDEX["empty_text"] not in anc(case())


def test_ip_one_hot():
    a = anc(case(ip=192))
    ip_slots = [k for k in a if 4 <= k < 260]
    assert ip_slots == [ANCILLARY_INDEX["ip_octet1=192"]]
    assert a[ip_slots[0]] == 1.0


def test_merged_minus_one():
    assert anc(case(merged=3))[ANCILLARY_INDEX["merged_minus_one"]] == 2.0
    assert ANCILLARY_INDEX["merged_minus_one"] not in anc(case(merged=1))


def test_comment_and_minor_and_counts():
    a = anc(case(prev="a b c", cur="a b", comment="fix typo", minor=True))
    assert a[ANCILLARY_INDEX["has_comment"]] == 1.0
    assert a[ANCILLARY_INDEX["minor"]] == 1.0
    assert a[ANCILLARY_INDEX["prev_text_words"]] == 3.0
    assert a[ANCILLARY_INDEX["cur_text_words"]] == 2.0
    assert a[ANCILLARY_INDEX["text_words_removed"]] == 1.0
    assert a[ANCILLARY_INDEX["text_chars_removed"]] == 2.0
    assert ANCILLARY_INDEX["text_words_added"] not in a
    assert a[ANCILLARY_INDEX["comment_words"]] == 2.0
    assert a[ANCILLARY_INDEX["comment_chars"]] == 8.0


@pytest.mark.parametrize("prev, cur, expected", [
    ("intro", "intro\n==External links==\n* x", True),
    ("a ==External links== b", "a ==External links== b c", False),
    ("see external sources", "see sources", True),
    ("a", "b", False),
])
def test_external_links_flag(prev, cur, expected):
    assert (anc(case(prev=prev, cur=cur)).get(ANCILLARY_INDEX["external_links_change"], 0.0) == 1.0) is expected


# --- scaling -----------------------------------------------------------------

def test_scale_functions():
    atan, binary = ScalingSpec("atan"), ScalingSpec("binary")
    assert scale(1.0, atan, 0) == pytest.approx(0.5, abs=1e-15)
    assert scale(5.0, binary, 0) == 1.0
    assert scale(0.0, binary, 0) == 0.0
    ll = ScalingSpec("log-lin", {3: 7.0})
    assert scale(7.0, ll, 3) == 1.0
    assert scale(3.0, ll, 3) == pytest.approx(math.log(4) / math.log(8), rel=1e-15)
    assert scale(50.0, ll, 3) == 1.0
    # unseen in training: clamps to 1 for any positive value
    assert scale(0.25, ll, 99) == 1.0
    assert scale(0.0, ll, 99) == 0.0


@given(st.floats(0, 1e6), st.sampled_from(["atan", "binary", "log-lin"]))
def test_scale_range(x, kind):
    spec = ScalingSpec(kind, {0: 10.0} if kind == "log-lin" else {})
    y = scale(x, spec, 0)
    assert 0.0 <= y <= 1.0
    assert (y == 0.0) == (x == 0.0) or x < 1e-300


def test_scale_rejects_negative():
    with pytest.raises(ValueError):
        scale(-1.0, ScalingSpec("atan"), 0)


def test_fit_scaler():
    spec = fit_scaler("log-lin", [{4: 1.0}, {4: 7.0, 5: 2.0}, {4: 3.0}])
    assert spec.per_feature_max == {4: 7.0, 5: 2.0}
    assert fit_scaler("atan", []).per_feature_max == {}
    with pytest.raises(ValueError):
        fit_scaler("log-lin", [])


def test_scaling_spec_round_trip():
    spec = ScalingSpec("log-lin", {1: 7.0, 12: 0.1 + 0.2})
    buf = io.StringIO()
    spec.save(buf)
    buf.seek(0)
    assert ScalingSpec.load(buf) == spec


# --- vocabulary ---------------------------------------------------------------

def test_vocab_slots_bijective():
    vocab = VocabMap(["a", "b", "c"])
    seen = set()
    for fid in range(vocab.n_features):
        seen.add(vocab.describe(fid))
    assert len(seen) == vocab.n_features
    assert vocab.describe(vocab.slot("b", RATIO_POS)) == ("b", "ratio_pos")
    assert vocab.describe(vocab.ancillary_offset) == ("empty_text", "ancillary")
    assert vocab.describe(vocab.comment_offset + 2) == ("c", "comment")
    assert vocab.n_features == 4 * 3 + N_ANCILLARY + 3


def test_vocab_round_trip():
    vocab = VocabMap.build([case(comment="fix [[link]]")])
    buf = io.StringIO()
    vocab.save(buf)
    text = buf.getvalue()
    assert text.startswith("#")
    assert VocabMap.load(io.StringIO(text)) == vocab


# --- assembly -----------------------------------------------------------------

def test_worked_example_binary():
    vocab = VocabMap.build([case()])
    inst = assemble(case(), vocab, ScalingSpec("binary"))
    words = {}
    for fid, v in zip(inst.features.ids, inst.features.values):
        if fid < vocab.ancillary_offset:
            words[vocab.describe(fid)] = v
    expected = {(w, "diff_add" if d > 0 else "diff_sub"): 1.0 for w, _i, _j, d, _r in TABLE if d is not None}
    assert words == expected


def test_worked_example_atan():
    vocab = VocabMap.build([case()])
    inst = assemble(case(), vocab, ScalingSpec("atan"))
    vals = inst.features.to_dict()
    assert vals[vocab.slot(",", DIFF_ADD)] == pytest.approx(0.7048327646991335, rel=1e-14)
    assert vals[vocab.slot(",", RATIO_POS)] == pytest.approx(math.atan(5 / 3) * 2 / math.pi, rel=1e-14)


def test_identical_texts_only_ancillary():
    vocab = VocabMap.build([case()])
    inst = assemble(case(prev="same text", cur="same text"), vocab, ScalingSpec("atan"))
    assert all(vocab.ancillary_offset <= fid < vocab.comment_offset for fid in inst.features.ids)


def test_unknown_words_dropped():
    vocab = VocabMap(["known"])
    inst = assemble(case(prev="known", cur="known unknown"), vocab, ScalingSpec("binary"))
    assert all(fid >= vocab.ancillary_offset for fid in inst.features.ids)


def test_comment_words_in_comment_block():
    vocab = VocabMap(["fix", "typo"])
    inst = assemble(case(prev="a", cur="b", comment="fix fix typo"), vocab, ScalingSpec("atan"))
    vals = inst.features.to_dict()
    assert vals[vocab.comment_offset + 0] == pytest.approx(math.atan(2) * 2 / math.pi)
    assert vals[vocab.comment_offset + 1] == pytest.approx(0.5)


def test_label_mapping():
    vocab = VocabMap(["x"])
    assert assemble(case(label="vandalism"), vocab, ScalingSpec("binary")).label == 1
    assert assemble(case(), vocab, ScalingSpec("binary")).label == -1


_WORDS = st.lists(st.sampled_from(["a", "b", "c", "d", ",", "[["]), max_size=15).map(" ".join)


@given(_WORDS, _WORDS, _WORDS)
def test_assembled_values_in_unit_interval(prev, cur, comment):
    c = case(prev=prev, cur=cur, comment=comment, merged=2)
    vocab = VocabMap(["a", "b", "c", "d", ",", "[["])
    for kind in ("atan", "binary"):
        inst = assemble(c, vocab, ScalingSpec(kind))
        assert all(0 < v <= 1 for v in inst.features.values)
        assert list(inst.features.ids) == sorted(set(inst.features.ids))
        assert assemble(c, vocab, ScalingSpec(kind)) == inst


@given(_WORDS, _WORDS)
def test_binary_ratio_slots_equal_diff_slots(prev, cur):
    """Under binary scaling the ratio half carries the same information as the diff half."""
    vocab = VocabMap(["a", "b", "c", "d", ",", "[["])
    raw = Featurizer(vocab, ScalingSpec("atan")).raw(case(prev=prev, cur=cur))
    binary = ScalingSpec("binary")
    for base in range(len(vocab)):
        for d_kind, r_kind in ((DIFF_ADD, RATIO_POS), (DIFF_SUB, RATIO_NEG)):
            d = scale(raw.get(base * 4 + d_kind, 0.0), binary, 0)
            r = scale(raw.get(base * 4 + r_kind, 0.0), binary, 0)
            assert d == r


def test_binary_has_half_the_word_entries():
    vocab = VocabMap.build([case()])
    n_words = lambda inst: sum(fid < vocab.ancillary_offset for fid in inst.features.ids)
    a = assemble(case(), vocab, ScalingSpec("atan"))
    b = assemble(case(), vocab, ScalingSpec("binary"))
    assert n_words(b) * 2 == n_words(a)


def test_featurize_cases_fits_loglin_on_training():
    cases = [case(prev="a", cur="a a a"), case(prev="a", cur="a a")]
    vocab = VocabMap.build(cases)
    inst, spec = featurize_cases(cases, vocab, "log-lin")
    assert spec.per_feature_max[vocab.slot("a", DIFF_ADD)] == 2.0
    assert inst[0].features.to_dict()[vocab.slot("a", DIFF_ADD)] == 1.0


# --- sparse vectors, datasets and file format ---------------------------------

def test_sparse_vector_invariants():
    with pytest.raises(ValueError):
        SparseVector((2, 1), (1.0, 1.0))
    with pytest.raises(ValueError):
        SparseVector((1,), (0.0,))
    assert SparseVector.from_dict({3: 1.0, 1: 0.0, 0: 2.0}) == SparseVector((0, 3), (2.0, 1.0))


def test_dataset_line_round_trip():
    inst = LabeledInstance(SparseVector((0, 5, 17), (1.0, 0.123456789012, 2 / 3)), 1)
    line = format_instance(inst)
    assert line == "+1 0:1 5:0.123456789 17:0.666666667"
    back = parse_instance(line)
    assert back.label == 1 and back.features.ids == (0, 5, 17)
    assert parse_instance("-1").features == SparseVector()


def test_dataset_file_round_trip():
    insts = [LabeledInstance(SparseVector((1, 2), (0.5, 1.0)), -1), LabeledInstance(SparseVector(), 1)]
    buf = io.StringIO()
    write_dataset(insts, buf)
    assert read_dataset(io.StringIO(buf.getvalue())) == insts


def test_sparse_dataset_subset_and_dense(rng):
    X = rng.normal(size=(9, 6)) * (rng.random((9, 6)) < 0.4)
    y = np.where(rng.random(9) < 0.5, 1, -1)
    ds = SparseDataset.from_dense(X, y)
    np.testing.assert_array_equal(ds.to_dense(), X)
    rows = [7, 0, 3]
    sub = ds.subset(rows)
    np.testing.assert_array_equal(sub.to_dense(), X[rows])
    np.testing.assert_array_equal(sub.labels, y[rows])
    again = SparseDataset.from_instances(ds.instances(), 6)
    np.testing.assert_array_equal(again.to_dense(), X)
